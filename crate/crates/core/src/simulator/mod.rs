//! Deterministic discrete-event simulation of an asynchronous network.
//!
//! Each node wakes on its own seeded timer; exactly one node is awake per
//! event and its broadcasts reach the idle recipients before the next event.

mod cycles;
mod engine;
mod network;
mod trace;

pub use cycles::{check_trace_properties, trace_cycles, CycleSummary, TraceReport};
pub use engine::{schedule_run, RunOutput, StopRule, TimerParams};
pub use network::{compute_diameter, generate_watts_strogatz, Network};
pub use trace::{EventRecord, EventTrace, TraceHeader};
