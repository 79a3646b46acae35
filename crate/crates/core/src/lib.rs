//! Asynchronous method of multipliers over a peer-to-peer network.
//!
//! Every node owns a private objective with local constraints and keeps a
//! copy of the shared decision variable. Nodes wake on independent timers and
//! either take a descent step on their local augmented Lagrangian or, once a
//! distributed logic-AND reports that all of them met their tolerance, update
//! their multipliers and penalties. The crate contains the node state
//! machine, a deterministic discrete-event simulator, a centralized replay
//! oracle and an experiment runner.
//!
//! Problem families and step rules are looked up by name through a
//! [`registry::Registry`], so configs pick them at runtime.

pub mod config;
pub mod error;
pub mod experiment;
pub mod lagrangian;
pub mod linalg;
pub mod logic_and;
pub mod metrics;
pub mod multipliers;
pub mod node;
pub mod problem;
pub mod reference;
pub mod registry;
pub mod simulator;
pub mod step_rule;

pub use error::{AsymmError, Result};
