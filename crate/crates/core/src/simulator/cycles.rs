//! Cycle structure of a trace and the protocol properties checked on it.

use serde::{Deserialize, Serialize};

use super::trace::EventTrace;
use crate::error::{AsymmError, Result};
use crate::node::Task;

/// One complete cycle: N multiplier phases, one per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub k: u64,
    /// `(node, t)` of each multiplier phase, in event order.
    pub t2_events: Vec<(usize, u64)>,
    /// Event counter of each node's multiplier phase, indexed by node.
    pub tau: Vec<u64>,
    /// Descent events belonging to this cycle in event order: every T1 of
    /// node `i` between its multiplier phases of cycles `k−1` and `k`.
    pub t1_events: Vec<u64>,
}

impl CycleSummary {
    /// Number of descent steps in the cycle.
    pub fn h(&self) -> usize {
        self.t1_events.len()
    }

    pub fn first_t2(&self) -> u64 {
        self.t2_events[0].1
    }

    pub fn last_t2(&self) -> u64 {
        self.t2_events[self.t2_events.len() - 1].1
    }
}

fn violation(property: &'static str, detail: String, window: Vec<u64>) -> AsymmError {
    AsymmError::PropertyViolation {
        property,
        detail,
        window,
    }
}

/// Splits the multiplier phases into consecutive groups of N, checks that
/// each group is a permutation of the nodes, and collects each cycle's
/// descent events. A trailing incomplete group is dropped.
pub fn trace_cycles(trace: &EventTrace) -> Result<Vec<CycleSummary>> {
    let n = trace.header.num_nodes;
    let t2: Vec<(usize, u64, u64)> = trace
        .events
        .iter()
        .filter(|e| e.task == Task::T2)
        .map(|e| (e.node, e.t, e.cycle))
        .collect();
    let mut cycles = Vec::new();
    for (k, group) in t2.chunks_exact(n).enumerate() {
        let k = k as u64;
        let mut tau = vec![u64::MAX; n];
        for &(node, t, cycle) in group {
            let window: Vec<u64> = group.iter().map(|g| g.1).collect();
            if node >= n || tau[node] != u64::MAX {
                return Err(violation(
                    "multiplier phases form a permutation per cycle",
                    format!("node {node} repeats in cycle {k}"),
                    window,
                ));
            }
            if cycle != k {
                return Err(violation(
                    "multiplier phases form a permutation per cycle",
                    format!("node {node} was in its cycle {cycle} during group {k}"),
                    window,
                ));
            }
            tau[node] = t;
        }
        cycles.push(CycleSummary {
            k,
            t2_events: group.iter().map(|g| (g.0, g.1)).collect(),
            tau,
            t1_events: Vec::new(),
        });
    }
    for e in trace.events.iter().filter(|e| e.task == Task::T1) {
        if let Some(c) = cycles.get_mut(e.cycle as usize) {
            c.t1_events.push(e.t);
        }
    }
    Ok(cycles)
}

/// Counts gathered while checking a trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub cycles: usize,
    pub events: usize,
    pub min_h: Option<usize>,
    /// Smallest event-counter distance between the first multiplier phases of
    /// consecutive cycles.
    pub min_cycle_span: Option<u64>,
    /// Largest simulated time between the first and last multiplier phase of
    /// a cycle.
    pub max_t2_spread: Option<f64>,
    pub max_gap: f64,
    /// Descent steps that ended above tolerance with the flag already raised.
    pub above_tol_after_flag: usize,
}

/// Checks the structural properties every conforming run must satisfy:
/// per-cycle permutation of multiplier phases, frozen multipliers after a
/// node's phase within its cycle, at least one descent step per node per
/// cycle, at least `2N` events between cycle starts, all multiplier phases of
/// a cycle within `diameter · t_max` simulated time, and no timer gap above
/// `t_max`.
pub fn check_trace_properties(trace: &EventTrace) -> Result<TraceReport> {
    let h = &trace.header;
    let n = h.num_nodes;
    let cycles = trace_cycles(trace)?;
    let mut report = TraceReport {
        cycles: cycles.len(),
        events: trace.events.len(),
        ..Default::default()
    };

    for (i, e) in trace.events.iter().enumerate() {
        if e.t != i as u64 || e.node >= n {
            return Err(violation("one awake node per event", format!("malformed record at position {i}"), vec![e.t]));
        }
    }

    // Frozen multipliers: after node i's phase in cycle k, every later record
    // of node i up to the cycle's last phase carries the same digest.
    for c in &cycles {
        for &(node, t) in &c.t2_events {
            let digest = trace.events[t as usize].dual_digest;
            let end = c.last_t2();
            for e in &trace.events[t as usize..=end as usize] {
                if e.node == node && e.dual_digest != digest {
                    return Err(violation(
                        "multipliers frozen after their update within a cycle",
                        format!("node {node} changed its multipliers in cycle {}", c.k),
                        vec![t, e.t],
                    ));
                }
            }
        }
    }

    for c in &cycles {
        let mut seen = vec![false; n];
        for &t in &c.t1_events {
            seen[trace.events[t as usize].node] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(violation(
                "every node descends at least once per cycle",
                format!("node {missing} has no descent step in cycle {}", c.k),
                vec![c.first_t2(), c.last_t2()],
            ));
        }
        report.min_h = Some(report.min_h.map_or(c.h(), |m| m.min(c.h())));

        let spread = trace.events[c.last_t2() as usize].time - trace.events[c.first_t2() as usize].time;
        if spread > h.diameter as f64 * h.t_max {
            return Err(violation(
                "multiplier phases of a cycle complete within diameter times the timer bound",
                format!("cycle {} spans {spread} time units", c.k),
                vec![c.first_t2(), c.last_t2()],
            ));
        }
        report.max_t2_spread = Some(report.max_t2_spread.map_or(spread, |m| m.max(spread)));
    }

    for pair in cycles.windows(2) {
        let span = pair[1].first_t2() - pair[0].first_t2();
        if span < 2 * n as u64 {
            return Err(violation(
                "at least 2N events between cycle starts",
                format!("cycles {} and {} start {span} events apart", pair[0].k, pair[1].k),
                vec![pair[0].first_t2(), pair[1].first_t2()],
            ));
        }
        report.min_cycle_span = Some(report.min_cycle_span.map_or(span, |m| m.min(span)));
    }

    let mut last = vec![0.0f64; n];
    for e in &trace.events {
        let gap = e.time - last[e.node];
        report.max_gap = report.max_gap.max(gap);
        if gap > h.t_max {
            return Err(violation(
                "every node wakes at least once per timer bound",
                format!("node {} idle for {gap}", e.node),
                vec![e.t],
            ));
        }
        last[e.node] = e.time;
        if e.t1.as_ref().is_some_and(|i| i.above_tol_after_flag) {
            report.above_tol_after_flag += 1;
        }
    }
    Ok(report)
}
