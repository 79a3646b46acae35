use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use super::trace::{EventRecord, EventTrace, TraceHeader};
use crate::error::{AsymmError, Result};
use crate::metrics::compute_infeasibility;
use crate::node::{NodeState, Task};
use crate::problem::LocalProblem;

/// Local timers: each gap between awakenings is uniform in `(t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimerParams {
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for TimerParams {
    fn default() -> Self {
        Self { t_min: 0.1, t_max: 1.0 }
    }
}

impl TimerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_min > 0.0 && self.t_min < self.t_max && self.t_max.is_finite()) {
            return Err(AsymmError::config("timers need 0 < t_min < t_max < inf"));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.t_max - rng.random_range(0.0..self.t_max - self.t_min)
    }
}

/// When to end a run. The first rule that fires wins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopRule {
    pub max_events: u64,
    /// Stop once this many complete cycles (N multiplier phases each) are done.
    pub max_cycles: Option<u64>,
    /// Stop after a complete cycle whose closing infeasibility is below this.
    pub infeasibility_below: Option<f64>,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            max_events: 25_000,
            max_cycles: None,
            infeasibility_below: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Wake {
    time: f64,
    node: usize,
}

impl Eq for Wake {}

impl Ord for Wake {
    // Reversed so the max-heap pops the earliest time, then the lowest id.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Wake {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub struct RunOutput {
    pub trace: EventTrace,
    pub nodes: Vec<NodeState>,
}

/// Runs the event loop: pop the earliest wake-up, let that node act, deliver
/// its messages to the recipients before anything else happens, redraw its
/// timer. Identical inputs give bit-identical traces.
pub fn schedule_run(
    net: &Network,
    mut nodes: Vec<NodeState>,
    timers: &TimerParams,
    seed: u64,
    stop: &StopRule,
) -> Result<RunOutput> {
    timers.validate()?;
    let n = net.num_nodes();
    if nodes.len() != n {
        return Err(AsymmError::contract(format!("{} nodes for a {n}-node network", nodes.len())));
    }
    for (i, node) in nodes.iter().enumerate() {
        if node.id != i || !node.neighbors().eq(net.neighbors(i).iter().copied()) {
            return Err(AsymmError::contract(format!("node {i} disagrees with the network")));
        }
    }
    let problems: Vec<Arc<dyn LocalProblem>> = nodes.iter().map(|s| s.problem.clone()).collect();
    let header = TraceHeader {
        seed,
        num_nodes: n,
        dim: nodes.first().map(|s| s.x.len()).unwrap_or(0),
        rows: nodes.first().map(|s| s.status.rows()).unwrap_or(1),
        diameter: net.diameter,
        neighbors: net.adjacency.clone(),
        initial_x: nodes.iter().map(|s| s.x.clone()).collect(),
        initial_penalty: nodes.first().map(|s| s.config().penalty.initial).unwrap_or(1.0),
        blocks: nodes
            .first()
            .and_then(|s| s.config().block_count.map(|_| s.blocks().to_vec())),
        t_min: timers.t_min,
        t_max: timers.t_max,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queue = BinaryHeap::with_capacity(n);
    for node in 0..n {
        queue.push(Wake { time: timers.draw(&mut rng), node });
    }
    let mut events = Vec::new();
    let mut t2_count: u64 = 0;
    let mut x_all: Vec<Vec<f64>> = nodes.iter().map(|s| s.x.clone()).collect();

    for t in 0..stop.max_events {
        let Wake { time, node } = queue.pop().expect("every node stays scheduled");
        let (cycle, eps) = (nodes[node].cycle, nodes[node].eps);
        let out = nodes[node].on_awake()?;
        for m in &out.messages {
            nodes[m.recipient].on_receive(m).map_err(|e| with_window(e, t))?;
        }
        x_all[node].clone_from(&nodes[node].x);
        let xi = compute_infeasibility(&problems, &net.adjacency, &x_all)?;
        if out.task == Task::T2 {
            t2_count += 1;
        }
        let s = &nodes[node];
        events.push(EventRecord {
            t,
            time,
            node,
            task: out.task,
            cycle,
            eps,
            flag: s.flag,
            t1: out.t1,
            t2: out.t2,
            restarted: out.restarted,
            dual_digest: s.dual_digest(),
            xi,
            max_penalty: s.pen.max_value(),
            messages: out.messages,
        });
        queue.push(Wake { time: time + timers.draw(&mut rng), node });

        let cycle_closed = out.task == Task::T2 && t2_count % n as u64 == 0;
        if cycle_closed {
            let done = t2_count / n as u64;
            if stop.max_cycles.is_some_and(|m| done >= m) || stop.infeasibility_below.is_some_and(|v| xi < v) {
                break;
            }
        }
    }
    Ok(RunOutput {
        trace: EventTrace { header, events },
        nodes,
    })
}

fn with_window(e: AsymmError, t: u64) -> AsymmError {
    match e {
        AsymmError::PropertyViolation { property, detail, .. } => AsymmError::PropertyViolation {
            property,
            detail,
            window: vec![t.saturating_sub(1), t],
        },
        other => other,
    }
}
