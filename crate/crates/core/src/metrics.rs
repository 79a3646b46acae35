//! Infeasibility measure and CSV exports.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::linalg;
use crate::node::Task;
use crate::problem::{eval_constraints, LocalProblem};
use crate::simulator::{trace_cycles, EventTrace};

/// Bumped whenever a CSV layout changes.
pub const SCHEMA_VERSION: u32 = 1;

/// `ξ = Σ_i (Σ max(0, g_i) + Σ |h_i| + Σ_{j∈N_i} ‖x_i − x_j‖)`. Each edge is
/// counted from both ends.
pub fn compute_infeasibility(
    problems: &[Arc<dyn LocalProblem>],
    neighbors: &[Vec<usize>],
    x_all: &[Vec<f64>],
) -> Result<f64> {
    check_dim("infeasibility problems", x_all.len(), problems.len())?;
    check_dim("infeasibility neighbor lists", x_all.len(), neighbors.len())?;
    let mut xi = 0.0;
    for (i, p) in problems.iter().enumerate() {
        let (h, g) = eval_constraints(p.as_ref(), &x_all[i])?;
        xi += g.iter().map(|v| v.max(0.0)).sum::<f64>();
        xi += h.iter().map(|v| v.abs()).sum::<f64>();
        for &j in &neighbors[i] {
            xi += linalg::dist(&x_all[i], &x_all[j]);
        }
    }
    Ok(xi)
}

/// One row of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub t: u64,
    pub k: u64,
    pub node: usize,
    pub task: String,
    /// Pre-step gradient norm; empty for non-descent events.
    pub grad_norm: Option<f64>,
    pub eps: f64,
    pub xi: f64,
    pub max_penalty: f64,
}

/// One row of `cycles.csv`: infeasibility when each cycle closes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
    pub k: u64,
    pub t_first: u64,
    pub t_last: u64,
    pub descent_steps: usize,
    pub xi: f64,
}

fn task_name(task: Task) -> &'static str {
    match task {
        Task::T1 => "T1",
        Task::T2 => "T2",
        Task::Noop => "NOOP",
    }
}

pub fn metrics_rows(trace: &EventTrace) -> Vec<MetricsRow> {
    trace
        .events
        .iter()
        .map(|e| MetricsRow {
            t: e.t,
            k: e.cycle,
            node: e.node,
            task: task_name(e.task).to_string(),
            grad_norm: e.t1.as_ref().map(|i| i.grad_norm),
            eps: e.eps,
            xi: e.xi,
            max_penalty: e.max_penalty,
        })
        .collect()
}

pub fn cycle_rows(trace: &EventTrace) -> Result<Vec<CycleRow>> {
    Ok(trace_cycles(trace)?
        .iter()
        .map(|c| CycleRow {
            k: c.k,
            t_first: c.first_t2(),
            t_last: c.last_t2(),
            descent_steps: c.h(),
            xi: trace.events[c.last_t2() as usize].xi,
        })
        .collect())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_rows(path, rows, &["t", "k", "node", "task", "grad_norm", "eps", "xi", "max_penalty"])
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

pub fn write_cycles_csv(path: &Path, rows: &[CycleRow]) -> Result<()> {
    write_rows(path, rows, &["k", "t_first", "t_last", "descent_steps", "xi"])
}

pub fn read_cycles_csv(path: &Path) -> Result<Vec<CycleRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| Ok(row?)).collect()
}

/// `iterates.csv`: every node's iterate at each of its multiplier phases,
/// one coordinate per column.
pub fn write_iterates_csv(path: &Path, trace: &EventTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["k".to_string(), "node".to_string(), "t".to_string()];
    header.extend((0..trace.header.dim).map(|c| format!("x{c}")));
    w.write_record(&header)?;
    for e in &trace.events {
        if let Some(snap) = &e.t2 {
            let mut rec = vec![e.cycle.to_string(), e.node.to_string(), e.t.to_string()];
            rec.extend(snap.x.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `metrics.csv`, `cycles.csv` and `iterates.csv` into `dir`.
pub fn export_metrics(trace: &EventTrace, dir: &Path) -> Result<()> {
    write_metrics_csv(&dir.join("metrics.csv"), &metrics_rows(trace))?;
    write_cycles_csv(&dir.join("cycles.csv"), &cycle_rows(trace)?)?;
    write_iterates_csv(&dir.join("iterates.csv"), trace)?;
    Ok(())
}
