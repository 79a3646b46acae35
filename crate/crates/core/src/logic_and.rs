//! Asynchronous distributed logic-AND: detects that every node has raised its
//! local flag.
//!
//! Node `i` keeps a `rows × (|N_i|+1)` binary matrix. Column `r` belongs to
//! the neighbor of rank `r` in the sorted neighbor list and the last column to
//! the node itself. Row `l` of the self column is the conjunction of row
//! `l−1`, so a one in the last row certifies every node within `rows` hops.

use serde::{Deserialize, Serialize};

use crate::error::{AsymmError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusMatrix {
    rows: usize,
    neighbors: Vec<usize>,
    bits: Vec<bool>,
}

impl StatusMatrix {
    /// All-zero matrix. `neighbors` is sorted and deduplicated here.
    pub fn new(rows: usize, neighbors: &[usize]) -> Result<Self> {
        if rows == 0 {
            return Err(AsymmError::contract("status matrix needs at least one row"));
        }
        let mut neighbors = neighbors.to_vec();
        neighbors.sort_unstable();
        neighbors.dedup();
        let cols = neighbors.len() + 1;
        Ok(Self {
            rows,
            neighbors,
            bits: vec![false; rows * cols],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.neighbors.len() + 1
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    /// Entry at 0-based row `l` and column `c`.
    pub fn get(&self, l: usize, c: usize) -> bool {
        self.bits[l * self.cols() + c]
    }

    fn set(&mut self, l: usize, c: usize, v: bool) {
        let cols = self.cols();
        self.bits[l * cols + c] = v;
    }

    fn self_col(&self) -> usize {
        self.neighbors.len()
    }

    /// Column index assigned to neighbor `j`.
    pub fn column_of(&self, j: usize) -> Option<usize> {
        self.neighbors.binary_search(&j).ok()
    }

    fn row_product(&self, l: usize) -> bool {
        (0..self.cols()).all(|c| self.get(l, c))
    }

    /// The node's own column, top to bottom.
    pub fn self_column(&self) -> Vec<bool> {
        (0..self.rows).map(|l| self.get(l, self.self_col())).collect()
    }

    /// Writes `flag` into row 1 of the self column, recomputes rows `2..`
    /// from the row products and returns the column to broadcast.
    pub fn refresh_self_column(&mut self, flag: bool) -> Vec<bool> {
        let me = self.self_col();
        self.set(0, me, flag);
        for l in 1..self.rows {
            let v = self.row_product(l - 1);
            self.set(l, me, v);
        }
        self.self_column()
    }

    /// Recomputes rows `2..` of the self column, leaving row 1 as is.
    pub fn propagate(&mut self) -> Vec<bool> {
        let flag = self.get(0, self.self_col());
        self.refresh_self_column(flag)
    }

    /// Replaces neighbor `j`'s column with the column it broadcast.
    pub fn absorb_neighbor_column(&mut self, j: usize, col: &[bool]) -> Result<()> {
        let c = self
            .column_of(j)
            .ok_or_else(|| AsymmError::contract(format!("node {j} is not a neighbor")))?;
        if col.len() != self.rows {
            return Err(AsymmError::DimensionMismatch {
                context: "status column",
                expected: self.rows,
                got: col.len(),
            });
        }
        for (l, v) in col.iter().enumerate() {
            self.set(l, c, *v);
        }
        Ok(())
    }

    /// True when the whole last row is ones.
    pub fn detection_reached(&self) -> bool {
        self.row_product(self.rows - 1)
    }

    /// Sets the last row to ones.
    pub fn handle_stop_signal(&mut self) {
        let last = self.rows - 1;
        for c in 0..self.cols() {
            self.set(last, c, true);
        }
    }

    pub fn reset(&mut self) {
        self.bits.iter_mut().for_each(|b| *b = false);
    }
}

/// Outcome of a standalone protocol run over an awakening schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogicAndRun {
    /// First event at which each node's flag was 1.
    pub raised_at: Vec<Option<usize>>,
    /// First event at which each node's matrix satisfied the stop test.
    pub detected_at: Vec<Option<usize>>,
}

impl LogicAndRun {
    /// The earliest detection must come after every node has raised its flag.
    pub fn is_sound(&self) -> bool {
        let Some(first) = self.detected_at.iter().flatten().min() else {
            return true;
        };
        self.raised_at.iter().all(|r| matches!(r, Some(t) if t <= first))
    }
}

/// Runs the bare protocol: at event `t` node `schedule[t]` wakes up with flag
/// `flag(node, t)`, refreshes and broadcasts its column unless it has
/// detected, then stops and signals its neighbors once it detects.
/// Delivery is instantaneous.
pub fn run_logic_and(
    neighbors: &[Vec<usize>],
    rows: usize,
    schedule: &[usize],
    flag: impl Fn(usize, usize) -> bool,
) -> Result<LogicAndRun> {
    let n = neighbors.len();
    let mut mats = neighbors
        .iter()
        .map(|nb| StatusMatrix::new(rows, nb))
        .collect::<Result<Vec<_>>>()?;
    let mut stop_received = vec![false; n];
    let mut raised_at = vec![None; n];
    let mut detected_at = vec![None; n];
    for (t, &i) in schedule.iter().enumerate() {
        if i >= n {
            return Err(AsymmError::contract(format!("schedule names unknown node {i}")));
        }
        let c = flag(i, t);
        if c && raised_at[i].is_none() {
            raised_at[i] = Some(t);
        }
        if !mats[i].detection_reached() {
            let col = mats[i].refresh_self_column(c);
            for &j in &neighbors[i] {
                if !stop_received[j] {
                    mats[j].absorb_neighbor_column(i, &col)?;
                }
            }
        }
        if mats[i].detection_reached() {
            if detected_at[i].is_none() {
                detected_at[i] = Some(t);
            }
            for &j in &neighbors[i] {
                stop_received[j] = true;
                mats[j].handle_stop_signal();
                if detected_at[j].is_none() {
                    detected_at[j] = Some(t);
                }
            }
        }
    }
    Ok(LogicAndRun {
        raised_at,
        detected_at,
    })
}
