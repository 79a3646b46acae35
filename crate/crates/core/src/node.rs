//! Per-node state machine of the asynchronous method of multipliers.
//!
//! On each awakening a node runs exactly one of: a primal descent step on its
//! local augmented Lagrangian (T1), a multiplier and penalty update (T2), or
//! nothing while it waits for its neighbors' new multipliers. Incoming
//! messages are handled by [`NodeState::on_receive`].

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, AsymmError, Result};
use crate::lagrangian::{DualLocal, PenaltyLocal, RegionBounds};
use crate::linalg;
use crate::logic_and::StatusMatrix;
use crate::multipliers::{multiplier_phase, PenaltyDecisions, PenaltyScheduleParams, PhaseMemory};
use crate::problem::LocalProblem;
use crate::step_rule::{descent_step, LocalView, StepRule};

/// Geometric tolerance schedule with a floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceSchedule {
    pub initial: f64,
    pub factor: f64,
    pub floor: f64,
}

impl Default for ToleranceSchedule {
    fn default() -> Self {
        Self {
            initial: 1e-2,
            factor: 0.5,
            floor: 1e-9,
        }
    }
}

impl ToleranceSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial > 0.0 && self.floor > 0.0 && self.factor > 0.0 && self.factor <= 1.0) {
            return Err(AsymmError::config(
                "tolerance schedule needs initial > 0, floor > 0 and factor in (0,1]",
            ));
        }
        Ok(())
    }
}

/// `max(floor, factor·eps)`
pub fn next_tolerance(eps: f64, schedule: &ToleranceSchedule) -> f64 {
    (schedule.factor * eps).max(schedule.floor)
}

/// Contiguous blocks of near-equal size; the last one takes the remainder.
pub fn block_partition(dim: usize, count: usize) -> Result<Vec<(usize, usize)>> {
    if count == 0 || count > dim {
        return Err(AsymmError::config(format!(
            "block count must lie in 1..={dim}, got {count}"
        )));
    }
    let size = dim / count;
    Ok((0..count)
        .map(|b| {
            let offset = b * size;
            let len = if b + 1 == count { dim - offset } else { size };
            (offset, len)
        })
        .collect())
}

/// Settings shared by every node of a run.
#[derive(Clone)]
pub struct NodeConfig {
    /// Status-matrix rows: the graph diameter or an upper bound on it.
    pub rows: usize,
    pub penalty: PenaltyScheduleParams,
    pub tolerance: ToleranceSchedule,
    pub initial_lipschitz: f64,
    pub bounds: RegionBounds,
    /// `None` runs whole-vector descent steps.
    pub block_count: Option<usize>,
    pub step_rule: Arc<dyn StepRule>,
}

impl std::fmt::Debug for NodeConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NodeConfig")
            .field("rows", &self.rows)
            .field("penalty", &self.penalty)
            .field("tolerance", &self.tolerance)
            .field("initial_lipschitz", &self.initial_lipschitz)
            .field("block_count", &self.block_count)
            .field("step_rule", &self.step_rule.name())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    /// A slice of the sender's iterate starting at `offset`, plus its status
    /// column. Whole-vector mode sends block 0 at offset 0.
    PrimalAndStatus {
        block: usize,
        offset: usize,
        values: Vec<f64>,
        status: Vec<bool>,
    },
    /// `ν_ij` and `ρ_ij` for the recipient `j`.
    Duals { nu: Vec<f64>, rho: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: usize,
    pub recipient: usize,
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    T1,
    T2,
    Noop,
}

/// Diagnostics of one descent step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T1Info {
    pub lipschitz: f64,
    /// `‖∇L̃_i‖` before the step.
    pub grad_norm: f64,
    /// `‖∇L̃_i‖` after the step; this is what the tolerance test reads.
    pub grad_norm_post: f64,
    pub offset: usize,
    pub len: usize,
    /// The flag was already up and the post-step gradient is above tolerance.
    /// The flag is not retracted; the event is only counted.
    pub above_tol_after_flag: bool,
}

/// Node state right after a multiplier phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T2Snapshot {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub nu_out: BTreeMap<usize, Vec<f64>>,
    pub varrho: f64,
    pub zeta: f64,
    pub rho_out: BTreeMap<usize, f64>,
    pub decisions: PenaltyDecisions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AwakeOutcome {
    pub task: Task,
    pub messages: Vec<Message>,
    pub t1: Option<T1Info>,
    pub t2: Option<T2Snapshot>,
    /// The node started its next cycle within this awakening.
    pub restarted: bool,
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: usize,
    pub problem: Arc<dyn LocalProblem>,
    pub x: Vec<f64>,
    pub x_nbr: BTreeMap<usize, Vec<f64>>,
    pub dual: DualLocal,
    pub pen: PenaltyLocal,
    pub status: StatusMatrix,
    pub flag: bool,
    pub m_done: bool,
    pub eps: f64,
    pub lipschitz: f64,
    pub received_nu: BTreeSet<usize>,
    pub block_cursor: usize,
    pub cycle: u64,
    /// Primal values at the previous multiplier phase.
    pub memory: PhaseMemory,
    /// Descent steps whose post-step gradient exceeded the tolerance after the
    /// flag was raised.
    pub above_tol_after_flag: u64,
    blocks: Vec<(usize, usize)>,
    cfg: Arc<NodeConfig>,
}

impl NodeState {
    /// Fresh node. `x_nbr` holds the neighbors' initial iterates, which the
    /// first penalty test also uses as its "previous" values.
    pub fn new(
        id: usize,
        problem: Arc<dyn LocalProblem>,
        x0: Vec<f64>,
        x_nbr: BTreeMap<usize, Vec<f64>>,
        cfg: Arc<NodeConfig>,
    ) -> Result<Self> {
        let n = problem.dim();
        check_dim("initial iterate", n, x0.len())?;
        if x_nbr.contains_key(&id) {
            return Err(AsymmError::contract("a node cannot neighbor itself"));
        }
        for xj in x_nbr.values() {
            check_dim("neighbor initial iterate", n, xj.len())?;
        }
        cfg.penalty.validate()?;
        cfg.tolerance.validate()?;
        if !(cfg.initial_lipschitz > 0.0) {
            return Err(AsymmError::config("initial Lipschitz estimate must be positive"));
        }
        let neighbors: Vec<usize> = x_nbr.keys().copied().collect();
        let blocks = block_partition(n, cfg.block_count.unwrap_or(1))?;
        let dual = DualLocal::zeros(n, problem.num_eq(), problem.num_ineq(), &neighbors);
        Ok(Self {
            id,
            memory: PhaseMemory {
                x: x0.clone(),
                x_nbr: x_nbr.clone(),
                mu: dual.mu.clone(),
            },
            x: x0,
            x_nbr,
            dual,
            pen: PenaltyLocal::uniform(cfg.penalty.initial, &neighbors),
            status: StatusMatrix::new(cfg.rows, &neighbors)?,
            flag: false,
            m_done: false,
            eps: cfg.tolerance.initial,
            lipschitz: cfg.initial_lipschitz,
            received_nu: BTreeSet::new(),
            block_cursor: 0,
            cycle: 0,
            above_tol_after_flag: 0,
            problem,
            blocks,
            cfg,
        })
    }

    pub fn neighbors(&self) -> impl Iterator<Item = usize> + '_ {
        self.x_nbr.keys().copied()
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    fn view(&self) -> LocalView<'_> {
        LocalView {
            problem: self.problem.as_ref(),
            x_nbr: &self.x_nbr,
            dual: &self.dual,
            pen: &self.pen,
        }
    }

    /// One awakening.
    pub fn on_awake(&mut self) -> Result<AwakeOutcome> {
        let detected = self.status.detection_reached();
        let mut out = AwakeOutcome {
            task: Task::Noop,
            messages: Vec::new(),
            t1: None,
            t2: None,
            restarted: false,
        };
        if self.m_done {
            return Ok(out);
        }
        if !detected {
            let (info, messages) = if self.cfg.block_count.is_some() {
                self.t1_block_step()?
            } else {
                self.t1_full_step()?
            };
            out.task = Task::T1;
            out.t1 = Some(info);
            out.messages = messages;
        } else {
            let (snap, messages) = self.t2_step()?;
            out.task = Task::T2;
            out.t2 = Some(snap);
            out.messages = messages;
            if self.all_duals_in() {
                self.restart();
                out.restarted = true;
            }
        }
        Ok(out)
    }

    /// Tolerance test on the post-step gradient, then status refresh.
    fn finish_descent(&mut self, grad_norm_post: f64) -> (bool, Vec<bool>) {
        let mut above = false;
        if grad_norm_post <= self.eps {
            self.flag = true;
        } else if self.flag {
            above = true;
            self.above_tol_after_flag += 1;
        }
        (above, self.status.refresh_self_column(self.flag))
    }

    fn primal_messages(&self, block: usize, offset: usize, len: usize, status: &[bool]) -> Vec<Message> {
        self.neighbors()
            .map(|j| Message {
                sender: self.id,
                recipient: j,
                payload: Payload::PrimalAndStatus {
                    block,
                    offset,
                    values: self.x[offset..offset + len].to_vec(),
                    status: status.to_vec(),
                },
            })
            .collect()
    }

    /// Whole-vector descent step.
    pub fn t1_full_step(&mut self) -> Result<(T1Info, Vec<Message>)> {
        let grad = self.view().grad(&self.x)?;
        let l = self.cfg.step_rule.lipschitz(&self.view(), &self.x, &grad, self.lipschitz, &self.cfg.bounds)?;
        self.lipschitz = l;
        self.x = descent_step(&self.x, &grad, l);
        let post = linalg::norm(&self.view().grad(&self.x)?);
        let (above, status) = self.finish_descent(post);
        let n = self.x.len();
        let info = T1Info {
            lipschitz: l,
            grad_norm: linalg::norm(&grad),
            grad_norm_post: post,
            offset: 0,
            len: n,
            above_tol_after_flag: above,
        };
        Ok((info, self.primal_messages(0, 0, n, &status)))
    }

    /// Descent step on the block under the cursor; the cursor then advances
    /// cyclically. The tolerance test still reads the full gradient.
    pub fn t1_block_step(&mut self) -> Result<(T1Info, Vec<Message>)> {
        let block = self.block_cursor;
        let (offset, len) = self.blocks[block];
        let grad = self.view().grad(&self.x)?;
        let mut direction = vec![0.0; grad.len()];
        direction[offset..offset + len].copy_from_slice(&grad[offset..offset + len]);
        let l = self.cfg.step_rule.lipschitz(&self.view(), &self.x, &direction, self.lipschitz, &self.cfg.bounds)?;
        self.lipschitz = l;
        self.x = descent_step(&self.x, &direction, l);
        let post = linalg::norm(&self.view().grad(&self.x)?);
        let (above, status) = self.finish_descent(post);
        self.block_cursor = (block + 1) % self.blocks.len();
        let info = T1Info {
            lipschitz: l,
            grad_norm: linalg::norm(&grad),
            grad_norm_post: post,
            offset,
            len,
            above_tol_after_flag: above,
        };
        Ok((info, self.primal_messages(block, offset, len, &status)))
    }

    fn t2_step(&mut self) -> Result<(T2Snapshot, Vec<Message>)> {
        let phase = multiplier_phase(
            self.problem.as_ref(),
            &self.x,
            &self.x_nbr,
            &self.dual,
            &self.pen,
            &self.memory,
            &self.cfg.penalty,
        )?;
        self.dual = phase.dual;
        self.pen = phase.pen;
        self.memory = phase.memory;
        self.m_done = true;
        let messages = self
            .neighbors()
            .map(|j| Message {
                sender: self.id,
                recipient: j,
                payload: Payload::Duals {
                    nu: self.dual.nu_out[&j].clone(),
                    rho: self.pen.rho_out[&j],
                },
            })
            .collect();
        let snap = T2Snapshot {
            x: self.x.clone(),
            lambda: self.dual.lambda.clone(),
            mu: self.dual.mu.clone(),
            nu_out: self.dual.nu_out.clone(),
            varrho: self.pen.varrho,
            zeta: self.pen.zeta,
            rho_out: self.pen.rho_out.clone(),
            decisions: phase.decisions,
        };
        Ok((snap, messages))
    }

    fn all_duals_in(&self) -> bool {
        self.received_nu.len() == self.x_nbr.len()
    }

    fn restart(&mut self) {
        self.m_done = false;
        self.status.reset();
        self.flag = false;
        self.eps = next_tolerance(self.eps, &self.cfg.tolerance);
        self.received_nu.clear();
        self.cycle += 1;
        self.lipschitz = self.cfg.initial_lipschitz;
    }

    /// Handles one incoming message. Returns true when it started the node's
    /// next cycle.
    pub fn on_receive(&mut self, msg: &Message) -> Result<bool> {
        if msg.recipient != self.id {
            return Err(AsymmError::contract(format!(
                "message for node {} delivered to node {}",
                msg.recipient, self.id
            )));
        }
        let j = msg.sender;
        let Some(xj) = self.x_nbr.get_mut(&j) else {
            return Err(AsymmError::contract(format!("node {j} is not a neighbor of node {}", self.id)));
        };
        match &msg.payload {
            Payload::PrimalAndStatus { offset, values, status, .. } => {
                let end = offset + values.len();
                if end > xj.len() {
                    return Err(AsymmError::contract("primal block exceeds the iterate dimension"));
                }
                xj[*offset..end].copy_from_slice(values);
                if self.received_nu.is_empty() {
                    self.status.absorb_neighbor_column(j, status)?;
                }
                Ok(false)
            }
            Payload::Duals { nu, rho } => {
                check_dim("incoming multiplier", xj.len(), nu.len())?;
                if !self.received_nu.insert(j) {
                    return Err(AsymmError::PropertyViolation {
                        property: "one multiplier phase per cycle",
                        detail: format!("node {} received two multiplier messages from node {j} in cycle {}", self.id, self.cycle),
                        window: Vec::new(),
                    });
                }
                self.dual.nu_in.insert(j, nu.clone());
                self.pen.rho_in.insert(j, *rho);
                self.status.handle_stop_signal();
                if self.m_done && self.all_duals_in() {
                    self.restart();
                    return Ok(true);
                }
                Ok(false)
            }
        }
    }

    /// Bit-level digest of `λ_i`, `μ_i` and the outgoing `ν_ij`.
    pub fn dual_digest(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        self.dual.lambda.iter().for_each(|v| eat(*v));
        self.dual.mu.iter().for_each(|v| eat(*v));
        for nu in self.dual.nu_out.values() {
            nu.iter().for_each(|v| eat(*v));
        }
        h
    }
}
