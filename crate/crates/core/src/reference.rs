//! Centralized inexact method of multipliers used as a replay oracle, plus
//! numerical checks of the strong-convexity gradient bounds.
//!
//! The oracle runs block-coordinate descent on the global augmented
//! Lagrangian in the order the asynchronous run performed its descent steps,
//! then updates every node's multipliers and penalties at once. The gradient
//! of the global Lagrangian with respect to `x_i` equals the gradient of node
//! `i`'s local Lagrangian, so the oracle evaluates it through
//! [`local_lagrangian_grad`] with the neighbor values taken from the global
//! iterate.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, AsymmError, Result};
use crate::lagrangian::{local_lagrangian_grad, DualLocal, PenaltyLocal};
use crate::linalg;
use crate::multipliers::{multiplier_phase, PenaltyDecisions, PenaltyScheduleParams, PhaseMemory};
use crate::node::Task;
use crate::problem::LocalProblem;
use crate::simulator::{trace_cycles, EventTrace};
use crate::step_rule::descent_step;

/// One block-coordinate step of the oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptStep {
    pub node: usize,
    pub offset: usize,
    pub len: usize,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayScript {
    pub neighbors: Vec<Vec<usize>>,
    pub initial_x: Vec<Vec<f64>>,
    pub initial_penalty: f64,
    /// Descent steps of each complete cycle, in order.
    pub cycles: Vec<Vec<ScriptStep>>,
}

/// Reads the per-cycle descent order and step constants off a trace.
pub fn extract_replay_script(trace: &EventTrace) -> Result<ReplayScript> {
    let cycles = trace_cycles(trace)?;
    if cycles.is_empty() {
        return Err(AsymmError::contract("trace contains no complete cycle"));
    }
    let n = trace.header.num_nodes;
    let mut out = Vec::with_capacity(cycles.len());
    for c in &cycles {
        let mut steps = Vec::with_capacity(c.h());
        let mut seen = vec![false; n];
        for &t in &c.t1_events {
            let e = &trace.events[t as usize];
            let info = e
                .t1
                .as_ref()
                .filter(|_| e.task == Task::T1)
                .ok_or_else(|| AsymmError::contract(format!("event {t} lacks descent diagnostics")))?;
            seen[e.node] = true;
            steps.push(ScriptStep {
                node: e.node,
                offset: info.offset,
                len: info.len,
                lipschitz: info.lipschitz,
            });
        }
        if seen.iter().any(|s| !s) {
            return Err(AsymmError::contract(format!("cycle {} misses some node's descent step", c.k)));
        }
        out.push(steps);
    }
    Ok(ReplayScript {
        neighbors: trace.header.neighbors.clone(),
        initial_x: trace.header.initial_x.clone(),
        initial_penalty: trace.header.initial_penalty,
        cycles: out,
    })
}

/// Oracle state at a cycle boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleState {
    pub x: Vec<Vec<f64>>,
    pub duals: Vec<DualLocal>,
    pub pens: Vec<PenaltyLocal>,
    /// Growth decisions that produced this state; empty for the initial one.
    pub decisions: Vec<PenaltyDecisions>,
}

fn neighbor_view(x: &[Vec<f64>], nbrs: &[usize]) -> BTreeMap<usize, Vec<f64>> {
    nbrs.iter().map(|&j| (j, x[j].clone())).collect()
}

/// Copies every `ν_ij`, `ρ_ij` into node `j`'s incoming caches.
fn sync_caches(duals: &mut [DualLocal], pens: &mut [PenaltyLocal]) {
    for i in 0..duals.len() {
        let outs: Vec<(usize, Vec<f64>, f64)> = duals[i]
            .nu_out
            .iter()
            .map(|(j, nu)| (*j, nu.clone(), pens[i].rho_out[j]))
            .collect();
        for (j, nu, rho) in outs {
            duals[j].nu_in.insert(i, nu);
            pens[j].rho_in.insert(i, rho);
        }
    }
}

/// Runs `num_cycles` cycles of the inexact method of multipliers and returns
/// the states `k = 0..=num_cycles`.
pub fn run_inexact_mm(
    problems: &[Arc<dyn LocalProblem>],
    script: &ReplayScript,
    num_cycles: usize,
    penalty: &PenaltyScheduleParams,
) -> Result<Vec<OracleState>> {
    let n = problems.len();
    check_dim("replay problems", script.neighbors.len(), n)?;
    check_dim("replay initial iterates", n, script.initial_x.len())?;
    if num_cycles > script.cycles.len() {
        return Err(AsymmError::contract(format!(
            "script has {} cycles, {num_cycles} requested",
            script.cycles.len()
        )));
    }
    let mut x = script.initial_x.clone();
    let mut duals: Vec<DualLocal> = (0..n)
        .map(|i| {
            let p = &problems[i];
            DualLocal::zeros(p.dim(), p.num_eq(), p.num_ineq(), &script.neighbors[i])
        })
        .collect();
    let mut pens: Vec<PenaltyLocal> = script
        .neighbors
        .iter()
        .map(|nb| PenaltyLocal::uniform(script.initial_penalty, nb))
        .collect();
    let mut states = vec![OracleState {
        x: x.clone(),
        duals: duals.clone(),
        pens: pens.clone(),
        decisions: Vec::new(),
    }];
    for steps in &script.cycles[..num_cycles] {
        let x_prev = x.clone();
        for s in steps {
            let i = s.node;
            if i >= n || s.offset + s.len > x[i].len() || !(s.lipschitz > 0.0) {
                return Err(AsymmError::contract(format!("malformed script step {s:?}")));
            }
            let view = neighbor_view(&x, &script.neighbors[i]);
            let grad = local_lagrangian_grad(problems[i].as_ref(), &x[i], &view, &duals[i], &pens[i])?;
            let direction = if s.len == grad.len() {
                grad
            } else {
                let mut d = vec![0.0; grad.len()];
                d[s.offset..s.offset + s.len].copy_from_slice(&grad[s.offset..s.offset + s.len]);
                d
            };
            x[i] = descent_step(&x[i], &direction, s.lipschitz);
        }
        let mut decisions = Vec::with_capacity(n);
        let mut next_duals = duals.clone();
        let mut next_pens = pens.clone();
        for i in 0..n {
            let memory = PhaseMemory {
                x: x_prev[i].clone(),
                x_nbr: neighbor_view(&x_prev, &script.neighbors[i]),
                mu: duals[i].mu.clone(),
            };
            let view = neighbor_view(&x, &script.neighbors[i]);
            let phase = multiplier_phase(problems[i].as_ref(), &x[i], &view, &duals[i], &pens[i], &memory, penalty)?;
            next_duals[i] = phase.dual;
            next_pens[i] = phase.pen;
            decisions.push(phase.decisions);
        }
        sync_caches(&mut next_duals, &mut next_pens);
        duals = next_duals;
        pens = next_pens;
        states.push(OracleState {
            x: x.clone(),
            duals: duals.clone(),
            pens: pens.clone(),
            decisions,
        });
    }
    Ok(states)
}

/// Largest deviations between the asynchronous run and the oracle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub cycles: usize,
    pub max_dev_x: f64,
    pub max_dev_multipliers: f64,
    pub max_dev_penalties: f64,
    pub branch_mismatches: usize,
}

impl ReplayReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_dev_x.max(self.max_dev_multipliers).max(self.max_dev_penalties)
    }
}

/// Compares each node's post-update snapshot in cycle `k` with oracle state
/// `k+1`.
pub fn compare_replay(trace: &EventTrace, states: &[OracleState]) -> Result<ReplayReport> {
    let cycles = trace_cycles(trace)?;
    let mut report = ReplayReport::default();
    for c in cycles.iter().take(states.len().saturating_sub(1)) {
        let st = &states[c.k as usize + 1];
        for &(i, t) in &c.t2_events {
            let snap = trace.events[t as usize]
                .t2
                .as_ref()
                .ok_or_else(|| AsymmError::contract(format!("event {t} lacks its multiplier snapshot")))?;
            report.max_dev_x = report.max_dev_x.max(linalg::max_abs_diff(&snap.x, &st.x[i]));
            let mut m = linalg::max_abs_diff(&snap.lambda, &st.duals[i].lambda)
                .max(linalg::max_abs_diff(&snap.mu, &st.duals[i].mu));
            for (j, nu) in &snap.nu_out {
                m = m.max(linalg::max_abs_diff(nu, &st.duals[i].nu_out[j]));
            }
            report.max_dev_multipliers = report.max_dev_multipliers.max(m);
            let mut p = (snap.varrho - st.pens[i].varrho).abs().max((snap.zeta - st.pens[i].zeta).abs());
            for (j, rho) in &snap.rho_out {
                p = p.max((rho - st.pens[i].rho_out[j]).abs());
            }
            report.max_dev_penalties = report.max_dev_penalties.max(p);
            if snap.decisions != st.decisions[i] {
                report.branch_mismatches += 1;
            }
        }
        report.cycles += 1;
    }
    Ok(report)
}

/// Extracts the script, replays every complete cycle and compares.
pub fn replay_trace(
    trace: &EventTrace,
    problems: &[Arc<dyn LocalProblem>],
    penalty: &PenaltyScheduleParams,
) -> Result<ReplayReport> {
    let script = extract_replay_script(trace)?;
    let states = run_inexact_mm(problems, &script, script.cycles.len(), penalty)?;
    compare_replay(trace, &states)
}

/// Outcome of the block-descent gradient bound experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoundReport {
    pub sigma: f64,
    pub block_lipschitz: Vec<f64>,
    pub bound: f64,
    /// Iterate index after which every block has met its tolerance.
    pub h_bar: usize,
    pub checked_steps: usize,
    pub max_grad_norm: f64,
    pub violations: usize,
}

fn block_rows_norm(q: &DMatrix<f64>, offset: usize, len: usize) -> f64 {
    q.rows(offset, len).singular_values().max()
}

fn min_eigenvalue(q: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(q.clone()).eigenvalues.min()
}

/// Cyclic block descent on `Φ(y) = ½yᵀQy − bᵀy` with steps `1/L_i`, where
/// `L_i` is the spectral norm of block row `i` of `Q`. Block `i` meets its
/// tolerance at the first iterate produced by one of its own steps whose
/// block gradient is at most `eps[i]`. From the last such iterate on, the
/// full gradient is compared with `sqrt(Σ (L_i ε_i / σ)²)` for
/// `extra_steps` further steps.
pub fn verify_gradient_bound(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    blocks: &[(usize, usize)],
    eps: &[f64],
    y0: &DVector<f64>,
    extra_steps: usize,
) -> Result<GradientBoundReport> {
    let n = b.len();
    if q.nrows() != n || q.ncols() != n || y0.len() != n {
        return Err(AsymmError::contract("gradient bound: inconsistent shapes"));
    }
    check_dim("block tolerances", blocks.len(), eps.len())?;
    let sigma = min_eigenvalue(q);
    if !(sigma > 0.0) {
        return Err(AsymmError::contract("gradient bound needs a positive definite Q"));
    }
    let lips: Vec<f64> = blocks.iter().map(|&(o, l)| block_rows_norm(q, o, l)).collect();
    let bound = lips
        .iter()
        .zip(eps)
        .map(|(l, e)| (l * e / sigma).powi(2))
        .sum::<f64>()
        .sqrt();
    let grad = |y: &DVector<f64>| q * y - b;
    let mut y = y0.clone();
    let mut met: Vec<Option<usize>> = vec![None; blocks.len()];
    let mut h = 0usize;
    const MAX_ITERS: usize = 10_000_000;
    while met.iter().any(Option::is_none) {
        let i = h % blocks.len();
        let (o, l) = blocks[i];
        let g = grad(&y);
        for k in o..o + l {
            y[k] -= g[k] / lips[i];
        }
        h += 1;
        if met[i].is_none() && grad(&y).rows(o, l).norm() <= eps[i] {
            met[i] = Some(h);
        }
        if h > MAX_ITERS {
            return Err(AsymmError::NumericAbort("block descent did not reach the tolerances".into()));
        }
    }
    let h_bar = h;
    let mut max_norm = 0.0f64;
    let mut violations = 0;
    for step in 0..=extra_steps {
        let g = grad(&y);
        let norm = g.norm();
        max_norm = max_norm.max(norm);
        if norm > bound * (1.0 + 1e-12) {
            violations += 1;
        }
        if step < extra_steps {
            let i = (h_bar + step) % blocks.len();
            let (o, l) = blocks[i];
            for k in o..o + l {
                y[k] -= g[k] / lips[i];
            }
        }
    }
    Ok(GradientBoundReport {
        sigma,
        block_lipschitz: lips,
        bound,
        h_bar,
        checked_steps: extra_steps + 1,
        max_grad_norm: max_norm,
        violations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub distances: Vec<f64>,
    pub violations: usize,
}

/// Full gradient descent with step `1/λ_max(Q)`; the distance to the
/// minimizer must not grow (up to `1e-14` relative slack).
pub fn verify_descent_monotonicity(
    q: &DMatrix<f64>,
    b: &DVector<f64>,
    y0: &DVector<f64>,
    steps: usize,
) -> Result<MonotonicityReport> {
    let eig = SymmetricEigen::new(q.clone()).eigenvalues;
    if !(eig.min() > 0.0) {
        return Err(AsymmError::contract("descent monotonicity needs a positive definite Q"));
    }
    let l = eig.max();
    let y_star = q
        .clone()
        .cholesky()
        .ok_or_else(|| AsymmError::contract("Cholesky factorization failed"))?
        .solve(b);
    let mut y = y0.clone();
    let mut distances = vec![(&y - &y_star).norm()];
    let mut violations = 0;
    for _ in 0..steps {
        let g = q * &y - b;
        y -= g / l;
        let d = (&y - &y_star).norm();
        let prev = *distances.last().expect("nonempty");
        if d > prev * (1.0 + 1e-14) + 1e-14 {
            violations += 1;
        }
        distances.push(d);
    }
    Ok(MonotonicityReport { distances, violations })
}

/// Gradient of the global Lagrangian, assembled node by node with the
/// incoming caches replaced by the neighbors' outgoing values.
pub fn global_gradient(
    problems: &[Arc<dyn LocalProblem>],
    x: &[Vec<f64>],
    duals: &[DualLocal],
    pens: &[PenaltyLocal],
) -> Result<Vec<Vec<f64>>> {
    let mut duals = duals.to_vec();
    let mut pens = pens.to_vec();
    sync_caches(&mut duals, &mut pens);
    (0..problems.len())
        .map(|i| {
            let nbrs: Vec<usize> = duals[i].nu_out.keys().copied().collect();
            let view = neighbor_view(x, &nbrs);
            local_lagrangian_grad(problems[i].as_ref(), &x[i], &view, &duals[i], &pens[i])
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongConvexityEstimate {
    /// Smallest eigenvalue of the finite-difference Hessian.
    pub sigma: f64,
    pub locally_convex: bool,
}

/// Smallest eigenvalue of a central-difference Hessian of the global
/// Lagrangian at `x`. Diagnostic only; cost is quadratic in `N·n`.
pub fn estimate_local_strong_convexity(
    problems: &[Arc<dyn LocalProblem>],
    x: &[Vec<f64>],
    duals: &[DualLocal],
    pens: &[PenaltyLocal],
    step: f64,
) -> Result<StrongConvexityEstimate> {
    let flat: Vec<(usize, usize)> = x
        .iter()
        .enumerate()
        .flat_map(|(i, xi)| (0..xi.len()).map(move |k| (i, k)))
        .collect();
    let m = flat.len();
    let mut hess = DMatrix::zeros(m, m);
    let flatten = |g: Vec<Vec<f64>>| -> Vec<f64> { g.into_iter().flatten().collect() };
    for (col, &(i, k)) in flat.iter().enumerate() {
        let mut up = x.to_vec();
        up[i][k] += step;
        let mut down = x.to_vec();
        down[i][k] -= step;
        let gu = flatten(global_gradient(problems, &up, duals, pens)?);
        let gd = flatten(global_gradient(problems, &down, duals, pens)?);
        for row in 0..m {
            hess[(row, col)] = (gu[row] - gd[row]) / (2.0 * step);
        }
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    if sym.iter().any(|v| !v.is_finite()) {
        return Err(AsymmError::NumericAbort("non-finite Hessian entry".into()));
    }
    let sigma = min_eigenvalue(&sym);
    Ok(StrongConvexityEstimate {
        sigma,
        locally_convex: sigma > 0.0,
    })
}

/// `sqrt(Σ (L_i ε_i / σ)²)`, or `None` when `σ ≤ 0`.
pub fn tolerance_bound(lipschitz: &[f64], eps: &[f64], sigma: f64) -> Option<f64> {
    if !(sigma > 0.0) {
        return None;
    }
    Some(
        lipschitz
            .iter()
            .zip(eps)
            .map(|(l, e)| (l * e / sigma).powi(2))
            .sum::<f64>()
            .sqrt(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::QuadraticProblem;

    #[test]
    fn identity_bound_is_sqrt_n_eps() {
        let q = DMatrix::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let r = verify_gradient_bound(&q, &b, &[(0, 1), (1, 1), (2, 1)], &[1e-3; 3], &DVector::zeros(3), 100).unwrap();
        assert!((r.bound - 3f64.sqrt() * 1e-3).abs() < 1e-15);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn diagonal_bound() {
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0]));
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let r = verify_gradient_bound(&q, &b, &[(0, 1), (1, 1)], &[1e-3, 1e-3], &DVector::zeros(2), 100).unwrap();
        assert_eq!(r.block_lipschitz, vec![1.0, 4.0]);
        assert!((r.bound - (1e-6f64 + 16e-6).sqrt()).abs() < 1e-15);
        assert_eq!(r.violations, 0);
    }

    #[test]
    fn one_dimensional_gradient_step_is_exact() {
        let q = DMatrix::from_element(1, 1, 1.0);
        let b = DVector::zeros(1);
        let r = verify_descent_monotonicity(&q, &b, &DVector::from_element(1, 1.0), 1).unwrap();
        assert_eq!(r.distances, vec![1.0, 0.0]);
        let r = verify_descent_monotonicity(&q, &b, &DVector::zeros(1), 5).unwrap();
        assert!(r.distances.iter().all(|d| *d == 0.0));
    }

    #[test]
    fn indefinite_point_is_reported() {
        let p: Arc<dyn LocalProblem> = Arc::new(QuadraticProblem::new(vec![vec![-1.0]], vec![0.0]).unwrap());
        let est = estimate_local_strong_convexity(
            &[p],
            &[vec![0.3]],
            &[DualLocal::zeros(1, 0, 0, &[])],
            &[PenaltyLocal::uniform(1.0, &[])],
            1e-4,
        )
        .unwrap();
        assert!(!est.locally_convex);
        assert_eq!(tolerance_bound(&[1.0], &[1e-3], est.sigma), None);
    }

    #[test]
    fn separable_quadratic_eigenvalue() {
        // Hessian diag(a) + (ρ12 + ρ21)[[1,−1],[−1,1]].
        let (a1, a2, r) = (1.0, 3.0, 2.0 + 0.5);
        let p1: Arc<dyn LocalProblem> = Arc::new(QuadraticProblem::new(vec![vec![a1]], vec![0.2]).unwrap());
        let p2: Arc<dyn LocalProblem> = Arc::new(QuadraticProblem::new(vec![vec![a2]], vec![-0.4]).unwrap());
        let duals = vec![DualLocal::zeros(1, 0, 0, &[1]), DualLocal::zeros(1, 0, 0, &[0])];
        let mut pens = vec![PenaltyLocal::uniform(2.0, &[1]), PenaltyLocal::uniform(0.5, &[0])];
        pens[0].rho_in.insert(1, 0.5);
        pens[1].rho_in.insert(0, 2.0);
        let est = estimate_local_strong_convexity(&[p1, p2], &[vec![0.1], vec![0.7]], &duals, &pens, 1e-4).unwrap();
        let (t, d) = (a1 + a2 + 2.0 * r, (a1 + r) * (a2 + r) - r * r);
        let analytic = t / 2.0 - ((t / 2.0).powi(2) - d).sqrt();
        assert!((est.sigma - analytic).abs() <= 1e-4);
    }

    #[test]
    fn empty_trace_has_no_script() {
        let trace = EventTrace {
            header: crate::simulator::TraceHeader {
                seed: 0,
                num_nodes: 1,
                dim: 1,
                rows: 1,
                diameter: 0,
                neighbors: vec![vec![]],
                initial_x: vec![vec![0.0]],
                initial_penalty: 1.0,
                blocks: None,
                t_min: 0.1,
                t_max: 1.0,
            },
            events: vec![],
        };
        assert!(extract_replay_script(&trace).is_err());
    }

    #[test]
    fn block_bound_can_fail_on_coupled_blocks() {
        // Once both block gradients have met 1e-2, a later full gradient
        // exceeds the bound by a factor of about 1.7.
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let b = DVector::zeros(2);
        let y0 = DVector::from_vec(vec![-0.55, 1.0]);
        let r = verify_gradient_bound(&q, &b, &[(0, 1), (1, 1)], &[1e-2, 1e-2], &y0, 100).unwrap();
        assert!(r.violations > 0);
        assert!(r.max_grad_norm > 1.5 * r.bound);
    }
}
