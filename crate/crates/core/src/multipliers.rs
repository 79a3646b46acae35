//! Multiplier ascent and penalty growth: the T2 arithmetic, shared by the
//! asynchronous nodes and the centralized replay oracle.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, AsymmError, Result};
use crate::lagrangian::{DualLocal, PenaltyLocal};
use crate::linalg;
use crate::problem::{eval_constraints, LocalProblem};

/// Penalty growth factor `β`, sufficient-decrease factor `γ`, initial value
/// and safety cap. Growth past `max` is clamped, or aborts the run when
/// `abort_at_max` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyScheduleParams {
    pub beta: f64,
    pub gamma: f64,
    pub initial: f64,
    pub max: f64,
    pub abort_at_max: bool,
}

impl Default for PenaltyScheduleParams {
    fn default() -> Self {
        Self {
            beta: 4.0,
            gamma: 0.25,
            initial: 1.0,
            max: 1e8,
            abort_at_max: false,
        }
    }
}

impl PenaltyScheduleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 1.0) {
            return Err(AsymmError::config(format!("penalty beta must exceed 1, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(AsymmError::config(format!("penalty gamma must lie in (0,1), got {}", self.gamma)));
        }
        if !(self.initial > 0.0 && self.initial <= self.max) {
            return Err(AsymmError::config("penalties need 0 < initial <= max"));
        }
        Ok(())
    }
}

/// `ν_ij + ρ_ij (x_i − x_j)`
pub fn update_consensus_multiplier(nu_ij: &[f64], rho_ij: f64, x_i: &[f64], x_j: &[f64]) -> Vec<f64> {
    nu_ij
        .iter()
        .zip(x_i.iter().zip(x_j))
        .map(|(nu, (a, b))| nu + rho_ij * (a - b))
        .collect()
}

/// `λ + ϱ h`
pub fn update_eq_multiplier(lambda: &[f64], varrho: f64, h_val: &[f64]) -> Vec<f64> {
    lambda.iter().zip(h_val).map(|(l, h)| l + varrho * h).collect()
}

/// `max{0, μ + ζ g}`, componentwise.
pub fn update_ineq_multiplier(mu: &[f64], zeta: f64, g_val: &[f64]) -> Vec<f64> {
    mu.iter().zip(g_val).map(|(m, g)| (m + zeta * g).max(0.0)).collect()
}

/// Shared growth rule. Returns the new value and whether the growth branch
/// was taken.
fn grow(value: f64, new_residual: f64, old_residual: f64, params: &PenaltyScheduleParams) -> (f64, bool) {
    if new_residual > params.gamma * old_residual {
        let next = (params.beta * value).min(params.max);
        if next < params.beta * value {
            log::debug!("penalty clamped at {}", params.max);
        }
        (next, true)
    } else {
        (value, false)
    }
}

fn check_cap(before: f64, params: &PenaltyScheduleParams) -> Result<()> {
    if params.abort_at_max && params.beta * before > params.max {
        return Err(AsymmError::NumericAbort(format!("penalty reached its cap {:e}", params.max)));
    }
    Ok(())
}

pub fn update_penalty_consensus(rho_ij: f64, new_residual: f64, old_residual: f64, params: &PenaltyScheduleParams) -> f64 {
    grow(rho_ij, new_residual, old_residual, params).0
}

pub fn update_penalty_eq(varrho: f64, new_h_norm: f64, old_h_norm: f64, params: &PenaltyScheduleParams) -> f64 {
    grow(varrho, new_h_norm, old_h_norm, params).0
}

/// `g⁺ = max{g, −μ/ζ}`, componentwise.
pub fn g_plus(g: &[f64], mu: &[f64], zeta: f64) -> Vec<f64> {
    g.iter().zip(mu).map(|(gk, mk)| gk.max(-mk / zeta)).collect()
}

/// Inequality penalty rule. Both `g⁺` evaluations use the pre-update `ζ`.
pub fn update_penalty_ineq(
    zeta: f64,
    x_new: &[f64],
    x_old: &[f64],
    mu_new: &[f64],
    mu_old: &[f64],
    p: &dyn LocalProblem,
    params: &PenaltyScheduleParams,
) -> Result<f64> {
    if !(zeta > 0.0) {
        return Err(AsymmError::contract("zeta must be positive"));
    }
    let (_, g_new) = eval_constraints(p, x_new)?;
    let (_, g_old) = eval_constraints(p, x_old)?;
    check_dim("new inequality multipliers", g_new.len(), mu_new.len())?;
    check_dim("old inequality multipliers", g_old.len(), mu_old.len())?;
    let new_res = linalg::norm(&g_plus(&g_new, mu_new, zeta));
    let old_res = linalg::norm(&g_plus(&g_old, mu_old, zeta));
    Ok(grow(zeta, new_res, old_res, params).0)
}

/// Which penalties took the growth branch in one multiplier phase.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PenaltyDecisions {
    pub rho: BTreeMap<usize, bool>,
    pub varrho: bool,
    pub zeta: bool,
}

/// Primal values at the previous multiplier phase, needed by the penalty
/// rules' "old residual" side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMemory {
    pub x: Vec<f64>,
    pub x_nbr: BTreeMap<usize, Vec<f64>>,
    pub mu: Vec<f64>,
}

/// Result of one multiplier phase at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierPhase {
    pub dual: DualLocal,
    pub pen: PenaltyLocal,
    pub decisions: PenaltyDecisions,
    pub memory: PhaseMemory,
}

/// Full T2 at one node: `ν`, `λ`, `μ` ascent with the current penalties, then
/// the three growth rules against `memory`. Cached incoming copies
/// (`nu_in`, `rho_in`) are left untouched.
pub fn multiplier_phase(
    p: &dyn LocalProblem,
    x: &[f64],
    x_nbr: &BTreeMap<usize, Vec<f64>>,
    dual: &DualLocal,
    pen: &PenaltyLocal,
    memory: &PhaseMemory,
    params: &PenaltyScheduleParams,
) -> Result<MultiplierPhase> {
    if !dual.nu_out.keys().eq(x_nbr.keys()) || !memory.x_nbr.keys().eq(x_nbr.keys()) {
        return Err(AsymmError::contract("multiplier phase: neighbor sets disagree"));
    }
    let (h, g) = eval_constraints(p, x)?;
    let (h_old, _) = eval_constraints(p, &memory.x)?;

    let mut next = dual.clone();
    for (j, xj) in x_nbr {
        next.nu_out.insert(*j, update_consensus_multiplier(&dual.nu_out[j], pen.rho_out[j], x, xj));
    }
    next.lambda = update_eq_multiplier(&dual.lambda, pen.varrho, &h);
    next.mu = update_ineq_multiplier(&dual.mu, pen.zeta, &g);

    let mut new_pen = pen.clone();
    let mut decisions = PenaltyDecisions::default();
    for (j, xj) in x_nbr {
        let new_res = linalg::dist(x, xj);
        let old_res = linalg::dist(&memory.x, &memory.x_nbr[j]);
        let (rho, grew) = grow(pen.rho_out[j], new_res, old_res, params);
        if grew {
            check_cap(pen.rho_out[j], params)?;
        }
        new_pen.rho_out.insert(*j, rho);
        decisions.rho.insert(*j, grew);
    }
    if p.num_eq() > 0 {
        let (v, grew) = grow(pen.varrho, linalg::norm(&h), linalg::norm(&h_old), params);
        if grew {
            check_cap(pen.varrho, params)?;
        }
        new_pen.varrho = v;
        decisions.varrho = grew;
    }
    if p.num_ineq() > 0 {
        let (_, g_old) = eval_constraints(p, &memory.x)?;
        let new_res = linalg::norm(&g_plus(&g, &next.mu, pen.zeta));
        let old_res = linalg::norm(&g_plus(&g_old, &memory.mu, pen.zeta));
        let (z, grew) = grow(pen.zeta, new_res, old_res, params);
        if grew {
            check_cap(pen.zeta, params)?;
        }
        new_pen.zeta = z;
        decisions.zeta = grew;
    }
    let memory = PhaseMemory {
        x: x.to_vec(),
        x_nbr: x_nbr.clone(),
        mu: next.mu.clone(),
    };
    Ok(MultiplierPhase {
        dual: next,
        pen: new_pen,
        decisions,
        memory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::QuadraticProblem;
    use proptest::prelude::*;

    fn params() -> PenaltyScheduleParams {
        PenaltyScheduleParams::default()
    }

    #[test]
    fn penalty_cap_clamps_or_aborts() {
        let q = QuadraticProblem::new(vec![vec![1.0]], vec![0.0]).unwrap();
        let x_nbr = BTreeMap::from([(1, vec![0.0])]);
        let dual = DualLocal::zeros(1, 0, 0, &[1]);
        let pen = PenaltyLocal::uniform(3.0, &[1]);
        let memory = PhaseMemory { x: vec![1.0], x_nbr: x_nbr.clone(), mu: vec![] };
        let mut p = PenaltyScheduleParams { max: 10.0, ..params() };
        let out = multiplier_phase(&q, &[1.0], &x_nbr, &dual, &pen, &memory, &p).unwrap();
        assert_eq!(out.pen.rho_out[&1], 10.0);
        p.abort_at_max = true;
        let e = multiplier_phase(&q, &[1.0], &x_nbr, &dual, &pen, &memory, &p).unwrap_err();
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn consensus_multiplier_examples() {
        assert_eq!(update_consensus_multiplier(&[0.3, -1.0], 5.0, &[1.0, 2.0], &[1.0, 2.0]), vec![0.3, -1.0]);
        assert_eq!(update_consensus_multiplier(&[0.0, 0.0], 2.0, &[1.0, 0.0], &[0.0, 0.0]), vec![2.0, 0.0]);
    }

    #[test]
    fn consensus_multiplier_grows_affinely_under_fixed_residual() {
        let (xi, xj, rho) = ([0.5, -0.25], [0.1, 0.3], 1.5);
        let mut nu = vec![0.2, 0.1];
        let start = nu.clone();
        for k in 1..=10 {
            nu = update_consensus_multiplier(&nu, rho, &xi, &xj);
            for c in 0..2 {
                let expect = start[c] + k as f64 * rho * (xi[c] - xj[c]);
                assert!((nu[c] - expect).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn eq_multiplier_examples() {
        assert_eq!(update_eq_multiplier(&[1.5], 4.0, &[0.0]), vec![1.5]);
        assert_eq!(update_eq_multiplier(&[1.0], 4.0, &[0.5]), vec![3.0]);
        assert_eq!(update_eq_multiplier(&[1.0, -1.0], 2.0, &[0.5, 0.5]), vec![2.0, 0.0]);
    }

    #[test]
    fn ineq_multiplier_examples() {
        assert_eq!(update_ineq_multiplier(&[1.0], 2.0, &[-1.0]), vec![0.0]);
        assert_eq!(update_ineq_multiplier(&[1.0], 2.0, &[0.5]), vec![2.0]);
        assert_eq!(update_ineq_multiplier(&[0.0, 3.0], 1.0, &[-1.0, -1.0]), vec![0.0, 2.0]);
    }

    #[test]
    fn penalty_branch_examples() {
        let p = params();
        assert_eq!(update_penalty_consensus(1.0, 1.0, 1.0, &p), 4.0);
        assert_eq!(update_penalty_consensus(1.0, 0.0, 3.0, &p), 1.0);
        assert_eq!(update_penalty_consensus(1.0, 0.25, 1.0, &p), 1.0);
        assert_eq!(update_penalty_eq(2.0, 0.3, 1.0, &p), 8.0);
        assert_eq!(update_penalty_eq(2.0, 0.2, 1.0, &p), 2.0);
        assert_eq!(update_penalty_eq(2.0, 0.0, 0.0, &p), 2.0);
    }

    #[test]
    fn penalty_cap() {
        let p = PenaltyScheduleParams { max: 10.0, ..params() };
        assert_eq!(update_penalty_consensus(8.0, 1.0, 1.0, &p), 10.0);
    }

    #[test]
    fn g_plus_clamps_at_ratio() {
        assert_eq!(g_plus(&[-5.0], &[2.0], 1.0), vec![-2.0]);
        assert_eq!(g_plus(&[0.5], &[2.0], 1.0), vec![0.5]);
    }

    #[test]
    fn ineq_penalty_kept_on_sufficient_decrease() {
        // g(x) = x − 1 on the real line.
        let q = QuadraticProblem::with_constraints(vec![vec![1.0]], vec![0.0], vec![], vec![], vec![vec![1.0]], vec![1.0])
            .unwrap();
        // Old: x=3 (g=2), new: x=0.9 (g=−0.1); μ=0 on both sides.
        let z = update_penalty_ineq(1.0, &[0.9], &[3.0], &[0.0], &[0.0], &q, &params()).unwrap();
        assert_eq!(z, 1.0);
        // Old: x=1.2 (g=0.2), new: x=1.1 (g=0.1) is not a quarter of the old.
        let z = update_penalty_ineq(1.0, &[1.1], &[1.2], &[0.0], &[0.0], &q, &params()).unwrap();
        assert_eq!(z, 4.0);
        assert!(update_penalty_ineq(0.0, &[1.1], &[1.2], &[0.0], &[0.0], &q, &params()).is_err());
    }

    #[test]
    fn validate_rejects_bad_schedules() {
        assert!(PenaltyScheduleParams { beta: 1.0, ..params() }.validate().is_err());
        assert!(PenaltyScheduleParams { gamma: 1.0, ..params() }.validate().is_err());
        assert!(PenaltyScheduleParams { initial: 0.0, ..params() }.validate().is_err());
        assert!(PenaltyScheduleParams { initial: 1e9, ..params() }.validate().is_err());
        params().validate().unwrap();
    }

    proptest! {
        #[test]
        fn mu_stays_nonnegative(
            mu in proptest::collection::vec(0.0f64..10.0, 1..6),
            zeta in 0.01f64..100.0,
            g_seed in proptest::collection::vec(-10.0f64..10.0, 6),
        ) {
            let g = &g_seed[..mu.len()];
            let out = update_ineq_multiplier(&mu, zeta, g);
            prop_assert!(out.iter().all(|v| *v >= 0.0));
        }

        #[test]
        fn mu_update_idempotent_at_zero_constraint(mu in proptest::collection::vec(0.0f64..10.0, 1..6), zeta in 0.01f64..100.0) {
            let g = vec![0.0; mu.len()];
            prop_assert_eq!(update_ineq_multiplier(&mu, zeta, &g), mu);
        }

        #[test]
        fn growth_is_factor_beta_or_none(value in 0.01f64..1e3, new in 0.0f64..10.0, old in 0.0f64..10.0) {
            let p = params();
            let next = update_penalty_consensus(value, new, old, &p);
            prop_assert!(next == value || next == p.beta * value);
            prop_assert!(next >= value);
        }
    }
}
