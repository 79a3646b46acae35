//! Augmented Lagrangian pieces: the `q_c` operator, the node-local
//! Lagrangian `L̃_i` and its gradient, and the global Lagrangian `L`.
//!
//! Every reduction over neighbors walks the `BTreeMap`s in ascending id order,
//! so two callers assembling the same inputs get bit-identical results.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, AsymmError, Result};
use crate::linalg;
use crate::problem::{eval_constraints, eval_jacobians, eval_objective, eval_objective_grad, LocalProblem};

/// Node-local multipliers: `λ_i`, `μ_i`, the outgoing `ν_ij` and cached `ν_ji`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualLocal {
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub nu_out: BTreeMap<usize, Vec<f64>>,
    pub nu_in: BTreeMap<usize, Vec<f64>>,
}

impl DualLocal {
    /// All-zero multipliers for a node with the given neighbors.
    pub fn zeros(dim: usize, num_eq: usize, num_ineq: usize, neighbors: &[usize]) -> Self {
        let nu: BTreeMap<usize, Vec<f64>> = neighbors.iter().map(|&j| (j, vec![0.0; dim])).collect();
        Self {
            lambda: vec![0.0; num_eq],
            mu: vec![0.0; num_ineq],
            nu_out: nu.clone(),
            nu_in: nu,
        }
    }
}

/// Node-local penalties: `ϱ_i`, `ζ_i`, the outgoing `ρ_ij` and cached `ρ_ji`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyLocal {
    pub varrho: f64,
    pub zeta: f64,
    pub rho_out: BTreeMap<usize, f64>,
    pub rho_in: BTreeMap<usize, f64>,
}

impl PenaltyLocal {
    pub fn uniform(value: f64, neighbors: &[usize]) -> Self {
        let rho: BTreeMap<usize, f64> = neighbors.iter().map(|&j| (j, value)).collect();
        Self {
            varrho: value,
            zeta: value,
            rho_out: rho.clone(),
            rho_in: rho,
        }
    }

    /// Largest penalty held by the node, cached copies included.
    pub fn max_value(&self) -> f64 {
        self.rho_out
            .values()
            .chain(self.rho_in.values())
            .fold(self.varrho.max(self.zeta), |m, v| m.max(*v))
    }
}

/// Config-supplied bounds used by [`lipschitz_estimate`]: `B_h` bounds `‖h_i‖`
/// and `B_g` bounds `‖g_i‖` over the visited region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionBounds {
    pub eq_value: f64,
    pub ineq_value: f64,
}

fn q_scalar(c: f64, a: f64, b: f64) -> f64 {
    let t = (a + c * b).max(0.0);
    (t * t - a * a) / (2.0 * c)
}

/// `q_c(a, b) = (max{0, a + cb}² − a²) / 2c`, componentwise.
pub fn q_penalty(c: f64, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if !(c > 0.0) {
        return Err(AsymmError::contract(format!("q_c needs c > 0, got {c}")));
    }
    check_dim("q_c arguments", a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(&ai, &bi)| q_scalar(c, ai, bi)).collect())
}

fn check_view(
    p: &dyn LocalProblem,
    x_nbr: &BTreeMap<usize, Vec<f64>>,
    dual: &DualLocal,
    pen: &PenaltyLocal,
) -> Result<()> {
    let n = p.dim();
    check_dim("equality multipliers", p.num_eq(), dual.lambda.len())?;
    check_dim("inequality multipliers", p.num_ineq(), dual.mu.len())?;
    if !(pen.varrho > 0.0 && pen.zeta > 0.0) {
        return Err(AsymmError::contract("penalties must be strictly positive"));
    }
    for (map_name, same) in [
        ("nu_out", dual.nu_out.keys().eq(x_nbr.keys())),
        ("nu_in", dual.nu_in.keys().eq(x_nbr.keys())),
        ("rho_out", pen.rho_out.keys().eq(x_nbr.keys())),
        ("rho_in", pen.rho_in.keys().eq(x_nbr.keys())),
    ] {
        if !same {
            return Err(AsymmError::contract(format!(
                "{map_name} keys do not match the neighbor set {:?}",
                x_nbr.keys().collect::<Vec<_>>()
            )));
        }
    }
    for (j, xj) in x_nbr {
        check_dim("neighbor iterate", n, xj.len())?;
        check_dim("nu_out entry", n, dual.nu_out[j].len())?;
        check_dim("nu_in entry", n, dual.nu_in[j].len())?;
    }
    Ok(())
}

/// Constraint part shared by the local and global Lagrangians:
/// `λᵀh + ϱ/2‖h‖² + 1ᵀq_ζ(μ, g)`.
fn constraint_terms(p: &dyn LocalProblem, x: &[f64], dual: &DualLocal, pen: &PenaltyLocal) -> Result<f64> {
    let (h, g) = eval_constraints(p, x)?;
    let mut v = linalg::dot(&dual.lambda, &h) + 0.5 * pen.varrho * linalg::norm_sq(&h);
    for (mu, gk) in dual.mu.iter().zip(&g) {
        v += q_scalar(pen.zeta, *mu, *gk);
    }
    Ok(v)
}

/// `L̃_i` evaluated at `x_i` with neighbor copies `x_nbr`.
pub fn local_lagrangian(
    p: &dyn LocalProblem,
    x_i: &[f64],
    x_nbr: &BTreeMap<usize, Vec<f64>>,
    dual: &DualLocal,
    pen: &PenaltyLocal,
) -> Result<f64> {
    check_view(p, x_nbr, dual, pen)?;
    let mut v = eval_objective(p, x_i)?;
    for (j, xj) in x_nbr {
        let nu_diff = linalg::sub(&dual.nu_out[j], &dual.nu_in[j]);
        v += linalg::dot(x_i, &nu_diff);
        v += 0.5 * (pen.rho_out[j] + pen.rho_in[j]) * linalg::norm_sq(&linalg::sub(x_i, xj));
    }
    Ok(v + constraint_terms(p, x_i, dual, pen)?)
}

/// `∇_{x_i} L̃_i`.
pub fn local_lagrangian_grad(
    p: &dyn LocalProblem,
    x_i: &[f64],
    x_nbr: &BTreeMap<usize, Vec<f64>>,
    dual: &DualLocal,
    pen: &PenaltyLocal,
) -> Result<Vec<f64>> {
    check_view(p, x_nbr, dual, pen)?;
    let mut grad = eval_objective_grad(p, x_i)?;
    for (j, xj) in x_nbr {
        let rho = pen.rho_out[j] + pen.rho_in[j];
        let (out, inn) = (&dual.nu_out[j], &dual.nu_in[j]);
        for k in 0..grad.len() {
            grad[k] += (out[k] - inn[k]) + rho * (x_i[k] - xj[k]);
        }
    }
    let (h, g) = eval_constraints(p, x_i)?;
    let (jh, jg) = eval_jacobians(p, x_i)?;
    for ((lam, hk), row) in dual.lambda.iter().zip(&h).zip(&jh) {
        linalg::axpy(lam + pen.varrho * hk, row, &mut grad);
    }
    for ((mu, gk), row) in dual.mu.iter().zip(&g).zip(&jg) {
        let w = (mu + pen.zeta * gk).max(0.0);
        if w > 0.0 {
            linalg::axpy(w, row, &mut grad);
        }
    }
    Ok(grad)
}

/// Global augmented Lagrangian. Consensus terms read `ν_ij` and `ρ_ij` from
/// node `i`'s outgoing maps; the cached incoming copies are not used.
pub fn global_lagrangian(
    problems: &[&dyn LocalProblem],
    x: &[Vec<f64>],
    duals: &[DualLocal],
    pens: &[PenaltyLocal],
) -> Result<f64> {
    let n_nodes = problems.len();
    check_dim("global iterates", n_nodes, x.len())?;
    check_dim("global duals", n_nodes, duals.len())?;
    check_dim("global penalties", n_nodes, pens.len())?;
    let mut total = 0.0;
    for i in 0..n_nodes {
        let p = problems[i];
        check_dim("equality multipliers", p.num_eq(), duals[i].lambda.len())?;
        check_dim("inequality multipliers", p.num_ineq(), duals[i].mu.len())?;
        let mut v = eval_objective(p, &x[i])?;
        for (j, nu) in &duals[i].nu_out {
            let xj = x.get(*j).ok_or_else(|| AsymmError::contract(format!("edge to unknown node {j}")))?;
            let rho = pens[i]
                .rho_out
                .get(j)
                .ok_or_else(|| AsymmError::contract(format!("missing rho for edge ({i},{j})")))?;
            let diff = linalg::sub(&x[i], xj);
            v += linalg::dot(nu, &diff) + 0.5 * rho * linalg::norm_sq(&diff);
        }
        total += v + constraint_terms(p, &x[i], &duals[i], &pens[i])?;
    }
    Ok(total)
}

/// Conservative Lipschitz constant of `∇L̃_i`, or `None` when the problem does
/// not publish a Hessian bound.
///
/// `H(1 + ‖λ‖ + ϱB_h + ‖μ‖ + ζB_g) + ϱJ_h² + ζJ_g² + Σ_j(ρ_ij + ρ_ji)`, where
/// `J_h`, `J_g` bound the constraint Jacobians. The Jacobian terms vanish for
/// unconstrained problems.
pub fn lipschitz_estimate(
    p: &dyn LocalProblem,
    dual: &DualLocal,
    pen: &PenaltyLocal,
    bounds: &RegionBounds,
) -> Option<f64> {
    let hess = p.hessian_bound()?;
    let (jh, jg) = p.jacobian_bounds().unwrap_or((0.0, 0.0));
    let jh = if p.num_eq() == 0 { 0.0 } else { jh };
    let jg = if p.num_ineq() == 0 { 0.0 } else { jg };
    let scale = 1.0
        + linalg::norm(&dual.lambda)
        + pen.varrho * bounds.eq_value
        + linalg::norm(&dual.mu)
        + pen.zeta * bounds.ineq_value;
    let consensus: f64 = pen
        .rho_out
        .iter()
        .map(|(j, r)| r + pen.rho_in.get(j).copied().unwrap_or(0.0))
        .sum();
    Some(hess * scale + pen.varrho * jh * jh + pen.zeta * jg * jg + consensus)
}
