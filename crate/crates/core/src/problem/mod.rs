//! Private per-node optimization data.
//!
//! A node owns an objective `f_i`, equality constraints `h_i(x) = 0` and
//! inequality constraints `g_i(x) <= 0` over the shared decision variable
//! `x ∈ R^n`. Problems are supplied as value/gradient evaluator pairs through
//! the [`LocalProblem`] trait; concrete benchmark families are selected by name
//! through a [`ProblemFamily`] registry entry.

mod family;
mod localization;
mod nn;
mod quadratic;

pub use family::{
    LocalizationFamily, NnClassifierFamily, ProblemFamily, ProblemInstance, QuadraticFamily,
};
pub use localization::{build_localization_instance, LocalizationInstance, LocalizationProblem};
pub use nn::{
    nested_circles, nn_forward, two_moons, NnClassifierProblem, NnParams, NN_PARAM_COUNT,
};
pub use quadratic::QuadraticProblem;

use std::fmt::Debug;

use crate::error::{check_dim, Result};

/// One node's private objective and constraints.
///
/// Jacobians are returned row-wise: entry `k` is the gradient of constraint
/// component `k`. Evaluators must be pure.
pub trait LocalProblem: Send + Sync + Debug {
    /// Dimension `n` of the shared decision variable.
    fn dim(&self) -> usize;

    fn num_eq(&self) -> usize {
        0
    }

    fn num_ineq(&self) -> usize {
        0
    }

    fn objective(&self, x: &[f64]) -> f64;

    fn objective_grad(&self, x: &[f64]) -> Vec<f64>;

    fn eq_values(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    fn eq_jacobian(&self, _x: &[f64]) -> Vec<Vec<f64>> {
        Vec::new()
    }

    fn ineq_values(&self, _x: &[f64]) -> Vec<f64> {
        Vec::new()
    }

    fn ineq_jacobian(&self, _x: &[f64]) -> Vec<Vec<f64>> {
        Vec::new()
    }

    /// Upper bound on the spectral norm of every Hessian of `f_i` and of each
    /// component of `h_i`, `g_i`. `None` means unknown.
    fn hessian_bound(&self) -> Option<f64> {
        None
    }

    /// Upper bounds on the spectral norms of the equality and inequality
    /// constraint Jacobians, when known globally.
    fn jacobian_bounds(&self) -> Option<(f64, f64)> {
        None
    }

    /// Serialized form, used for instance files.
    fn to_json(&self) -> serde_json::Value;
}

/// `f_i(x)` with dimension checks.
pub fn eval_objective(p: &dyn LocalProblem, x: &[f64]) -> Result<f64> {
    check_dim("objective input", p.dim(), x.len())?;
    Ok(p.objective(x))
}

/// `∇f_i(x)` with dimension checks.
pub fn eval_objective_grad(p: &dyn LocalProblem, x: &[f64]) -> Result<Vec<f64>> {
    check_dim("objective input", p.dim(), x.len())?;
    let g = p.objective_grad(x);
    check_dim("objective gradient", p.dim(), g.len())?;
    Ok(g)
}

/// Stacked constraint values `(h_i(x), g_i(x))`.
pub fn eval_constraints(p: &dyn LocalProblem, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim("constraint input", p.dim(), x.len())?;
    let h = p.eq_values(x);
    check_dim("equality constraints", p.num_eq(), h.len())?;
    let g = p.ineq_values(x);
    check_dim("inequality constraints", p.num_ineq(), g.len())?;
    Ok((h, g))
}

/// Row-wise Jacobians `(∇h_i(x), ∇g_i(x))`.
pub fn eval_jacobians(p: &dyn LocalProblem, x: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    check_dim("jacobian input", p.dim(), x.len())?;
    let jh = p.eq_jacobian(x);
    check_dim("equality jacobian rows", p.num_eq(), jh.len())?;
    let jg = p.ineq_jacobian(x);
    check_dim("inequality jacobian rows", p.num_ineq(), jg.len())?;
    for row in jh.iter().chain(&jg) {
        check_dim("jacobian row", p.dim(), row.len())?;
    }
    Ok((jh, jg))
}

#[cfg(test)]
pub(crate) mod testing {
    use super::LocalProblem;

    /// Central finite difference of `f` at `x`.
    pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|k| {
                let orig = probe[k];
                probe[k] = orig + step;
                let up = f(&probe);
                probe[k] = orig - step;
                let down = f(&probe);
                probe[k] = orig;
                (up - down) / (2.0 * step)
            })
            .collect()
    }

    /// Relative error `‖a − b‖ / max(1, ‖b‖)`.
    pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff = crate::linalg::dist(a, b);
        diff / crate::linalg::norm(b).max(1.0)
    }

    /// Checks every analytic derivative of `p` against finite differences at `x`.
    pub fn max_derivative_error(p: &dyn LocalProblem, x: &[f64]) -> f64 {
        let h = 1e-6;
        let mut worst = rel_err(&p.objective_grad(x), &central_diff(|y| p.objective(y), x, h));
        for (k, row) in p.eq_jacobian(x).iter().enumerate() {
            let fd = central_diff(|y| p.eq_values(y)[k], x, h);
            worst = worst.max(rel_err(row, &fd));
        }
        for (k, row) in p.ineq_jacobian(x).iter().enumerate() {
            let fd = central_diff(|y| p.ineq_values(y)[k], x, h);
            worst = worst.max(rel_err(row, &fd));
        }
        worst
    }
}
