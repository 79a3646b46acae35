//! Step-size rules for the primal descent. A rule returns the constant `L`
//! used in the step `x ← x − d/L`; rules are looked up by name in the
//! [`Registry`](crate::registry::Registry).

use std::collections::BTreeMap;

use crate::error::{AsymmError, Result};
use crate::lagrangian::{local_lagrangian, local_lagrangian_grad, lipschitz_estimate, DualLocal, PenaltyLocal, RegionBounds};
use crate::linalg;
use crate::problem::LocalProblem;

/// Past this the adaptive rule gives up.
pub const LIPSCHITZ_LIMIT: f64 = 1e12;

/// Everything `L̃_i` depends on apart from `x_i`.
#[derive(Clone, Copy)]
pub struct LocalView<'a> {
    pub problem: &'a dyn LocalProblem,
    pub x_nbr: &'a BTreeMap<usize, Vec<f64>>,
    pub dual: &'a DualLocal,
    pub pen: &'a PenaltyLocal,
}

impl LocalView<'_> {
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        local_lagrangian(self.problem, x, self.x_nbr, self.dual, self.pen)
    }

    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        local_lagrangian_grad(self.problem, x, self.x_nbr, self.dual, self.pen)
    }
}

/// `x − d/L`. Both the nodes and the replay oracle step through here so the
/// arithmetic is identical.
pub fn descent_step(x: &[f64], direction: &[f64], lipschitz: f64) -> Vec<f64> {
    x.iter().zip(direction).map(|(xi, di)| xi - di / lipschitz).collect()
}

pub trait StepRule: Send + Sync {
    fn name(&self) -> &'static str;

    /// Constant for a step from `x` along `−direction`. `current` is the
    /// node's running estimate for this cycle.
    fn lipschitz(
        &self,
        view: &LocalView<'_>,
        x: &[f64],
        direction: &[f64],
        current: f64,
        bounds: &RegionBounds,
    ) -> Result<f64>;
}

/// Doubles `current` until the sufficient-decrease test
/// `L̃(x − d/L) ≤ L̃(x) − ‖d‖²/(2L)` passes. A roundoff allowance of a few
/// ulps of `L̃(x)` keeps exact-equality cases (such as `L` equal to the true
/// curvature) from doubling spuriously.
pub fn adaptive_lipschitz(view: &LocalView<'_>, x: &[f64], direction: &[f64], current: f64) -> Result<f64> {
    if !(current > 0.0) {
        return Err(AsymmError::contract("Lipschitz estimate must be positive"));
    }
    let d_sq = linalg::norm_sq(direction);
    if d_sq == 0.0 {
        return Ok(current);
    }
    let f0 = view.value(x)?;
    let slack = 64.0 * f64::EPSILON * (1.0 + f0.abs());
    let mut l = current;
    loop {
        let f1 = view.value(&descent_step(x, direction, l))?;
        if f1 <= f0 - d_sq / (2.0 * l) + slack {
            return Ok(l);
        }
        l *= 2.0;
        if l > LIPSCHITZ_LIMIT {
            return Err(AsymmError::NumericAbort(format!(
                "Lipschitz estimate exceeded {LIPSCHITZ_LIMIT:e} (gradient norm {:e})",
                d_sq.sqrt()
            )));
        }
    }
}

/// Closed-form bound from the problem's published Hessian bound.
pub struct HessianBoundRule;

impl StepRule for HessianBoundRule {
    fn name(&self) -> &'static str {
        "hessian-bound"
    }

    fn lipschitz(&self, view: &LocalView<'_>, _x: &[f64], _d: &[f64], _current: f64, bounds: &RegionBounds) -> Result<f64> {
        lipschitz_estimate(view.problem, view.dual, view.pen, bounds).ok_or_else(|| {
            AsymmError::config("step rule `hessian-bound` needs a problem with a Hessian bound")
        })
    }
}

/// Doubling search, see [`adaptive_lipschitz`].
pub struct BacktrackingRule;

impl StepRule for BacktrackingRule {
    fn name(&self) -> &'static str {
        "backtracking"
    }

    fn lipschitz(&self, view: &LocalView<'_>, x: &[f64], d: &[f64], current: f64, _bounds: &RegionBounds) -> Result<f64> {
        adaptive_lipschitz(view, x, d, current)
    }
}

/// The closed-form bound when available, backtracking otherwise.
pub struct AutoRule;

impl StepRule for AutoRule {
    fn name(&self) -> &'static str {
        "auto"
    }

    fn lipschitz(&self, view: &LocalView<'_>, x: &[f64], d: &[f64], current: f64, bounds: &RegionBounds) -> Result<f64> {
        match lipschitz_estimate(view.problem, view.dual, view.pen, bounds) {
            Some(l) => Ok(l),
            None => adaptive_lipschitz(view, x, d, current),
        }
    }
}
