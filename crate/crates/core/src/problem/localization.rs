//! Range-based source localization with bounded measurement noise.
//!
//! Sensor `i` at anchor `c_i` measures `y_i = ‖x* − c_i‖ + w_i` with
//! `|w_i| ≤ κ_i`, so the source lies in the annulus
//! `r_i ≤ ‖x − c_i‖ ≤ R_i` with `r_i = y_i − κ_i` and `R_i = y_i + κ_i`.
//! The annulus is not convex. The objective is `xᵀx`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::LocalProblem;
use crate::error::{AsymmError, Result};
use crate::linalg;

/// Below this distance to the anchor the norm is treated as nonsmooth and its
/// gradient is taken as zero.
const ANCHOR_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationProblem {
    pub anchor: Vec<f64>,
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Range measurement `y_i`, when generated from a noisy reading.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measurement: Option<f64>,
    /// Noise bound `κ_i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_bound: Option<f64>,
}

impl LocalizationProblem {
    pub fn from_radii(anchor: Vec<f64>, inner_radius: f64, outer_radius: f64) -> Result<Self> {
        if !(0.0 <= inner_radius && inner_radius <= outer_radius) {
            return Err(AsymmError::contract(format!(
                "annulus radii must satisfy 0 <= r <= R, got r={inner_radius}, R={outer_radius}"
            )));
        }
        if anchor.is_empty() {
            return Err(AsymmError::contract("anchor must have at least one coordinate"));
        }
        Ok(Self {
            anchor,
            inner_radius,
            outer_radius,
            measurement: None,
            noise_bound: None,
        })
    }

    /// Annulus from a range reading and its noise bound. The inner radius is
    /// clamped at zero.
    pub fn from_measurement(anchor: Vec<f64>, measurement: f64, noise_bound: f64) -> Result<Self> {
        if noise_bound < 0.0 {
            return Err(AsymmError::contract("noise bound must be nonnegative"));
        }
        let mut p = Self::from_radii(
            anchor,
            (measurement - noise_bound).max(0.0),
            measurement + noise_bound,
        )?;
        p.measurement = Some(measurement);
        p.noise_bound = Some(noise_bound);
        Ok(p)
    }

    fn anchor_offset(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let d = linalg::sub(x, &self.anchor);
        let r = linalg::norm(&d);
        (d, r)
    }
}

impl LocalProblem for LocalizationProblem {
    fn dim(&self) -> usize {
        self.anchor.len()
    }

    fn num_ineq(&self) -> usize {
        2
    }

    fn objective(&self, x: &[f64]) -> f64 {
        linalg::norm_sq(x)
    }

    fn objective_grad(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| 2.0 * v).collect()
    }

    fn ineq_values(&self, x: &[f64]) -> Vec<f64> {
        let (_, r) = self.anchor_offset(x);
        vec![r - self.outer_radius, self.inner_radius - r]
    }

    fn ineq_jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let (d, r) = self.anchor_offset(x);
        let unit: Vec<f64> = if r < ANCHOR_GUARD {
            vec![0.0; d.len()]
        } else {
            d.iter().map(|v| v / r).collect()
        };
        let neg = unit.iter().map(|v| -v).collect();
        vec![unit, neg]
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("localization problem serializes")
    }
}

/// A generated localization benchmark together with its true source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationInstance {
    pub source: Vec<f64>,
    pub nodes: Vec<LocalizationProblem>,
}

/// Draws a seeded instance: source and anchors uniform in
/// `[-half_width, half_width]^dim`, noise bounds uniform in `[0, kappa_max]`
/// and noise uniform in `[-κ_i, κ_i]`.
pub fn build_localization_instance(
    seed: u64,
    num_nodes: usize,
    dim: usize,
    half_width: f64,
    kappa_max: f64,
) -> Result<LocalizationInstance> {
    if num_nodes == 0 {
        return Err(AsymmError::contract("localization needs at least one node"));
    }
    if dim == 0 || half_width <= 0.0 || kappa_max < 0.0 {
        return Err(AsymmError::contract(
            "localization needs dim >= 1, half_width > 0 and kappa_max >= 0",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let source: Vec<f64> = (0..dim)
        .map(|_| rng.random_range(-half_width..=half_width))
        .collect();
    let mut nodes = Vec::with_capacity(num_nodes);
    for _ in 0..num_nodes {
        let anchor: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-half_width..=half_width))
            .collect();
        let kappa = rng.random_range(0.0..=kappa_max);
        let noise = rng.random_range(-kappa..=kappa);
        let distance = linalg::dist(&source, &anchor);
        let mut p = LocalizationProblem::from_measurement(anchor, distance + noise, kappa)?;
        // Keep the true source inside the annulus despite rounding in y ± κ.
        p.inner_radius = p.inner_radius.min(distance);
        p.outer_radius = p.outer_radius.max(distance);
        nodes.push(p);
    }
    Ok(LocalizationInstance { source, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::testing::max_derivative_error;
    use crate::problem::{eval_constraints, eval_objective};

    #[test]
    fn objective_is_squared_norm() {
        let p = LocalizationProblem::from_radii(vec![0.0, 0.0], 1.0, 2.0).unwrap();
        assert_eq!(eval_objective(&p, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(eval_objective(&p, &[1.0, 2.0]).unwrap(), 5.0);
    }

    #[test]
    fn crown_constraint_values() {
        let p = LocalizationProblem::from_radii(vec![0.0, 0.0], 1.0, 2.0).unwrap();
        let (h, g) = eval_constraints(&p, &[1.5, 0.0]).unwrap();
        assert!(h.is_empty());
        assert_eq!(g, vec![-0.5, -0.5]);
        let (_, g) = eval_constraints(&p, &[0.0, 0.0]).unwrap();
        assert_eq!(g, vec![-2.0, 1.0]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let p = LocalizationProblem::from_radii(vec![0.0, 0.0], 1.0, 2.0).unwrap();
        assert!(eval_objective(&p, &[1.0]).is_err());
        assert!(eval_constraints(&p, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn anchor_gradient_guard_avoids_nan() {
        let p = LocalizationProblem::from_radii(vec![0.5, -0.5], 1.0, 2.0).unwrap();
        let jac = p.ineq_jacobian(&[0.5, -0.5]);
        assert!(jac.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn invalid_radii_rejected() {
        assert!(LocalizationProblem::from_radii(vec![0.0, 0.0], 2.0, 1.0).is_err());
        assert!(LocalizationProblem::from_radii(vec![0.0, 0.0], -0.1, 1.0).is_err());
    }

    #[test]
    fn zero_noise_puts_source_on_every_boundary() {
        let inst = build_localization_instance(11, 6, 2, 2.5, 0.0).unwrap();
        for p in &inst.nodes {
            let d = linalg::dist(&inst.source, &p.anchor);
            assert_eq!(p.inner_radius, d);
            assert_eq!(p.outer_radius, d);
        }
    }

    #[test]
    fn instance_is_seed_deterministic() {
        let a = build_localization_instance(3, 10, 2, 2.5, 0.3).unwrap();
        let b = build_localization_instance(3, 10, 2, 2.5, 0.3).unwrap();
        assert_eq!(a, b);
        let c = build_localization_instance(4, 10, 2, 2.5, 0.3).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn source_is_feasible_for_every_node() {
        for seed in 0..50 {
            let inst = build_localization_instance(seed, 10, 2, 2.5, 0.3).unwrap();
            for p in &inst.nodes {
                assert!(p.inner_radius >= 0.0 && p.inner_radius <= p.outer_radius);
                let (_, g) = eval_constraints(p, &inst.source).unwrap();
                assert!(g.iter().all(|v| *v <= 0.0), "seed {seed}: g = {g:?}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let inst = build_localization_instance(5, 4, 2, 2.5, 0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for p in &inst.nodes {
            for _ in 0..20 {
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
                assert!(max_derivative_error(p, &x) <= 1e-5);
            }
        }
    }
}
