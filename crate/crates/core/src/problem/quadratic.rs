use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::LocalProblem;
use crate::error::{check_dim, AsymmError, Result};
use crate::linalg;

/// `f(x) = ½ xᵀQx − bᵀx` with optional affine constraints
/// `A_eq x − b_eq = 0` and `A_in x − b_in ≤ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticProblem {
    pub q: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default)]
    pub eq_a: Vec<Vec<f64>>,
    #[serde(default)]
    pub eq_b: Vec<f64>,
    #[serde(default)]
    pub ineq_a: Vec<Vec<f64>>,
    #[serde(default)]
    pub ineq_b: Vec<f64>,
    #[serde(skip)]
    bounds: Option<(f64, f64, f64)>,
}

fn spectral_norm(rows: &[Vec<f64>], cols: usize) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let a = DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]);
    let gram = a.transpose() * &a;
    SymmetricEigen::new(gram)
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, v| m.max(*v))
        .sqrt()
}

impl QuadraticProblem {
    pub fn new(q: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        Self::with_constraints(q, b, Vec::new(), Vec::new(), Vec::new(), Vec::new())
    }

    pub fn with_constraints(
        q: Vec<Vec<f64>>,
        b: Vec<f64>,
        eq_a: Vec<Vec<f64>>,
        eq_b: Vec<f64>,
        ineq_a: Vec<Vec<f64>>,
        ineq_b: Vec<f64>,
    ) -> Result<Self> {
        let mut p = Self {
            q,
            b,
            eq_a,
            eq_b,
            ineq_a,
            ineq_b,
            bounds: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks shapes and symmetry, then caches the spectral bounds. Needed
    /// after deserialization.
    pub fn validate(&mut self) -> Result<()> {
        let n = self.b.len();
        if n == 0 {
            return Err(AsymmError::contract("quadratic problem needs dim >= 1"));
        }
        check_dim("quadratic Q rows", n, self.q.len())?;
        for row in &self.q {
            check_dim("quadratic Q columns", n, row.len())?;
        }
        for r in 0..n {
            for c in 0..r {
                if (self.q[r][c] - self.q[c][r]).abs() > 1e-12 * (1.0 + self.q[r][c].abs()) {
                    return Err(AsymmError::contract("quadratic Q must be symmetric"));
                }
            }
        }
        check_dim("equality right-hand side", self.eq_a.len(), self.eq_b.len())?;
        check_dim("inequality right-hand side", self.ineq_a.len(), self.ineq_b.len())?;
        for row in self.eq_a.iter().chain(&self.ineq_a) {
            check_dim("constraint row", n, row.len())?;
        }
        let qm = DMatrix::from_fn(n, n, |r, c| self.q[r][c]);
        let hess = SymmetricEigen::new(qm)
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        self.bounds = Some((
            hess,
            spectral_norm(&self.eq_a, n),
            spectral_norm(&self.ineq_a, n),
        ));
        Ok(())
    }

    fn cached_bounds(&self) -> (f64, f64, f64) {
        self.bounds.expect("quadratic problem validated before use")
    }

    fn affine(rows: &[Vec<f64>], rhs: &[f64], x: &[f64]) -> Vec<f64> {
        rows.iter()
            .zip(rhs)
            .map(|(a, b)| linalg::dot(a, x) - b)
            .collect()
    }
}

impl LocalProblem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn num_eq(&self) -> usize {
        self.eq_a.len()
    }

    fn num_ineq(&self) -> usize {
        self.ineq_a.len()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let qx: Vec<f64> = self.q.iter().map(|row| linalg::dot(row, x)).collect();
        0.5 * linalg::dot(x, &qx) - linalg::dot(&self.b, x)
    }

    fn objective_grad(&self, x: &[f64]) -> Vec<f64> {
        self.q
            .iter()
            .zip(&self.b)
            .map(|(row, bi)| linalg::dot(row, x) - bi)
            .collect()
    }

    fn eq_values(&self, x: &[f64]) -> Vec<f64> {
        Self::affine(&self.eq_a, &self.eq_b, x)
    }

    fn eq_jacobian(&self, _x: &[f64]) -> Vec<Vec<f64>> {
        self.eq_a.clone()
    }

    fn ineq_values(&self, x: &[f64]) -> Vec<f64> {
        Self::affine(&self.ineq_a, &self.ineq_b, x)
    }

    fn ineq_jacobian(&self, _x: &[f64]) -> Vec<Vec<f64>> {
        self.ineq_a.clone()
    }

    fn hessian_bound(&self) -> Option<f64> {
        Some(self.cached_bounds().0)
    }

    fn jacobian_bounds(&self) -> Option<(f64, f64)> {
        let (_, jh, jg) = self.cached_bounds();
        Some((jh, jg))
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("quadratic problem serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::testing::max_derivative_error;

    #[test]
    fn bounds_and_values() {
        let p = QuadraticProblem::with_constraints(
            vec![vec![2.0, 0.0], vec![0.0, 4.0]],
            vec![1.0, 1.0],
            vec![vec![3.0, 4.0]],
            vec![1.0],
            vec![vec![1.0, 0.0]],
            vec![0.5],
        )
        .unwrap();
        assert_eq!(p.hessian_bound(), Some(4.0));
        let (jh, jg) = p.jacobian_bounds().unwrap();
        assert!((jh - 5.0).abs() < 1e-12 && (jg - 1.0).abs() < 1e-12);
        assert_eq!(p.objective(&[1.0, 1.0]), 0.5 * 6.0 - 2.0);
        assert_eq!(p.eq_values(&[1.0, 1.0]), vec![6.0]);
        assert_eq!(p.ineq_values(&[1.0, 1.0]), vec![0.5]);
        assert!(max_derivative_error(&p, &[0.3, -0.7]) <= 1e-5);
    }

    #[test]
    fn rejects_asymmetric_and_misshaped() {
        assert!(QuadraticProblem::new(vec![vec![1.0, 2.0], vec![0.0, 1.0]], vec![0.0, 0.0]).is_err());
        assert!(QuadraticProblem::new(vec![vec![1.0]], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn json_round_trip_revalidates() {
        let p = QuadraticProblem::new(vec![vec![3.0]], vec![1.0]).unwrap();
        let mut back: QuadraticProblem = serde_json::from_value(p.to_json()).unwrap();
        back.validate().unwrap();
        assert_eq!(back.hessian_bound(), Some(3.0));
    }
}
