//! Two-input tanh network with hidden layers of four and two units, trained
//! by squared loss on a private labelled point set.
//!
//! The 25 parameters are stacked as `w1 (2×4, row-major) | b1 (4) |
//! w2 (4×2, row-major) | b2 (2) | w3 (2) | b3`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::LocalProblem;
use crate::error::{check_dim, AsymmError, Result};

pub const NN_PARAM_COUNT: usize = 25;

const W1: usize = 0;
const B1: usize = 8;
const W2: usize = 12;
const B2: usize = 20;
const W3: usize = 22;
const B3: usize = 24;

/// Unpacked network weights.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NnParams {
    pub w1: [[f64; 4]; 2],
    pub b1: [f64; 4],
    pub w2: [[f64; 2]; 4],
    pub b2: [f64; 2],
    pub w3: [f64; 2],
    pub b3: f64,
}

impl NnParams {
    pub fn unpack(x: &[f64]) -> Result<Self> {
        check_dim("network parameters", NN_PARAM_COUNT, x.len())?;
        let mut p = NnParams::default();
        for a in 0..2 {
            for b in 0..4 {
                p.w1[a][b] = x[W1 + a * 4 + b];
            }
        }
        p.b1.copy_from_slice(&x[B1..B1 + 4]);
        for a in 0..4 {
            for b in 0..2 {
                p.w2[a][b] = x[W2 + a * 2 + b];
            }
        }
        p.b2.copy_from_slice(&x[B2..B2 + 2]);
        p.w3.copy_from_slice(&x[W3..W3 + 2]);
        p.b3 = x[B3];
        Ok(p)
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut x = vec![0.0; NN_PARAM_COUNT];
        for a in 0..2 {
            for b in 0..4 {
                x[W1 + a * 4 + b] = self.w1[a][b];
            }
        }
        x[B1..B1 + 4].copy_from_slice(&self.b1);
        for a in 0..4 {
            for b in 0..2 {
                x[W2 + a * 2 + b] = self.w2[a][b];
            }
        }
        x[B2..B2 + 2].copy_from_slice(&self.b2);
        x[W3..W3 + 2].copy_from_slice(&self.w3);
        x[B3] = self.b3;
        x
    }
}

struct Activations {
    l1: [f64; 4],
    l2: [f64; 2],
    out: f64,
}

fn forward(p: &NnParams, z: &[f64; 2]) -> Activations {
    let mut l1 = [0.0; 4];
    for b in 0..4 {
        l1[b] = (p.w1[0][b] * z[0] + p.w1[1][b] * z[1] + p.b1[b]).tanh();
    }
    let mut l2 = [0.0; 2];
    for c in 0..2 {
        let mut s = p.b2[c];
        for b in 0..4 {
            s += p.w2[b][c] * l1[b];
        }
        l2[c] = s.tanh();
    }
    let out = (p.w3[0] * l2[0] + p.w3[1] * l2[1] + p.b3).tanh();
    Activations { l1, l2, out }
}

/// Network output `f(z, x)`.
pub fn nn_forward(z: &[f64; 2], x: &[f64]) -> Result<f64> {
    Ok(forward(&NnParams::unpack(x)?, z).out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NnClassifierProblem {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<f64>,
}

impl NnClassifierProblem {
    pub fn new(points: Vec<[f64; 2]>, labels: Vec<f64>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(AsymmError::contract("points and labels differ in length"));
        }
        if labels.iter().any(|y| *y != 1.0 && *y != -1.0) {
            return Err(AsymmError::contract("labels must be -1 or 1"));
        }
        Ok(Self { points, labels })
    }

    /// Fraction of points whose label matches `sign(f(z, x))`.
    pub fn accuracy(&self, x: &[f64]) -> Result<f64> {
        let p = NnParams::unpack(x)?;
        if self.points.is_empty() {
            return Ok(1.0);
        }
        let hits = self
            .points
            .iter()
            .zip(&self.labels)
            .filter(|(z, y)| forward(&p, z).out.signum() == y.signum())
            .count();
        Ok(hits as f64 / self.points.len() as f64)
    }
}

impl LocalProblem for NnClassifierProblem {
    fn dim(&self) -> usize {
        NN_PARAM_COUNT
    }

    fn objective(&self, x: &[f64]) -> f64 {
        let p = NnParams::unpack(x).expect("checked by caller");
        self.points
            .iter()
            .zip(&self.labels)
            .map(|(z, y)| {
                let e = forward(&p, z).out - y;
                e * e
            })
            .sum()
    }

    fn objective_grad(&self, x: &[f64]) -> Vec<f64> {
        let p = NnParams::unpack(x).expect("checked by caller");
        let mut g = NnParams::default();
        for (z, y) in self.points.iter().zip(&self.labels) {
            let a = forward(&p, z);
            let d3 = 2.0 * (a.out - y) * (1.0 - a.out * a.out);
            g.b3 += d3;
            let mut d2 = [0.0; 2];
            for c in 0..2 {
                g.w3[c] += d3 * a.l2[c];
                d2[c] = d3 * p.w3[c] * (1.0 - a.l2[c] * a.l2[c]);
                g.b2[c] += d2[c];
            }
            for b in 0..4 {
                let mut back = 0.0;
                for c in 0..2 {
                    g.w2[b][c] += d2[c] * a.l1[b];
                    back += d2[c] * p.w2[b][c];
                }
                let d1 = back * (1.0 - a.l1[b] * a.l1[b]);
                g.b1[b] += d1;
                g.w1[0][b] += d1 * z[0];
                g.w1[1][b] += d1 * z[1];
            }
        }
        g.pack()
    }

    fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("classifier problem serializes")
    }
}

/// Two interleaved half circles. The upper moon is labelled `1`, the lower `-1`.
pub fn two_moons<R: Rng>(count: usize, noise: f64, rng: &mut R) -> (Vec<[f64; 2]>, Vec<f64>) {
    let jitter = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let mut points = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for k in 0..count {
        let t = rng.random_range(0.0..PI);
        let (base, label) = if k % 2 == 0 {
            ([t.cos(), t.sin()], 1.0)
        } else {
            ([1.0 - t.cos(), 0.5 - t.sin()], -1.0)
        };
        points.push([
            base[0] + jitter.sample(rng),
            base[1] + jitter.sample(rng),
        ]);
        labels.push(label);
    }
    (points, labels)
}

/// Two concentric circles. The inner one (radius `factor`) is labelled `1`,
/// the outer unit circle `-1`.
pub fn nested_circles<R: Rng>(
    count: usize,
    noise: f64,
    factor: f64,
    rng: &mut R,
) -> (Vec<[f64; 2]>, Vec<f64>) {
    let jitter = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let mut points = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for k in 0..count {
        let t = rng.random_range(0.0..2.0 * PI);
        let (radius, label) = if k % 2 == 0 { (factor, 1.0) } else { (1.0, -1.0) };
        points.push([
            radius * t.cos() + jitter.sample(rng),
            radius * t.sin() + jitter.sample(rng),
        ]);
        labels.push(label);
    }
    (points, labels)
}
