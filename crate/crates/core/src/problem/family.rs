//! Named problem generators.
//!
//! A [`ProblemFamily`] turns a JSON parameter block into a serializable
//! [`ProblemInstance`] and rebuilds the per-node evaluators from it, so a run
//! can be reproduced from its instance file alone.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    build_localization_instance, nested_circles, two_moons, LocalProblem, LocalizationProblem,
    NnClassifierProblem, QuadraticProblem, NN_PARAM_COUNT,
};
use crate::error::{AsymmError, Result};

/// A fully materialized benchmark: one serialized problem per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub family: String,
    pub seed: u64,
    pub dim: usize,
    pub nodes: Vec<serde_json::Value>,
    /// Family-specific extras (true source location, dataset name, ...).
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub trait ProblemFamily: Send + Sync {
    fn name(&self) -> &'static str;

    /// Draws a seeded instance for `num_nodes` nodes.
    fn generate(
        &self,
        params: &serde_json::Value,
        num_nodes: usize,
        seed: u64,
    ) -> Result<ProblemInstance>;

    /// Rebuilds the node evaluators.
    fn instantiate(&self, instance: &ProblemInstance) -> Result<Vec<Arc<dyn LocalProblem>>>;

    /// Initial primal iterate of every node.
    fn initial_points(&self, instance: &ProblemInstance, _seed: u64) -> Vec<Vec<f64>> {
        vec![vec![0.0; instance.dim]; instance.nodes.len()]
    }

    /// Family-specific scalar summaries of a consensus solution.
    fn report(
        &self,
        _instance: &ProblemInstance,
        _consensus: &[f64],
    ) -> Result<BTreeMap<String, f64>> {
        Ok(BTreeMap::new())
    }
}

fn parse_params<T: DeserializeOwned + Default>(params: &serde_json::Value) -> Result<T> {
    if params.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(params.clone())
        .map_err(|e| AsymmError::config(format!("problem parameters: {e}")))
}

fn decode_nodes<T: DeserializeOwned>(instance: &ProblemInstance) -> Result<Vec<T>> {
    instance
        .nodes
        .iter()
        .map(|v| {
            serde_json::from_value(v.clone())
                .map_err(|e| AsymmError::config(format!("instance node: {e}")))
        })
        .collect()
}

fn check_family(instance: &ProblemInstance, name: &str) -> Result<()> {
    if instance.family != name {
        return Err(AsymmError::config(format!(
            "instance belongs to family `{}`, not `{name}`",
            instance.family
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct LocalizationParams {
    dim: usize,
    half_width: f64,
    kappa_max: f64,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        Self {
            dim: 2,
            half_width: 2.5,
            kappa_max: 0.3,
        }
    }
}

/// Annulus-constrained source localization, objective `xᵀx`.
pub struct LocalizationFamily;

impl ProblemFamily for LocalizationFamily {
    fn name(&self) -> &'static str {
        "localization"
    }

    fn generate(
        &self,
        params: &serde_json::Value,
        num_nodes: usize,
        seed: u64,
    ) -> Result<ProblemInstance> {
        let p: LocalizationParams = parse_params(params)?;
        let inst = build_localization_instance(seed, num_nodes, p.dim, p.half_width, p.kappa_max)?;
        Ok(ProblemInstance {
            family: self.name().into(),
            seed,
            dim: p.dim,
            nodes: inst
                .nodes
                .iter()
                .map(|n| serde_json::to_value(n).expect("serializable"))
                .collect(),
            meta: serde_json::json!({
                "source": inst.source,
                "noise": "uniform",
            }),
        })
    }

    fn instantiate(&self, instance: &ProblemInstance) -> Result<Vec<Arc<dyn LocalProblem>>> {
        check_family(instance, self.name())?;
        let nodes: Vec<LocalizationProblem> = decode_nodes(instance)?;
        Ok(nodes
            .into_iter()
            .map(|p| Arc::new(p) as Arc<dyn LocalProblem>)
            .collect())
    }

    fn report(
        &self,
        instance: &ProblemInstance,
        consensus: &[f64],
    ) -> Result<BTreeMap<String, f64>> {
        let mut out = BTreeMap::new();
        if let Some(src) = instance.meta.get("source") {
            let src: Vec<f64> = serde_json::from_value(src.clone())?;
            out.insert(
                "distance_to_source".into(),
                crate::linalg::dist(&src, consensus),
            );
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Dataset {
    TwoMoons,
    NestedCircles,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct NnFamilyParams {
    dataset: Dataset,
    points_per_node: usize,
    noise: f64,
    factor: f64,
    init_half_width: f64,
}

impl Default for NnFamilyParams {
    fn default() -> Self {
        Self {
            dataset: Dataset::TwoMoons,
            points_per_node: 100,
            noise: 0.1,
            factor: 0.5,
            init_half_width: 0.5,
        }
    }
}

/// Distributed training of the 2-4-2-1 tanh classifier.
pub struct NnClassifierFamily;

impl ProblemFamily for NnClassifierFamily {
    fn name(&self) -> &'static str {
        "nn-classifier"
    }

    fn generate(
        &self,
        params: &serde_json::Value,
        num_nodes: usize,
        seed: u64,
    ) -> Result<ProblemInstance> {
        let p: NnFamilyParams = parse_params(params)?;
        if num_nodes == 0 || p.points_per_node == 0 {
            return Err(AsymmError::config(
                "classifier needs at least one node and one point per node",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut nodes = Vec::with_capacity(num_nodes);
        for _ in 0..num_nodes {
            let (z, y) = match p.dataset {
                Dataset::TwoMoons => two_moons(p.points_per_node, p.noise, &mut rng),
                Dataset::NestedCircles => {
                    nested_circles(p.points_per_node, p.noise, p.factor, &mut rng)
                }
            };
            nodes.push(serde_json::to_value(NnClassifierProblem::new(z, y)?)?);
        }
        Ok(ProblemInstance {
            family: self.name().into(),
            seed,
            dim: NN_PARAM_COUNT,
            nodes,
            meta: serde_json::json!({
                "dataset": p.dataset,
                "init_half_width": p.init_half_width,
            }),
        })
    }

    fn instantiate(&self, instance: &ProblemInstance) -> Result<Vec<Arc<dyn LocalProblem>>> {
        check_family(instance, self.name())?;
        let nodes: Vec<NnClassifierProblem> = decode_nodes(instance)?;
        Ok(nodes
            .into_iter()
            .map(|p| Arc::new(p) as Arc<dyn LocalProblem>)
            .collect())
    }

    fn initial_points(&self, instance: &ProblemInstance, seed: u64) -> Vec<Vec<f64>> {
        let width = instance
            .meta
            .get("init_half_width")
            .and_then(|v| v.as_f64())
            .unwrap_or(0.5);
        // Separate stream from the dataset draw.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        (0..instance.nodes.len())
            .map(|_| {
                (0..NN_PARAM_COUNT)
                    .map(|_| rng.random_range(-width..=width))
                    .collect()
            })
            .collect()
    }

    fn report(
        &self,
        instance: &ProblemInstance,
        consensus: &[f64],
    ) -> Result<BTreeMap<String, f64>> {
        let nodes: Vec<NnClassifierProblem> = decode_nodes(instance)?;
        let mut hits = 0.0;
        let mut total = 0.0;
        for p in &nodes {
            hits += p.accuracy(consensus)? * p.points.len() as f64;
            total += p.points.len() as f64;
        }
        let mut out = BTreeMap::new();
        out.insert(
            "training_accuracy".into(),
            if total > 0.0 { hits / total } else { 1.0 },
        );
        Ok(out)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct QuadraticParams {
    dim: usize,
    equalities: usize,
    inequalities: usize,
    /// Explicit per-node problems; overrides random generation.
    nodes: Option<Vec<QuadraticProblem>>,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        Self {
            dim: 2,
            equalities: 0,
            inequalities: 0,
            nodes: None,
        }
    }
}

/// Convex quadratics with optional affine constraints, either given
/// explicitly or drawn at random around a common feasible point.
pub struct QuadraticFamily;

impl ProblemFamily for QuadraticFamily {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn generate(
        &self,
        params: &serde_json::Value,
        num_nodes: usize,
        seed: u64,
    ) -> Result<ProblemInstance> {
        let p: QuadraticParams = parse_params(params)?;
        let problems = match p.nodes {
            Some(nodes) => {
                if nodes.len() != num_nodes {
                    return Err(AsymmError::config(format!(
                        "{} explicit quadratic nodes for a {num_nodes}-node network",
                        nodes.len()
                    )));
                }
                let mut out = Vec::with_capacity(nodes.len());
                for mut q in nodes {
                    q.validate()?;
                    out.push(q);
                }
                out
            }
            None => random_quadratics(&p, num_nodes, seed)?,
        };
        let dim = problems.first().map(|q| q.b.len()).unwrap_or(p.dim);
        if problems.iter().any(|q| q.b.len() != dim) {
            return Err(AsymmError::config("quadratic nodes disagree on dimension"));
        }
        Ok(ProblemInstance {
            family: self.name().into(),
            seed,
            dim,
            nodes: problems
                .iter()
                .map(|q| serde_json::to_value(q).expect("serializable"))
                .collect(),
            meta: serde_json::Value::Null,
        })
    }

    fn instantiate(&self, instance: &ProblemInstance) -> Result<Vec<Arc<dyn LocalProblem>>> {
        check_family(instance, self.name())?;
        let nodes: Vec<QuadraticProblem> = decode_nodes(instance)?;
        nodes
            .into_iter()
            .map(|mut q| {
                q.validate()?;
                Ok(Arc::new(q) as Arc<dyn LocalProblem>)
            })
            .collect()
    }
}

fn random_quadratics(p: &QuadraticParams, num_nodes: usize, seed: u64) -> Result<Vec<QuadraticProblem>> {
    if p.dim == 0 || num_nodes == 0 {
        return Err(AsymmError::config("quadratic family needs dim >= 1 and nodes >= 1"));
    }
    let n = p.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let anchor: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(num_nodes);
    for _ in 0..num_nodes {
        let m: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let q: Vec<Vec<f64>> = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| {
                        let mm: f64 = (0..n).map(|k| m[r][k] * m[c][k]).sum::<f64>() / n as f64;
                        mm + if r == c { 0.5 } else { 0.0 }
                    })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let row = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let eq_a: Vec<Vec<f64>> = (0..p.equalities).map(|_| row(&mut rng)).collect();
        let eq_b = eq_a.iter().map(|a| crate::linalg::dot(a, &anchor)).collect();
        let ineq_a: Vec<Vec<f64>> = (0..p.inequalities).map(|_| row(&mut rng)).collect();
        let ineq_b = ineq_a
            .iter()
            .map(|a| crate::linalg::dot(a, &anchor) + rng.random_range(0.0..1.0))
            .collect();
        out.push(QuadraticProblem::with_constraints(q, b, eq_a, eq_b, ineq_a, ineq_b)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::eval_constraints;

    #[test]
    fn instances_round_trip_through_json() {
        let fams: [&dyn ProblemFamily; 3] = [&LocalizationFamily, &NnClassifierFamily, &QuadraticFamily];
        for fam in fams {
            let inst = fam.generate(&serde_json::Value::Null, 4, 17).unwrap();
            let text = serde_json::to_string(&inst).unwrap();
            let back: ProblemInstance = serde_json::from_str(&text).unwrap();
            assert_eq!(back, inst);
            let probs = fam.instantiate(&back).unwrap();
            assert_eq!(probs.len(), 4);
            assert!(probs.iter().all(|p| p.dim() == inst.dim));
        }
    }

    #[test]
    fn unknown_parameters_rejected() {
        let err = LocalizationFamily
            .generate(&serde_json::json!({"dim": 2, "bogus": 1}), 3, 0)
            .unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn random_constraints_share_a_feasible_point() {
        let params = serde_json::json!({"dim": 3, "equalities": 1, "inequalities": 2});
        let inst = QuadraticFamily.generate(&params, 5, 9).unwrap();
        let probs = QuadraticFamily.instantiate(&inst).unwrap();
        // The generator's anchor point is the first draw of the seeded stream.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let anchor: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        for p in &probs {
            let (h, g) = eval_constraints(p.as_ref(), &anchor).unwrap();
            assert!(h.iter().all(|v| v.abs() < 1e-12));
            assert!(g.iter().all(|v| *v < 0.0));
        }
    }

    #[test]
    fn nn_initial_points_are_seeded_and_bounded() {
        let inst = NnClassifierFamily.generate(&serde_json::Value::Null, 3, 5).unwrap();
        let a = NnClassifierFamily.initial_points(&inst, 5);
        let b = NnClassifierFamily.initial_points(&inst, 5);
        assert_eq!(a, b);
        assert!(a.iter().flatten().all(|v| v.abs() <= 0.5));
        assert_ne!(a[0], a[1]);
    }
}
