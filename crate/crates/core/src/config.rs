//! Self-contained run configuration, read from JSON or TOML.

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AsymmError, Result};
use crate::lagrangian::RegionBounds;
use crate::multipliers::PenaltyScheduleParams;
use crate::node::ToleranceSchedule;
use crate::simulator::{generate_watts_strogatz, Network, StopRule, TimerParams};

/// Communication graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GraphSpec {
    WattsStrogatz {
        k: usize,
        #[serde(default = "default_rewire")]
        rewire_p: f64,
    },
    Edges {
        edges: Vec<(usize, usize)>,
    },
    Path,
    Complete,
}

fn default_rewire() -> f64 {
    0.2
}

impl GraphSpec {
    pub fn build(&self, num_nodes: usize, seed: u64) -> Result<Network> {
        let net = match self {
            GraphSpec::WattsStrogatz { k, rewire_p } => generate_watts_strogatz(seed, num_nodes, *k, *rewire_p),
            GraphSpec::Edges { edges } => Network::from_edges(num_nodes, edges),
            GraphSpec::Path => Network::path(num_nodes),
            GraphSpec::Complete => Network::complete(num_nodes),
        };
        // A disconnected or malformed user graph is a configuration problem.
        net.map_err(|e| match e {
            AsymmError::Contract(msg) => AsymmError::Config(msg),
            other => other,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepConfig {
    /// Registered step-rule name.
    pub rule: String,
    pub initial_lipschitz: f64,
    pub bounds: RegionBounds,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            rule: "auto".into(),
            initial_lipschitz: 1.0,
            bounds: RegionBounds::default(),
        }
    }
}

/// Bounding box and resolution of the classifier-region export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub resolution: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_min: -2.0,
            x_max: 3.0,
            y_min: -1.5,
            y_max: 1.5,
            resolution: 101,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max && self.y_min < self.y_max) || self.resolution < 2 {
            return Err(AsymmError::config("grid needs a nonempty box and resolution >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Registered problem-family name.
    pub family: String,
    /// Family parameters; `null` selects the family defaults.
    #[serde(default)]
    pub params: serde_json::Value,
    pub nodes: usize,
    #[serde(default)]
    pub seed: u64,
    pub graph: GraphSpec,
    /// Status-matrix rows; the exact diameter when absent. Must not be
    /// below the diameter.
    #[serde(default)]
    pub diameter_bound: Option<usize>,
    #[serde(default)]
    pub penalty: PenaltyScheduleParams,
    #[serde(default)]
    pub tolerance: ToleranceSchedule,
    #[serde(default)]
    pub timers: TimerParams,
    #[serde(default)]
    pub step: StepConfig,
    /// Block-wise descent with this many blocks; whole-vector when absent.
    #[serde(default)]
    pub block_count: Option<usize>,
    #[serde(default)]
    pub stop: StopRule,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub grid: GridSpec,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AsymmError::config(format!("config: {e}")))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| AsymmError::config(format!("config: {e}")))
    }

    /// Reads `.toml` files as TOML and everything else as JSON.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AsymmError::config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml_str(&text)?,
            _ => Self::from_json_str(&text)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes == 0 {
            return Err(AsymmError::config("a run needs at least one node"));
        }
        self.penalty.validate()?;
        self.tolerance.validate()?;
        self.timers.validate()?;
        self.grid.validate()?;
        if !(self.step.initial_lipschitz > 0.0 && self.step.initial_lipschitz.is_finite()) {
            return Err(AsymmError::config("initial Lipschitz estimate must be positive"));
        }
        if self.step.bounds.eq_value < 0.0 || self.step.bounds.ineq_value < 0.0 {
            return Err(AsymmError::config("region bounds must be nonnegative"));
        }
        if self.block_count == Some(0) {
            return Err(AsymmError::config("block count must be positive"));
        }
        if self.stop.max_events == 0 {
            return Err(AsymmError::config("stop rule needs max_events > 0"));
        }
        Ok(())
    }
}

/// Independent sub-seed for one consumer of the run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Sub-seed streams.
pub const GRAPH_STREAM: u64 = 1;
pub const INSTANCE_STREAM: u64 = 2;
pub const INIT_STREAM: u64 = 3;
pub const TIMER_STREAM: u64 = 4;

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"family": "localization", "nodes": 4, "graph": {"kind": "path"}}"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json_str(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.penalty.beta, 4.0);
        assert_eq!(c.stop.max_events, 25_000);
        assert_eq!(c.step.rule, "auto");
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = RunConfig::from_json_str(r#"{"family":"x","nodes":1,"graph":{"kind":"path"},"colour":1}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = RunConfig::from_json_str(r#"{"family":"x","nodes":1,"graph":{"kind":"path"},"penalty":{"betta":2}}"#)
            .unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn toml_and_json_agree() {
        let toml = r#"
family = "localization"
nodes = 4
seed = 7
block_count = 2

[graph]
kind = "watts-strogatz"
k = 2
rewire_p = 0.1

[penalty]
beta = 4.0
gamma = 0.25
"#;
        let a = RunConfig::from_toml_str(toml).unwrap();
        let b = RunConfig::from_json_str(&a.to_json_pretty().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.graph, GraphSpec::WattsStrogatz { k: 2, rewire_p: 0.1 });
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = RunConfig::from_json_str(MINIMAL).unwrap();
        c.nodes = 0;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
        let mut c = RunConfig::from_json_str(MINIMAL).unwrap();
        c.timers.t_min = 2.0;
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn disconnected_edges_are_config_errors() {
        let g = GraphSpec::Edges { edges: vec![(0, 1)] };
        assert_eq!(g.build(3, 0).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn sub_seeds_differ() {
        assert_ne!(derive_seed(5, GRAPH_STREAM), derive_seed(5, TIMER_STREAM));
        assert_eq!(derive_seed(5, GRAPH_STREAM), derive_seed(5, GRAPH_STREAM));
    }
}
