//! Seeded experiment runs and their on-disk artifacts.
//!
//! A run directory holds `config.json` (the resolved config), `instance.json`,
//! `trace.jsonl`, `trace.bin`, the CSV exports and `summary.json`. Everything
//! except the wall time in the summary is a pure function of the config.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{derive_seed, RunConfig, GRAPH_STREAM, INIT_STREAM, INSTANCE_STREAM, TIMER_STREAM};
use crate::error::{AsymmError, Result};
use crate::linalg;
use crate::metrics::{export_metrics, SCHEMA_VERSION};
use crate::node::{NodeConfig, NodeState, Task};
use crate::problem::{nn_forward, LocalProblem, ProblemFamily, ProblemInstance, NN_PARAM_COUNT};
use crate::reference::{replay_trace, ReplayReport};
use crate::registry::Registry;
use crate::simulator::{check_trace_properties, schedule_run, trace_cycles, EventTrace, Network, RunOutput, TraceReport};

/// Largest tolerated deviation between a run and its oracle replay.
pub const REPLAY_TOLERANCE: f64 = 1e-12;

/// Everything needed to start a run, before any event happens.
pub struct PreparedRun {
    pub config: RunConfig,
    pub family: Arc<dyn ProblemFamily>,
    pub instance: ProblemInstance,
    pub problems: Vec<Arc<dyn LocalProblem>>,
    pub network: Network,
    pub initial: Vec<Vec<f64>>,
}

pub fn prepare(config: &RunConfig, registry: &Registry) -> Result<PreparedRun> {
    config.validate()?;
    let family = registry.family(&config.family)?;
    let instance = family.generate(&config.params, config.nodes, derive_seed(config.seed, INSTANCE_STREAM))?;
    prepare_with_instance(config, registry, instance)
}

/// Like [`prepare`] but with a stored instance instead of a fresh draw.
pub fn prepare_with_instance(config: &RunConfig, registry: &Registry, instance: ProblemInstance) -> Result<PreparedRun> {
    config.validate()?;
    let family = registry.family(&config.family)?;
    if instance.nodes.len() != config.nodes {
        return Err(AsymmError::config(format!(
            "instance has {} nodes, config asks for {}",
            instance.nodes.len(),
            config.nodes
        )));
    }
    let problems = family.instantiate(&instance)?;
    let network = config.graph.build(config.nodes, derive_seed(config.seed, GRAPH_STREAM))?;
    let initial = family.initial_points(&instance, derive_seed(config.seed, INIT_STREAM));
    Ok(PreparedRun {
        config: config.clone(),
        family,
        instance,
        problems,
        network,
        initial,
    })
}

impl PreparedRun {
    /// Status-matrix rows: the configured bound or the exact diameter.
    pub fn rows(&self) -> Result<usize> {
        let d = self.network.diameter;
        match self.config.diameter_bound {
            Some(b) if b < d => Err(AsymmError::config(format!("diameter bound {b} is below the diameter {d}"))),
            Some(b) => Ok(b.max(1)),
            None => Ok(d.max(1)),
        }
    }

    pub fn build_nodes(&self, registry: &Registry) -> Result<Vec<NodeState>> {
        let c = &self.config;
        let cfg = Arc::new(NodeConfig {
            rows: self.rows()?,
            penalty: c.penalty,
            tolerance: c.tolerance,
            initial_lipschitz: c.step.initial_lipschitz,
            bounds: c.step.bounds,
            block_count: c.block_count,
            step_rule: registry.step_rule(&c.step.rule)?,
        });
        (0..c.nodes)
            .map(|i| {
                let x_nbr = self
                    .network
                    .neighbors(i)
                    .iter()
                    .map(|&j| (j, self.initial[j].clone()))
                    .collect();
                NodeState::new(i, self.problems[i].clone(), self.initial[i].clone(), x_nbr, cfg.clone())
            })
            .collect()
    }

    pub fn execute(&self, registry: &Registry) -> Result<RunOutput> {
        let nodes = self.build_nodes(registry)?;
        let c = &self.config;
        schedule_run(&self.network, nodes, &c.timers, derive_seed(c.seed, TIMER_STREAM), &c.stop)
    }
}

/// `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub family: String,
    pub seed: u64,
    pub nodes: usize,
    pub diameter: usize,
    pub events: usize,
    pub cycles: usize,
    pub multiplier_updates: Vec<usize>,
    pub descent_steps: Vec<usize>,
    pub final_xi: f64,
    /// Largest distance of a local iterate from the consensus mean.
    pub consensus_spread: f64,
    pub consensus: Vec<f64>,
    pub max_penalty: f64,
    pub above_tol_after_flag: usize,
    pub report: BTreeMap<String, f64>,
    pub trace: TraceReport,
    pub wall_time_s: f64,
}

/// Mean of the local iterates and the largest distance from it.
pub fn consensus_of(x: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let n = x.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; n];
    for xi in x {
        linalg::axpy(1.0 / x.len() as f64, xi, &mut mean);
    }
    let spread = x.iter().map(|xi| linalg::dist(xi, &mean)).fold(0.0, f64::max);
    (mean, spread)
}

pub fn summarize(prepared: &PreparedRun, output: &RunOutput, trace_report: TraceReport, wall_time_s: f64) -> Result<RunSummary> {
    let trace = &output.trace;
    let n = prepared.config.nodes;
    let mut t2 = vec![0; n];
    let mut t1 = vec![0; n];
    for e in &trace.events {
        match e.task {
            Task::T1 => t1[e.node] += 1,
            Task::T2 => t2[e.node] += 1,
            Task::Noop => {}
        }
    }
    let x: Vec<Vec<f64>> = output.nodes.iter().map(|s| s.x.clone()).collect();
    let (consensus, spread) = consensus_of(&x);
    Ok(RunSummary {
        schema_version: SCHEMA_VERSION,
        family: prepared.config.family.clone(),
        seed: prepared.config.seed,
        nodes: n,
        diameter: prepared.network.diameter,
        events: trace.events.len(),
        cycles: trace_cycles(trace)?.len(),
        multiplier_updates: t2,
        descent_steps: t1,
        final_xi: trace.events.last().map_or(0.0, |e| e.xi),
        consensus_spread: spread,
        report: prepared.family.report(&prepared.instance, &consensus)?,
        consensus,
        max_penalty: output.nodes.iter().map(|s| s.pen.max_value()).fold(0.0, f64::max),
        above_tol_after_flag: trace_report.above_tol_after_flag,
        trace: trace_report,
        wall_time_s,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Runs a config end to end and writes every artifact into `out_dir`. A
/// trace that breaks a protocol property is still written before the error
/// is returned.
pub fn run_experiment(config: &RunConfig, registry: &Registry, out_dir: &Path) -> Result<RunSummary> {
    let start = Instant::now();
    let prepared = prepare(config, registry)?;
    std::fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("config.json"), config)?;
    write_json(&out_dir.join("instance.json"), &prepared.instance)?;
    let output = prepared.execute(registry)?;
    output.trace.save_jsonl(&out_dir.join("trace.jsonl"))?;
    output.trace.save_binary(&out_dir.join("trace.bin"))?;
    let trace_report = check_trace_properties(&output.trace)?;
    export_metrics(&output.trace, out_dir)?;
    let summary = summarize(&prepared, &output, trace_report, start.elapsed().as_secs_f64())?;
    write_json(&out_dir.join("summary.json"), &summary)?;
    log::info!(
        "{} events, {} cycles, final infeasibility {:.3e}",
        summary.events,
        summary.cycles,
        summary.final_xi
    );
    Ok(summary)
}

/// A stored run directory.
pub struct StoredRun {
    pub config: RunConfig,
    pub instance: ProblemInstance,
    pub trace: EventTrace,
}

pub fn load_run(dir: &Path) -> Result<StoredRun> {
    let config: RunConfig = read_json(&dir.join("config.json"))?;
    let instance: ProblemInstance = read_json(&dir.join("instance.json"))?;
    let bin = dir.join("trace.bin");
    let trace = if bin.exists() {
        EventTrace::load_binary(&bin)?
    } else {
        EventTrace::load_jsonl(&dir.join("trace.jsonl"))?
    };
    Ok(StoredRun { config, instance, trace })
}

/// Replays a stored trace through the centralized oracle and fails when the
/// trajectories differ beyond [`REPLAY_TOLERANCE`] or a penalty decision
/// differs.
pub fn replay_run(dir: &Path, registry: &Registry) -> Result<ReplayReport> {
    let run = load_run(dir)?;
    let family = registry.family(&run.config.family)?;
    let problems = family.instantiate(&run.instance)?;
    let report = replay_trace(&run.trace, &problems, &run.config.penalty)?;
    if report.max_deviation() > REPLAY_TOLERANCE || report.branch_mismatches > 0 {
        return Err(AsymmError::PropertyViolation {
            property: "replay through the centralized method of multipliers",
            detail: format!(
                "deviation {:e}, {} penalty-decision mismatches",
                report.max_deviation(),
                report.branch_mismatches
            ),
            window: Vec::new(),
        });
    }
    Ok(report)
}

/// Trace-structure checks on a stored run.
pub fn verify_run(dir: &Path) -> Result<TraceReport> {
    check_trace_properties(&load_run(dir)?.trace)
}

/// Writes `grid.csv` with `f(z, x̄)` over the configured box, where `x̄` is
/// the consensus mean stored in the run's summary.
pub fn export_grid(dir: &Path) -> Result<usize> {
    let run_cfg: RunConfig = read_json(&dir.join("config.json"))?;
    let summary: RunSummary = read_json(&dir.join("summary.json"))?;
    if summary.consensus.len() != NN_PARAM_COUNT {
        return Err(AsymmError::config(format!(
            "grid export needs a classifier run, `{}` has dimension {}",
            run_cfg.family,
            summary.consensus.len()
        )));
    }
    let g = run_cfg.grid;
    g.validate()?;
    let mut w = csv::Writer::from_path(dir.join("grid.csv"))?;
    w.write_record(["z1", "z2", "f"])?;
    let step = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (g.resolution - 1) as f64;
    for a in 0..g.resolution {
        for b in 0..g.resolution {
            let z = [step(g.x_min, g.x_max, a), step(g.y_min, g.y_max, b)];
            let f = nn_forward(&z, &summary.consensus)?;
            w.write_record([z[0].to_string(), z[1].to_string(), f.to_string()])?;
        }
    }
    w.flush()?;
    Ok(g.resolution * g.resolution)
}
