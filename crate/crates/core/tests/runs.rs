use std::path::Path;
use std::sync::Arc;

use asymm::config::RunConfig;
use asymm::experiment::{export_grid, load_run, prepare, replay_run, run_experiment, verify_run};
use asymm::lagrangian::RegionBounds;
use asymm::logic_and::run_logic_and;
use asymm::reference::replay_trace;
use asymm::registry::Registry;
use asymm::simulator::{check_trace_properties, generate_watts_strogatz, EventTrace};
use asymm::step_rule::{LocalView, StepRule};
use proptest::prelude::*;

fn shipped(name: &str) -> RunConfig {
    RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

fn small(family: &str, nodes: usize, seed: u64, cycles: u64) -> RunConfig {
    let graph = if nodes <= 3 { r#"{"kind":"path"}"# } else { r#"{"kind":"watts-strogatz","k":2}"# };
    RunConfig::from_json_str(&format!(
        r#"{{"family":"{family}","nodes":{nodes},"seed":{seed},"graph":{graph},
            "tolerance":{{"initial":0.1,"factor":0.7}},"stop":{{"max_events":50000,"max_cycles":{cycles}}}}}"#
    ))
    .unwrap()
}

#[test]
fn shipped_configs_validate() {
    for entry in std::fs::read_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load(&path).unwrap();
        prepare(&cfg, &Registry::builtin()).unwrap();
    }
}

#[test]
fn artifacts_round_trip_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("localization", 5, 4, 6);
    let summary = run_experiment(&cfg, &Registry::builtin(), dir.path()).unwrap();
    assert_eq!(summary.cycles, 6);
    for f in ["config.json", "instance.json", "trace.jsonl", "trace.bin", "metrics.csv", "cycles.csv", "iterates.csv", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let jsonl = EventTrace::load_jsonl(&dir.path().join("trace.jsonl")).unwrap();
    let run = load_run(dir.path()).unwrap();
    assert_eq!(jsonl, run.trace);
    assert_eq!(run.config, cfg);
    let r = replay_run(dir.path(), &Registry::builtin()).unwrap();
    assert_eq!(r.cycles, 6);
    assert_eq!(r.branch_mismatches, 0);
    assert_eq!(verify_run(dir.path()).unwrap().cycles, 6);
}

#[test]
fn grid_export_needs_a_classifier_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = shipped("nn-two-moons.toml");
    cfg.params = serde_json::json!({"dataset": "two-moons", "points_per_node": 10});
    cfg.stop.max_events = 300;
    cfg.grid.resolution = 5;
    run_experiment(&cfg, &Registry::builtin(), dir.path()).unwrap();
    assert_eq!(export_grid(dir.path()).unwrap(), 25);
    let text = std::fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(text.lines().count(), 26);
    assert!(text.starts_with("z1,z2,f"));

    let loc = tempfile::tempdir().unwrap();
    run_experiment(&small("localization", 3, 1, 1), &Registry::builtin(), loc.path()).unwrap();
    assert_eq!(export_grid(loc.path()).unwrap_err().exit_code(), 2);
}

#[test]
fn penalty_cap_can_abort_the_run() {
    let mut cfg = small("localization", 5, 2, 40);
    cfg.penalty.max = 4.0;
    let clamped = prepare(&cfg, &Registry::builtin()).unwrap().execute(&Registry::builtin()).unwrap();
    assert!(clamped.nodes.iter().all(|n| n.pen.max_value() <= 4.0));
    cfg.penalty.abort_at_max = true;
    let err = prepare(&cfg, &Registry::builtin()).unwrap().execute(&Registry::builtin()).err().unwrap();
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn unknown_strategy_names_are_config_errors() {
    let mut cfg = small("localization", 3, 1, 1);
    cfg.step.rule = "newton".into();
    let e = prepare(&cfg, &Registry::builtin()).unwrap().build_nodes(&Registry::builtin()).unwrap_err();
    assert_eq!(e.exit_code(), 2);
    assert!(e.to_string().contains("backtracking"));
    let cfg = small("rosenbrock", 3, 1, 1);
    assert_eq!(prepare(&cfg, &Registry::builtin()).err().unwrap().exit_code(), 2);
}

/// A fixed, deliberately large constant.
struct Cautious;

impl StepRule for Cautious {
    fn name(&self) -> &'static str {
        "cautious"
    }

    fn lipschitz(&self, _: &LocalView<'_>, _: &[f64], _: &[f64], _: f64, _: &RegionBounds) -> asymm::Result<f64> {
        Ok(200.0)
    }
}

#[test]
fn registered_step_rule_is_used_and_replays() {
    let mut registry = Registry::builtin();
    assert!(registry.register_step_rule(Arc::new(Cautious)).is_none());
    let mut cfg = small("quadratic", 4, 9, 3);
    cfg.step.rule = "cautious".into();
    let p = prepare(&cfg, &registry).unwrap();
    let out = p.execute(&registry).unwrap();
    let steps: Vec<f64> = out.trace.events.iter().filter_map(|e| e.t1.as_ref().map(|t| t.lipschitz)).collect();
    assert!(!steps.is_empty());
    assert!(steps.iter().all(|&l| l == 200.0));
    let r = replay_trace(&out.trace, &p.problems, &cfg.penalty).unwrap();
    assert_eq!(r.max_deviation(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn seeded_runs_keep_trace_properties_and_replay(seed in 0u64..10_000, nodes in 2usize..7, quad in any::<bool>()) {
        let family = if quad { "quadratic" } else { "localization" };
        let cfg = small(family, nodes, seed, 3);
        let registry = Registry::builtin();
        let p = prepare(&cfg, &registry).unwrap();
        let out = p.execute(&registry).unwrap();
        check_trace_properties(&out.trace).unwrap();
        let r = replay_trace(&out.trace, &p.problems, &cfg.penalty).unwrap();
        prop_assert!(r.max_deviation() <= 1e-12);
        prop_assert_eq!(r.branch_mismatches, 0);
    }

    #[test]
    fn logic_and_never_detects_early(seed in 0u64..10_000, n in 2usize..10, sched in proptest::collection::vec(0usize..100, 1..200), raise in proptest::collection::vec(0usize..150, 10)) {
        let net = generate_watts_strogatz(seed, n.max(3), 2, 0.3).unwrap();
        let n = net.adjacency.len();
        let schedule: Vec<usize> = sched.iter().map(|s| s % n).collect();
        let run = run_logic_and(&net.adjacency, net.diameter.max(1), &schedule, |i, t| t >= raise[i % raise.len()]).unwrap();
        prop_assert!(run.is_sound());
    }
}
