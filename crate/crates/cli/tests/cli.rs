use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn asymm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asymm")).args(args).output().unwrap()
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_replay_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cfg = config("localization.toml");
    let o = asymm(&["run", "--config", cfg.to_str().unwrap(), "--out-dir", out, "--events", "3000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("events=3000 "));
    assert!(dir.path().join("summary.json").exists());

    let o = asymm(&["replay", "--out-dir", out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("branch_mismatches=0"));

    let o = asymm(&["verify", "--out-dir", out]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("events=3000"));

    // Localization runs have no classifier to sample.
    assert_eq!(asymm(&["grid", "--out-dir", out]).status.code(), Some(2));
}

#[test]
fn block_mode_and_seed_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("localization.toml");
    let o = asymm(&[
        "run", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(),
        "--events", "500", "--seed", "9", "--block-mode", "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let stored: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
    assert_eq!(stored["seed"], 9);
    assert_eq!(stored["block_count"], 2);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    assert_eq!(asymm(&["run", "--config", "/nonexistent.toml", "--out-dir", out]).status.code(), Some(2));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "family = \"rosenbrock\"\nnodes = 3\n[graph]\nkind = \"path\"\n").unwrap();
    let o = asymm(&["run", "--config", bad.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("localization"));

    std::fs::write(&bad, "family = \"localization\"\nnodes = 3\nflavour = 1\n[graph]\nkind = \"path\"\n").unwrap();
    assert_eq!(asymm(&["run", "--config", bad.to_str().unwrap(), "--out-dir", out]).status.code(), Some(2));

    assert_eq!(asymm(&["replay", "--out-dir", dir.path().join("missing").to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn penalty_cap_abort_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cap.toml");
    std::fs::write(
        &cfg,
        "family = \"localization\"\nnodes = 5\nseed = 2\n\
         [graph]\nkind = \"watts-strogatz\"\nk = 2\n\
         [penalty]\nmax = 4.0\nabort_at_max = true\n\
         [tolerance]\ninitial = 0.1\nfactor = 0.7\n",
    )
    .unwrap();
    let o = asymm(&["run", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}
