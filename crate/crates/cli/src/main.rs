//! `asymm`: run, replay and check asynchronous method-of-multipliers
//! experiments.

use std::path::PathBuf;
use std::process::ExitCode;

use asymm::config::RunConfig;
use asymm::experiment::{export_grid, replay_run, run_experiment, verify_run};
use asymm::registry::Registry;
use asymm::AsymmError;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asymm", version, about = "Asynchronous method of multipliers simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write its artifacts.
    Run(RunArgs),
    /// Replay a stored trace through the centralized oracle.
    Replay(DirArgs),
    /// Check the protocol properties of a stored trace.
    Verify(DirArgs),
    /// Export classifier outputs over a grid for a stored classifier run.
    Grid(DirArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON or TOML run config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides the event budget.
    #[arg(long)]
    events: Option<u64>,
    /// Block-wise descent with this many blocks per node.
    #[arg(long, value_name = "BLOCKS")]
    block_mode: Option<usize>,
}

#[derive(Args)]
struct DirArgs {
    /// Directory written by `asymm run`.
    #[arg(long)]
    out_dir: PathBuf,
}

fn run(cli: Cli) -> asymm::Result<()> {
    let registry = Registry::builtin();
    match cli.command {
        Command::Run(a) => {
            let mut cfg = RunConfig::load(&a.config)?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(e) = a.events {
                cfg.stop.max_events = e;
            }
            if let Some(b) = a.block_mode {
                cfg.block_count = Some(b);
            }
            if let Some(d) = a.out_dir {
                cfg.out_dir = Some(d);
            }
            let out = cfg
                .out_dir
                .clone()
                .ok_or_else(|| AsymmError::Config("no output directory (use --out-dir)".into()))?;
            let s = run_experiment(&cfg, &registry, &out)?;
            println!(
                "events={} cycles={} final_xi={:.6e} spread={:.3e} multiplier_updates={:?}",
                s.events, s.cycles, s.final_xi, s.consensus_spread, s.multiplier_updates
            );
            for (k, v) in &s.report {
                println!("{k}={v}");
            }
        }
        Command::Replay(a) => {
            let r = replay_run(&a.out_dir, &registry)?;
            println!(
                "cycles={} max_dev_x={:e} max_dev_multipliers={:e} max_dev_penalties={:e} branch_mismatches={}",
                r.cycles, r.max_dev_x, r.max_dev_multipliers, r.max_dev_penalties, r.branch_mismatches
            );
        }
        Command::Verify(a) => {
            let r = verify_run(&a.out_dir)?;
            println!(
                "cycles={} events={} min_h={:?} min_cycle_span={:?} max_gap={:.3} above_tol_after_flag={}",
                r.cycles, r.events, r.min_h, r.min_cycle_span, r.max_gap, r.above_tol_after_flag
            );
        }
        Command::Grid(a) => {
            let n = export_grid(&a.out_dir)?;
            println!("wrote {n} grid points");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
