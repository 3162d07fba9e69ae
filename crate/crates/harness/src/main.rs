//! `cascade-fuse`: Monte Carlo simulations and log replay for cascaded
//! filtering.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 3 when more than
//! 1% of trials were flagged as divergent, 1 for other failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cascade_fuse::config::{FileConfig, LinearToyConfig, NonlinearConfig};
use cascade_fuse::{replay, report, runner};

#[derive(Parser)]
#[command(
    name = "cascade-fuse",
    about = "Cascaded-filter Monte Carlo simulations and log replay",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SimArgs {
    /// JSON config file with `linear` / `nonlinear` blocks.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Master seed; trials derive their own seeds from it.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory for CSVs and summary.json.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (0 = one per core). Results do not depend on this.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scalar linear toy scenario.
    SimulateLinear {
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Run the nonlinear attitude-fed positioning scenario.
    SimulateNonlinear {
        #[command(flatten)]
        sim: SimArgs,
        /// Override the configured duration (seconds).
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Replay recorded logs through the attitude filter and the cascade.
    Replay {
        /// IMU log: `t,gx,gy,gz,ax,ay,az,mx,my,mz`.
        #[arg(long)]
        imu: PathBuf,
        /// Position-fix log: `t,px,py,pz`.
        #[arg(long)]
        uwb: PathBuf,
        /// Output CSV for per-sample attitude estimates.
        #[arg(long)]
        ahrs_out: PathBuf,
        /// Optional output CSV for fused position/velocity estimates.
        #[arg(long)]
        fused_out: Option<PathBuf>,
        /// JSON config file (the `nonlinear` block supplies noise levels).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the summary table of a finished run.
    Report {
        /// Run directory containing summary.json.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

const EXIT_CONFIG: u8 = 2;
const EXIT_FLAGGED: u8 = 3;

fn load_config(path: Option<&PathBuf>) -> Result<FileConfig, ExitCode> {
    match path {
        Some(p) => FileConfig::load(p).map_err(|e| {
            eprintln!("{e}");
            ExitCode::from(EXIT_CONFIG)
        }),
        None => Ok(FileConfig::default()),
    }
}

fn validated<C, F>(cfg: C, validate: F) -> Result<C, ExitCode>
where
    F: Fn(&C) -> Result<(), cascade_fuse::config::ConfigError>,
{
    if let Err(e) = validate(&cfg) {
        eprintln!("{e}");
        return Err(ExitCode::from(EXIT_CONFIG));
    }
    Ok(cfg)
}

fn finish_run(
    outcome: runner::RunOutcome,
    sim: &SimArgs,
    config_value: serde_json::Value,
) -> ExitCode {
    if let Err(e) = runner::write_outputs(&outcome, &sim.out, &config_value) {
        eprintln!("{e}");
        return ExitCode::FAILURE;
    }
    match report::render(&sim.out) {
        Ok(table) => print!("{table}"),
        Err(e) => eprintln!("{e}"),
    }
    if outcome.failure_threshold_exceeded() {
        eprintln!(
            "{} of {} trials flagged: exceeds the 1% run-failure threshold",
            outcome.flagged.len(),
            outcome.trials_requested
        );
        return ExitCode::from(EXIT_FLAGGED);
    }
    ExitCode::SUCCESS
}

fn simulate_linear(sim: SimArgs) -> ExitCode {
    let file_cfg = match load_config(sim.config.as_ref()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let mut cfg: LinearToyConfig = file_cfg.linear;
    if let Some(trials) = sim.trials {
        cfg.trials = trials;
    }
    let cfg = match validated(cfg, LinearToyConfig::validate) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match runner::run_linear(&cfg, sim.seed, sim.workers) {
        Ok(outcome) => {
            let value = serde_json::to_value(&cfg).expect("config serializes");
            finish_run(outcome, &sim, value)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}

fn simulate_nonlinear(sim: SimArgs, duration: Option<f64>) -> ExitCode {
    let file_cfg = match load_config(sim.config.as_ref()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let mut cfg: NonlinearConfig = file_cfg.nonlinear;
    if let Some(trials) = sim.trials {
        cfg.trials = trials;
    }
    if let Some(duration) = duration {
        cfg.duration_s = duration;
    }
    let cfg = match validated(cfg, NonlinearConfig::validate) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match runner::run_nonlinear(&cfg, sim.seed, sim.workers) {
        Ok(outcome) => {
            let value = serde_json::to_value(&cfg).expect("config serializes");
            finish_run(outcome, &sim, value)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}

fn run_replay(
    imu: PathBuf,
    uwb: PathBuf,
    ahrs_out: PathBuf,
    fused_out: Option<PathBuf>,
    config: Option<PathBuf>,
) -> ExitCode {
    let file_cfg = match load_config(config.as_ref()) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let cfg = file_cfg.nonlinear;
    let imu = match replay::read_imu_csv(&imu) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let uwb = match replay::read_uwb_csv(&uwb) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match replay::replay(&imu, &uwb, &cfg, &ahrs_out, fused_out.as_deref()) {
        Ok(stats) => {
            println!(
                "replayed {} IMU samples, fused {} position fixes ({} deflation rounds)",
                stats.imu_samples, stats.position_fixes, stats.deflations
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::SimulateLinear { sim } => simulate_linear(sim),
        Command::SimulateNonlinear { sim, duration } => simulate_nonlinear(sim, duration),
        Command::Replay {
            imu,
            uwb,
            ahrs_out,
            fused_out,
            config,
        } => run_replay(imu, uwb, ahrs_out, fused_out, config),
        Command::Report { input } => match report::render(&input) {
            Ok(table) => {
                print!("{table}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(EXIT_CONFIG)
            }
        },
    }
}
