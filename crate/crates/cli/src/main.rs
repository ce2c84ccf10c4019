use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fpme_cli::{commands, config::RunConfig, config::SweepConfig, CliOptions};

/// Spectral lab for fractional porous-medium flow: solve, verify the
/// a priori estimates, and export machine-readable reports.
#[derive(Parser)]
#[command(name = "fpme", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory for reports and CSV exports.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for sweeps and kernel scans
    /// (default: FPME_WORKERS or the available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Seed for all sample plans.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Multiplies every check tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tolerance_scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one configuration and export the trajectory.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the full verification pipeline for one configuration.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the elliptic profile problem and verify its boundary sandwich.
    Elliptic {
        #[arg(long)]
        config: PathBuf,
    },
    /// Kernel diagnostics: envelope fit, integral bounds, bootstrap.
    Green {
        #[arg(long)]
        config: PathBuf,
    },
    /// Cross-product parameter sweep over a worker pool.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-render stored JSON reports as pass/fail tables.
    Report {
        /// Report files to load.
        files: Vec<PathBuf>,
    },
}

fn default_workers() -> usize {
    if let Ok(v) = std::env::var("FPME_WORKERS") {
        if let Ok(n) = v.parse::<usize>() {
            if n > 0 {
                return n;
            }
        }
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let opts = CliOptions {
        out: cli.out,
        seed: cli.seed,
        workers: cli.workers.unwrap_or_else(default_workers),
        tolerance_scale: cli.tolerance_scale,
    };
    match cli.command {
        Command::Solve { config } => {
            let cfg = RunConfig::from_path(&config).context("loading run config")?;
            let report = commands::cmd_solve(&cfg, &opts)?;
            println!("solved {} ({} outputs)", report.run_id, cfg.time.output_times.len());
            Ok(true)
        }
        Command::Verify { config } => {
            let cfg = RunConfig::from_path(&config).context("loading run config")?;
            let report = commands::cmd_verify(&cfg, &opts)?;
            print!("{}", report.render_table());
            Ok(report.all_pass(&[]))
        }
        Command::Elliptic { config } => {
            let cfg = RunConfig::from_path(&config).context("loading run config")?;
            let report = commands::cmd_elliptic(&cfg, &opts)?;
            print!("{}", report.render_table());
            Ok(report.all_pass(&[]))
        }
        Command::Green { config } => {
            let cfg = RunConfig::from_path(&config).context("loading run config")?;
            let report = commands::cmd_green(&cfg, &opts)?;
            print!("{}", report.render_table());
            Ok(report.all_pass(&[]))
        }
        Command::Sweep { config } => {
            let cfg = SweepConfig::from_path(&config).context("loading sweep config")?;
            let report = commands::cmd_sweep(&cfg, &opts)?;
            print!("{}", report.render_table());
            Ok(report.all_pass(&[]))
        }
        Command::Report { files } => {
            let (rendered, all_pass) = commands::cmd_report(&files)?;
            print!("{rendered}");
            Ok(all_pass)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
