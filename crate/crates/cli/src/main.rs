//! `mswl`: drive the two-speed wave laboratory from the command line.
//!
//! Exit codes: 0 success, 2 usage/config error, 3 numerical refusal,
//! 4 regression violation.

mod commands;
mod config;
mod outdir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Verdict;
use config::ExperimentConfig;
use mswl_core::error::Error as CoreError;

/// Environment variable for the default worker count.
const THREADS_ENV: &str = "MSWL_THREADS";

#[derive(Parser)]
#[command(name = "mswl", version, about = "numerical laboratory for a two-speed semilinear wave system")]
struct Cli {
    /// Configuration file (flat key-value sections, or JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default `./out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (overrides MSWL_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Skip stages already completed in the output directory under the
    /// same configuration.
    #[arg(long, global = true)]
    resume: bool,

    /// Start from a named preset (see `mswl info`).
    #[arg(long, global = true)]
    preset: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Co-evolve the coupled system and write traces plus a summary.
    Simulate,
    /// Run the iteration ladder and record per-iterate norms.
    Iterate,
    /// Audit the thirteen inequality entries against the pinned bounds.
    Verify,
    /// Measure blowup times over an amplitude ladder and fit lifespan laws.
    Sweep,
    /// Export the dyadic region tables as JSON.
    Regions,
    /// Show version, presets, and pinned bounds.
    Info,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = match &cli.preset {
        Some(name) => config::preset(name).ok_or_else(|| format!("unknown preset `{name}`"))?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &cli.config {
        cfg = config::load_config(path)?;
    }
    Ok(cfg)
}

fn init_threads(cli: &Cli) {
    let n = cli
        .threads
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()));
    if let Some(n) = n {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::Refused(_) | CoreError::Domain(_) => 3,
        CoreError::Parameter(_) | CoreError::Validation(_) | CoreError::Config(_) | CoreError::Insufficient(_) => 2,
        CoreError::Io(_) | CoreError::Json(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_threads(&cli);

    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };

    if matches!(cli.command, Command::Info) {
        return match commands::cmd_info(&cfg) {
            Ok(_) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code_for(&e))
            }
        };
    }

    let out_root = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let out = match outdir::OutDir::create(&out_root, cli.resume, cfg.hash()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot prepare output directory: {e}");
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Simulate => commands::cmd_simulate(&cfg, &out),
        Command::Iterate => commands::cmd_iterate(&cfg, &out),
        Command::Verify => commands::cmd_verify(&cfg, &out),
        Command::Sweep => commands::cmd_sweep(&cfg, &out),
        Command::Regions => commands::cmd_regions(&cfg, &out),
        Command::Info => unreachable!(),
    };

    match result {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::Refused) => {
            eprintln!("refused: no applicable measurement was produced");
            ExitCode::from(3)
        }
        Ok(Verdict::RegressionViolation) => {
            eprintln!("regression violation: a pinned ratio bound was exceeded");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
