//! `srmg` — cell-centered multigrid with simulated distributed memory,
//! comparing conventional halo exchange against segmental refinement.
//!
//! Every subcommand accepts trailing `KEY=VALUE` overrides, which win over
//! `--config` file entries, which win over built-in defaults. Outputs land
//! in `--out` (default `out/`): CSV reports plus a JSON summary per command.

mod commands;
mod config;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use commands::{CmdError, CmdResult};
use config::{ConfigError, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "srmg", version, about = "Segmental-refinement multigrid testbed")]
struct Cli {
    /// Config file of KEY=VALUE lines ('#' comments allowed)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output directory for CSV/JSON reports
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Enable the larger (slower) built-in sweep ranges
    #[arg(long, global = true)]
    large: bool,

    /// Solver: conventional | sr | vcycle-iterative
    #[arg(long, global = true, value_name = "NAME")]
    solver: Option<String>,

    /// Rank grid, e.g. 4x2x2
    #[arg(long, global = true, value_name = "PXxPYxPZ")]
    ranks: Option<String>,

    /// Verify built-in checks; failures exit 3
    #[arg(long, global = true)]
    check: bool,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// One solve with the configured solver; writes per-level diagnostics and the
    /// communication ledger
    Solve {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Buffer-schedule sweep: error ratio vs. conventional over (A, B) pairs
    #[command(name = "sweep-table1")]
    SweepTable1 {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Transition-size sweep at a fixed linear schedule
    #[command(name = "sweep-pn0v")]
    SweepPn0v {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Transition-size sweep with the doubling buffer schedule
    #[command(name = "sweep-mbs")]
    SweepMbs {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Communication model report: phase table, bisection scaling, ledger reconciliation
    Comm {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Error/residual decay across refinement ladders or repeated V-cycles
    Convergence {
        #[arg(value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

fn build_config(cli: &Cli, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.load_file(path)?;
    }
    if let Some(s) = &cli.solver {
        cfg.apply("solver", s)?;
    }
    if let Some(r) = &cli.ranks {
        cfg.apply("ranks", r)?;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if cli.large {
        cfg.large = true;
    }
    if cli.check {
        cfg.apply("check", "true")?;
    }
    for kv in overrides {
        cfg.apply_pair(kv)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(1);
        }
    };
    let (overrides, run): (&Vec<String>, fn(&RunConfig) -> CmdResult) = match &cli.cmd {
        Cmd::Solve { overrides } => (overrides, commands::cmd_solve),
        Cmd::SweepTable1 { overrides } => (overrides, commands::cmd_sweep_table1),
        Cmd::SweepPn0v { overrides } => (overrides, commands::cmd_sweep_pn0v),
        Cmd::SweepMbs { overrides } => (overrides, commands::cmd_sweep_mbs),
        Cmd::Comm { overrides } => (overrides, commands::cmd_comm),
        Cmd::Convergence { overrides } => (overrides, commands::cmd_convergence),
    };
    let cfg = match build_config(&cli, overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("acceptance check failed");
            ExitCode::from(3)
        }
        Err(CmdError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(1)
        }
        Err(CmdError::Solve(m)) => {
            eprintln!("solve failure: {m}");
            ExitCode::from(2)
        }
    }
}
