mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "charcauchy", version, about = "Characteristic Cauchy problems for 1+1 wave operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve on every configured path and write fields plus a summary.
    Solve(Common),
    /// Run the pairing, residual, independence and linearity checks.
    Verify(Common),
    /// Evaluate the expansion density on a null hypersurface.
    Expansion(Common),
    /// Refine the grid and report observed orders.
    Converge(Common),
}

#[derive(Debug, clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid spacing; overrides `grid.h`.
    #[arg(long)]
    grid_h: Option<f64>,
    /// Battery seed; overrides `verify.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[cfg(feature = "parallel")]
fn init_threads() -> Result<()> {
    if let Ok(n) = std::env::var("CHARCAUCHY_THREADS") {
        let n: usize = n.parse().map_err(|_| ConfigError(format!("CHARCAUCHY_THREADS must be a count, got `{n}`")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting the thread pool")?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn init_threads() -> Result<()> {
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    let (cmd, common) = match cli.command {
        Command::Solve(c) => ("solve", c),
        Command::Verify(c) => ("verify", c),
        Command::Expansion(c) => ("expansion", c),
        Command::Converge(c) => ("converge", c),
    };
    let mut cfg = config::load(&common.config)?;
    if let Some(h) = common.grid_h {
        cfg.grid.h = h;
    }
    if let Some(s) = common.seed {
        cfg.verify.seed = s;
    }
    cfg.check()?;
    let out = common.out.unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    match cmd {
        "solve" => commands::solve(&cfg, &out),
        "verify" => commands::verify(&cfg, &out),
        "expansion" => commands::expansion(&cfg, &out),
        _ => commands::converge(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("charcauchy: a tolerance check failed");
            ExitCode::from(1)
        }
        Err(e) => {
            if e.downcast_ref::<ConfigError>().is_some() {
                eprintln!("charcauchy: config error: {e:#}");
            } else {
                eprintln!("charcauchy: {e:#}");
            }
            ExitCode::from(2)
        }
    }
}
