//! Argument parsing and dispatch for the `datatrack` binary.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::{run_identify, run_track, verify, ExperimentConfig};

/// Markov-data reference tracking experiments.
#[derive(Parser)]
#[command(name = "datatrack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; omitted means all defaults (airfoil morph).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Identify Markov parameters and store them.
    Identify(Common),
    /// Synthesize gains and estimator, then run the closed loop.
    Track {
        #[command(flatten)]
        common: Common,
        /// Use stored Markov data instead of identifying.
        #[arg(long)]
        markov: Option<PathBuf>,
    },
    /// Compare the data-based pipeline with the state-space oracle on random plants.
    Verify(Common),
}

fn load(common: &Common) -> anyhow::Result<(ExperimentConfig, String)> {
    let (mut cfg, text) = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => {
            let cfg = ExperimentConfig::default();
            cfg.validate()?;
            (cfg, String::new())
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok((cfg, text))
}

fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<bool> {
    match cli.command {
        Command::Identify(common) => {
            let (cfg, text) = load(&common)?;
            let dir = run_identify(&cfg, &text, &common.out)?;
            writeln!(out, "Markov data written to {}", dir.display())?;
            Ok(true)
        }
        Command::Track { common, markov } => {
            let (cfg, text) = load(&common)?;
            let s = run_track(&cfg, &text, &common.out, markov.as_deref())?.summary;
            writeln!(out, "cost J = {:.6e}", s.cost)?;
            writeln!(out, "terminal error = {:.6e} ({:.3}% of |r_N|)", s.terminal_error, 100.0 * s.relative_terminal_error)?;
            writeln!(out, "error peaks: first tenth {:.4e}, last tenth {:.4e}", s.early_peak, s.late_peak)?;
            writeln!(out, "results in {}", common.out.display())?;
            Ok(true)
        }
        Command::Verify(common) => {
            let (cfg, _) = load(&common)?;
            let report = verify(&cfg.verify, cfg.seed)?;
            writeln!(out, "{report}")?;
            Ok(report.passed())
        }
    }
}

/// Runs the command line `args` (program name first), writing the report to
/// `out`. Returns the process exit code: 0 success, 2 failed verification,
/// 1 any error.
pub fn execute<I, T>(args: I, out: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli, out) {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
