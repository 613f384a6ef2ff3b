//! Command-line front end.
//!
//! ```text
//! tcs run <config.toml | manifest.json>
//! tcs sweep <config.toml> --eps 0.2,0.1,0.05
//! tcs check <manifest.json>
//! ```
//!
//! Relative output directories are resolved under `$TCS_OUTPUT_ROOT`.
//! Exit codes: 0 ok, 2 configuration error, 3 numerical failure,
//! 4 invariant violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tcs_hierarchy::config::{load_config, ExperimentConfig};
use tcs_hierarchy::io::RunManifest;
use tcs_hierarchy::run::{check, resolve_output, run_sweep};
use tcs_hierarchy::{Result, TcsError};

#[derive(Parser)]
#[command(name = "tcs", version, about = "Thermomechanical Cucker-Smale simulation suite")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file, or replay the config stored in a manifest.
    Run {
        path: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an epsilon sweep of the kinetic level against the limit system.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify a stored run.
    Check { manifest: PathBuf },
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(RunManifest::read(path)?.config);
    }
    let (cfg, _) = load_config(path)?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { path, out } => {
            let cfg = load(&path)?;
            let dir = out.unwrap_or_else(|| resolve_output(&cfg));
            let m = run_sweep(&cfg, &dir, None)?;
            println!(
                "{}: {} files in {} ({:.1} s)",
                m.scenario,
                m.files.len(),
                dir.display(),
                m.wall_clock_s
            );
        }
        Command::Sweep { config, eps, out } => {
            let cfg = load(&config)?;
            let dir = out.unwrap_or_else(|| resolve_output(&cfg));
            let m = run_sweep(&cfg, &dir, Some(&eps))?;
            println!("sweep: {} files in {} ({:.1} s)", m.files.len(), dir.display(), m.wall_clock_s);
        }
        Command::Check { manifest } => {
            let report = check(&manifest)?;
            for c in &report.checks {
                let status = match (c.passed, c.enforced) {
                    (true, _) => "ok",
                    (false, true) => "FAIL",
                    (false, false) => "note",
                };
                println!("{status:>4}  {}  value={:e} limit={:e}", c.name, c.value, c.limit);
            }
            let bad = report.failures();
            if !bad.is_empty() {
                return Err(TcsError::Invariant(format!("{} check(s) failed", bad.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
