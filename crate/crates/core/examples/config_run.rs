//! Runs a TOML config end to end, then re-verifies the stored files.
//!
//! `cargo run --release --example config_run -- [config.toml]`

use tcs_hierarchy::config::{load_config, ExperimentConfig};
use tcs_hierarchy::io::MANIFEST_NAME;
use tcs_hierarchy::run::{check, run};

const DEFAULT: &str = r#"
scenario = "macro-strong"
[grid]
m = 64
t_end = 2.0
output_dt = 0.25
snapshots = [1.0, 2.0]
"#;

fn main() -> tcs_hierarchy::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(p) => {
            let (cfg, warnings) = load_config(std::path::Path::new(&p))?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            cfg
        }
        None => ExperimentConfig::parse(DEFAULT)?,
    };
    let dir = std::env::temp_dir().join(format!("tcs-example-{}", std::process::id()));
    let manifest = run(&cfg, &dir)?;
    println!("{} finished in {:.2} s", manifest.scenario, manifest.wall_clock_s);
    for f in &manifest.files {
        println!("  {:<28} {:>6} rows  {}", f.path, f.rows, &f.sha256[..12]);
    }
    let report = check(&dir.join(MANIFEST_NAME))?;
    println!("{} checks, {} failed", report.checks.len(), report.failures().len());
    Ok(())
}
