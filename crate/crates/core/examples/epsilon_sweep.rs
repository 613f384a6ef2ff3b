//! Distance of kinetic clouds to the limit system as ε decreases.

use tcs_hierarchy::config::{ExperimentConfig, Scenario};
use tcs_hierarchy::run::{background_run, epsilon_sweep};

fn main() -> tcs_hierarchy::Result<()> {
    let mut cfg = ExperimentConfig::with_scenario(Scenario::EpsilonSweep);
    cfg.grid.m = 64;
    cfg.kinetic.n = 512;
    cfg.sweep.snapshots = vec![0.5, 1.0];
    let eps = [0.2, 0.1, 0.05];
    let bg = background_run(&cfg, 1.0, &[])?;
    let out = epsilon_sweep(&cfg, &eps, &bg.source)?;
    println!("{}", out.comparison.summary());
    for (_, _, a) in &out.members {
        println!(
            "eps {:<5} deviation {:.3e}  confinement violations {}",
            a.eps,
            a.deviation.unwrap_or(f64::NAN),
            a.confinement_violations
        );
    }
    Ok(())
}
