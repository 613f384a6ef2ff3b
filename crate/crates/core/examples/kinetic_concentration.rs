//! Kinetic cloud in the strong relaxation scaling: the θ-support collapses
//! onto θ^∞ at rate at least 1/(ε θ_M²).
//!
//! `cargo run --release --example kinetic_concentration -- [eps]`

use tcs_hierarchy::diagnostics::{decay_window, fit_decay};
use tcs_hierarchy::fluid::{run_background, FluidSolver, FluidState, CFL_MAX};
use tcs_hierarchy::kinetic::{advance, sample_cloud, theta_envelope, CloudSpec, KineticCloud, Relaxation, ScalingRegime};
use tcs_hierarchy::{presets, AggregationPotential, InfluenceFn};

fn main() -> tcs_hierarchy::Result<()> {
    let eps: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let phi = InfluenceFn::regular(1.0)?;
    let solver = FluidSolver::new(128, &phi, &phi);
    let init = FluidState::from_primitive(128, presets::background_rho0, presets::background_u0, presets::background_e0);
    let bg = run_background(&solver, &init, 1.0, CFL_MAX, &[])?.source;

    let spec = CloudSpec {
        n: 512,
        sigma_v: 0.01,
        theta_min: 1.6,
        theta_max: 1.9,
        seed: 1,
    };
    let particles = sample_cloud(&spec, &presets::limit_rho0_grid(128), |_| 0.0)?;
    let regime = ScalingRegime::regular(Relaxation::Strong, eps, 1.0)?;
    let cloud = KineticCloud::new(particles, regime, AggregationPotential::PeriodicLogBump)?;
    let run = advance(&cloud, Some(&bg), 0.01, 1.0, &[])?;

    let e0 = init.internal();
    let (theta_m, theta_big_m) = theta_envelope((spec.theta_min, spec.theta_max), (e0.min(), e0.max()));
    let series: Vec<(f64, f64)> = run.series.iter().map(|r| (r.t, r.d_theta)).collect();
    let (lo, hi) = decay_window(eps, theta_big_m);
    let fit = fit_decay(&series, lo, hi)?;
    println!("eps {eps}, dt {}, {} steps", run.dt, run.steps);
    println!("envelope [{theta_m}, {theta_big_m}]");
    println!("fitted decay rate {:.3} on [{lo:.3}, {hi:.3}]", fit.rate);
    println!("lower bound       {:.3}", 1.0 / (eps * theta_big_m * theta_big_m));
    for r in run.series.iter().step_by((run.series.len() / 8).max(1)) {
        println!("t {:5.2}  D_theta {:.3e}  theta_inf {:.5}", r.t, r.d_theta, r.theta_inf);
    }
    Ok(())
}
