//! Background fluid relaxing to a flock: mean quantities and fluctuations.
//!
//! `cargo run --release --example background_flocking -- [M] [T]`

use tcs_hierarchy::fluid::{run_background, FluidSolver, FluidState, CFL_MAX};
use tcs_hierarchy::{presets, InfluenceFn};

fn main() -> tcs_hierarchy::Result<()> {
    let mut args = std::env::args().skip(1);
    let m: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(128);
    let t_end: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(10.0);

    let phi = InfluenceFn::regular(1.0)?;
    let solver = FluidSolver::new(m, &phi, &phi);
    let init = FluidState::from_primitive(m, presets::background_rho0, presets::background_u0, presets::background_e0);
    let run = run_background(&solver, &init, t_end, CFL_MAX, &[t_end])?;

    let src = &run.source;
    let every = (src.times.len() / 10).max(1);
    println!("{:>7} {:>10} {:>10} {:>10} {:>10}", "t", "theta_inf", "u/theta", "fluct_u", "fluct_e");
    for k in (0..src.times.len()).step_by(every) {
        println!(
            "{:7.3} {:10.6} {:10.6} {:10.3e} {:10.3e}",
            src.times[k], src.theta_inf[k], src.ratio[k], src.fluct_u[k], src.fluct_e[k]
        );
    }
    let (_, m0, p0, e0) = run.totals[0];
    let (_, m1, p1, e1) = *run.totals.last().unwrap();
    println!("steps {}  min rho {:.3e}", run.steps, run.min_rho);
    println!(
        "relative drift: mass {:.1e}  momentum {:.1e}  energy {:.1e}",
        (m1 - m0) / m0,
        (p1 - p0) / p0,
        (e1 - e0) / e0
    );
    Ok(())
}
