//! Limit density concentrating under the strong and weak relaxation limits.
//!
//! Prints the order parameter `R(t)` of both runs side by side.

use tcs_hierarchy::fluid::{run_background, FluidSolver, FluidState, CFL_MAX};
use tcs_hierarchy::macro_limit::{run_macro, MacroConfig, Regime, WenoVariant, TRANSPORT_CFL};
use tcs_hierarchy::{presets, AggregationPotential, InfluenceFn};

fn main() -> tcs_hierarchy::Result<()> {
    let (m, t_end) = (128, 10.0);
    let phi = InfluenceFn::regular(1.0)?;
    let solver = FluidSolver::new(m, &phi, &phi);
    let init = FluidState::from_primitive(m, presets::background_rho0, presets::background_u0, presets::background_e0);
    let bg = run_background(&solver, &init, t_end, CFL_MAX, &[])?.source;

    let cfg = |regime| MacroConfig {
        m,
        t_end,
        cfl: TRANSPORT_CFL,
        max_dt: 0.01,
        regime,
        phi: phi.clone(),
        potential: AggregationPotential::PeriodicLogBump,
        weno: WenoVariant::Z,
        output_dt: 0.5,
        snapshot_times: vec![],
    };
    let rho0 = presets::limit_rho0_grid(m);
    let strong = run_macro(&cfg(Regime::Strong), &rho0, &bg)?;
    let weak = run_macro(&cfg(Regime::Weak { theta0: 5.0 }), &rho0, &bg)?;

    println!("{:>6} {:>9} {:>9} {:>9} {:>9}", "t", "R strong", "R weak", "theta", "theta_inf");
    for (s, w) in strong.series.iter().zip(&weak.series) {
        println!(
            "{:6.2} {:9.5} {:9.5} {:9.5} {:9.5}",
            s.t, s.order_parameter, w.order_parameter, w.theta, w.theta_inf
        );
    }
    println!("largest clip {:.1e}, mass error {:.1e}", strong.max_clip, strong.max_mass_error);
    Ok(())
}
