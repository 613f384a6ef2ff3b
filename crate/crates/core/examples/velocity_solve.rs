//! Velocity of the limit system for a given density.
//!
//! With no aggregation potential the velocity is the background velocity;
//! with it the flock is pulled towards its centre.

use tcs_hierarchy::macro_limit::VelocityOperator;
use tcs_hierarchy::{presets, AggregationPotential, InfluenceFn};

fn main() -> tcs_hierarchy::Result<()> {
    let m = 64;
    let phi = InfluenceFn::regular(1.0)?;
    let rho = presets::limit_rho0_grid(m);
    let (u_inf, theta_inf) = (0.5, 2.0);
    let free = VelocityOperator::new(m, &phi, &AggregationPotential::Zero).solve_velocity(&rho, u_inf, theta_inf, theta_inf)?;
    let pulled = VelocityOperator::new(m, &phi, &AggregationPotential::PeriodicLogBump)
        .solve_velocity(&rho, u_inf, theta_inf, theta_inf)?;
    let sys = VelocityOperator::new(m, &phi, &AggregationPotential::Zero).assemble(&rho)?;
    let row_sum = (0..m).map(|i| sys.phi_matrix.row(i).sum().abs()).fold(0.0, f64::max);
    println!("max |row sum of Phi| = {row_sum:.1e}");
    println!("{:>6} {:>9} {:>9} {:>9}", "x", "rho", "u free", "u pulled");
    for i in (0..m).step_by(4) {
        println!(
            "{:6.3} {:9.4} {:9.6} {:9.6}",
            i as f64 / m as f64,
            rho.values[i],
            free.values[i],
            pulled.values[i]
        );
    }
    Ok(())
}
