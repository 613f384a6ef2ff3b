//! Single-species particle system: total velocity and temperature are
//! conserved while the flock aligns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tcs_hierarchy::particle::{integrate_with, velocity_diameter, AgentState, TwoSpeciesSystem};
use tcs_hierarchy::InfluenceFn;

fn main() -> tcs_hierarchy::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let agents: Vec<AgentState> = (0..64)
        .map(|_| AgentState::new(rng.random(), rng.random_range(-1.0..1.0), rng.random_range(1.0..2.0)))
        .collect();
    let phi = InfluenceFn::regular(1.0)?;
    let sys = TwoSpeciesSystem::single(agents, 1.0, 1.0, phi.clone(), phi);
    let traj = integrate_with(&sys, 1e-3, 5.0, 500)?;
    for (t, a) in traj.times.iter().zip(&traj.species1) {
        let sv: f64 = a.iter().map(|p| p.v).sum();
        let st: f64 = a.iter().map(|p| p.theta).sum();
        println!(
            "t {t:4.1}  sum v {sv:+.12}  sum theta {st:.12}  velocity diameter {:.3e}",
            velocity_diameter(a)
        );
    }
    Ok(())
}
