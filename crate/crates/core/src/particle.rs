//! Agent-level dynamics: two interacting species with thermomechanical
//! alignment, cross-species drag and aggregation in the first species.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcsError};
use crate::geometry::{displacement, wrap, AggregationPotential, GridFn1D, InfluenceFn};

/// Positivity guard on the internal variable during integration.
pub const THETA_FLOOR: f64 = 1e-6;
/// Smallest step the adaptive halving may reach before giving up.
pub const MIN_DT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub v: f64,
    pub theta: f64,
}

impl AgentState {
    pub fn new(x: f64, v: f64, theta: f64) -> Self {
        AgentState {
            x: wrap(x),
            v,
            theta,
        }
    }
}

/// Coupling strengths and inertia.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Couplings {
    pub m1: f64,
    pub m2: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa_c: f64,
    pub kappa_a: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub nu_c: f64,
}

impl Couplings {
    pub fn zero() -> Self {
        Couplings {
            m1: 1.0,
            m2: 1.0,
            kappa1: 0.0,
            kappa2: 0.0,
            kappa_c: 0.0,
            kappa_a: 0.0,
            nu1: 0.0,
            nu2: 0.0,
            nu_c: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernels {
    pub phi1: InfluenceFn,
    pub phi2: InfluenceFn,
    pub phi_c: InfluenceFn,
    pub zeta1: InfluenceFn,
    pub zeta2: InfluenceFn,
    pub zeta_c: InfluenceFn,
    pub w1: AggregationPotential,
}

impl Kernels {
    /// Same regular kernel everywhere, no aggregation.
    pub fn uniform(phi: InfluenceFn) -> Self {
        Kernels {
            phi1: phi,
            phi2: phi,
            phi_c: phi,
            zeta1: phi,
            zeta2: phi,
            zeta_c: phi,
            w1: AggregationPotential::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoSpeciesSystem {
    pub species1: Vec<AgentState>,
    pub species2: Vec<AgentState>,
    pub couplings: Couplings,
    pub kernels: Kernels,
    pub w1: f64,
    pub w2: f64,
}

/// Time derivative of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AgentRate {
    pub dx: f64,
    pub dv: f64,
    pub dtheta: f64,
}

impl TwoSpeciesSystem {
    /// Builds a system with the default scaling weights `w_i = N / N_i`.
    pub fn new(
        species1: Vec<AgentState>,
        species2: Vec<AgentState>,
        couplings: Couplings,
        kernels: Kernels,
    ) -> Self {
        let (w1, w2) = default_weights(species1.len(), species2.len());
        TwoSpeciesSystem {
            species1,
            species2,
            couplings,
            kernels,
            w1,
            w2,
        }
    }

    /// Single-species system (the second species is empty, so `w₁ = 1`).
    pub fn single(agents: Vec<AgentState>, kappa: f64, nu: f64, phi: InfluenceFn, zeta: InfluenceFn) -> Self {
        let mut c = Couplings::zero();
        c.kappa1 = kappa;
        c.nu1 = nu;
        let mut k = Kernels::uniform(phi);
        k.zeta1 = zeta;
        TwoSpeciesSystem::new(agents, Vec::new(), c, k)
    }

    pub fn with_weights(mut self, w1: f64, w2: f64) -> Self {
        self.w1 = w1;
        self.w2 = w2;
        self
    }

    pub fn n_total(&self) -> usize {
        self.species1.len() + self.species2.len()
    }
}

/// `w_i = N / N_i`, or 0 for an empty species.
pub fn default_weights(n1: usize, n2: usize) -> (f64, f64) {
    let n = (n1 + n2) as f64;
    let w = |k: usize| if k == 0 { 0.0 } else { n / k as f64 };
    (w(n1), w(n2))
}

fn check_theta(agents: &[AgentState], offset: usize) -> Result<()> {
    for (i, a) in agents.iter().enumerate() {
        if !(a.theta > 0.0) {
            return Err(TcsError::Domain {
                index: offset + i,
                value: a.theta,
            });
        }
    }
    Ok(())
}

/// Right-hand side of both species: `(rates1, rates2)`.
pub fn micro_rhs(s: &TwoSpeciesSystem) -> Result<(Vec<AgentRate>, Vec<AgentRate>)> {
    check_theta(&s.species1, 0)?;
    check_theta(&s.species2, s.species1.len())?;
    Ok(rhs_unchecked(s, &s.species1, &s.species2))
}

fn rhs_unchecked(
    s: &TwoSpeciesSystem,
    a: &[AgentState],
    b: &[AgentState],
) -> (Vec<AgentRate>, Vec<AgentRate>) {
    let c = &s.couplings;
    let k = &s.kernels;
    let n = (a.len() + b.len()) as f64;
    let n1 = a.len() as f64;
    let w1 = s.w1;
    let w2 = s.w2;

    let r1 = a
        .par_iter()
        .map(|zi| {
            let (mut align, mut agg, mut therm) = (0.0, 0.0, 0.0);
            let ri = zi.v / zi.theta;
            let qi = 1.0 / zi.theta;
            for zj in a {
                let d = displacement(zi.x, zj.x);
                if c.kappa1 != 0.0 {
                    align += k.phi1.eval_disp(d) * (zj.v / zj.theta - ri);
                }
                if c.kappa_a != 0.0 {
                    agg += k.w1.grad(d);
                }
                if c.nu1 != 0.0 {
                    therm += k.zeta1.eval_disp(d) * (qi - 1.0 / zj.theta);
                }
            }
            let (mut cross_v, mut cross_t) = (0.0, 0.0);
            for zl in b {
                let d = displacement(zi.x, zl.x);
                if c.kappa_c != 0.0 {
                    cross_v += k.phi_c.eval_disp(d) * (zl.v / zl.theta - ri);
                }
                if c.nu_c != 0.0 {
                    cross_t += k.zeta_c.eval_disp(d) * (qi - 1.0 / zl.theta);
                }
            }
            let mut dv = w1 * c.kappa1 / n * align + c.kappa_c / n * cross_v;
            if c.kappa_a != 0.0 {
                dv -= w1 * c.kappa_a / n1 * agg;
            }
            AgentRate {
                dx: zi.v,
                dv: dv / c.m1,
                dtheta: w1 * c.nu1 / n * therm + c.nu_c / n * cross_t,
            }
        })
        .collect();

    let r2 = b
        .par_iter()
        .map(|zk| {
            let (mut align, mut therm) = (0.0, 0.0);
            let rk = zk.v / zk.theta;
            let qk = 1.0 / zk.theta;
            for zl in b {
                let d = displacement(zk.x, zl.x);
                if c.kappa2 != 0.0 {
                    align += k.phi2.eval_disp(d) * (zl.v / zl.theta - rk);
                }
                if c.nu2 != 0.0 {
                    therm += k.zeta2.eval_disp(d) * (qk - 1.0 / zl.theta);
                }
            }
            let (mut cross_v, mut cross_t) = (0.0, 0.0);
            for zj in a {
                let d = displacement(zk.x, zj.x);
                if c.kappa_c != 0.0 {
                    cross_v += k.phi_c.eval_disp(d) * (zj.v / zj.theta - rk);
                }
                if c.nu_c != 0.0 {
                    cross_t += k.zeta_c.eval_disp(d) * (qk - 1.0 / zj.theta);
                }
            }
            AgentRate {
                dx: zk.v,
                dv: (w2 * c.kappa2 / n * align + c.kappa_c / n * cross_v) / c.m2,
                dtheta: w2 * c.nu2 / n * therm + c.nu_c / n * cross_t,
            }
        })
        .collect();
    (r1, r2)
}

fn axpy(base: &[AgentState], rate: &[AgentRate], h: f64) -> Vec<AgentState> {
    base.iter()
        .zip(rate)
        .map(|(z, r)| AgentState {
            x: z.x + h * r.dx,
            v: z.v + h * r.dv,
            theta: z.theta + h * r.dtheta,
        })
        .collect()
}

fn rk4_combine(
    base: &[AgentState],
    k1: &[AgentRate],
    k2: &[AgentRate],
    k3: &[AgentRate],
    k4: &[AgentRate],
    h: f64,
) -> Vec<AgentState> {
    (0..base.len())
        .map(|i| {
            let z = base[i];
            let s = |f: fn(&AgentRate) -> f64| {
                (f(&k1[i]) + 2.0 * f(&k2[i]) + 2.0 * f(&k3[i]) + f(&k4[i])) * (h / 6.0)
            };
            AgentState {
                x: wrap(z.x + s(|r| r.dx)),
                v: z.v + s(|r| r.dv),
                theta: z.theta + s(|r| r.dtheta),
            }
        })
        .collect()
}

/// One classical RK4 step; positions are reduced to `[0, 1)` at the end.
pub fn rk4_step(s: &TwoSpeciesSystem, h: f64) -> (Vec<AgentState>, Vec<AgentState>) {
    let (a, b) = (&s.species1, &s.species2);
    let (k1a, k1b) = rhs_unchecked(s, a, b);
    let (a2, b2) = (axpy(a, &k1a, 0.5 * h), axpy(b, &k1b, 0.5 * h));
    let (k2a, k2b) = rhs_unchecked(s, &a2, &b2);
    let (a3, b3) = (axpy(a, &k2a, 0.5 * h), axpy(b, &k2b, 0.5 * h));
    let (k3a, k3b) = rhs_unchecked(s, &a3, &b3);
    let (a4, b4) = (axpy(a, &k3a, h), axpy(b, &k3b, h));
    let (k4a, k4b) = rhs_unchecked(s, &a4, &b4);
    (
        rk4_combine(a, &k1a, &k2a, &k3a, &k4a, h),
        rk4_combine(b, &k1b, &k2b, &k3b, &k4b, h),
    )
}

fn min_theta(a: &[AgentState], b: &[AgentState]) -> f64 {
    a.iter().chain(b).map(|z| z.theta).fold(f64::INFINITY, f64::min)
}

/// Advances the system by `dt`, halving the substep whenever some internal
/// variable would drop below [`THETA_FLOOR`].
pub fn guarded_step(s: &mut TwoSpeciesSystem, t: f64, dt: f64) -> Result<()> {
    let mut remaining = dt;
    let mut h = dt;
    while remaining > 0.0 {
        h = h.min(remaining);
        let (a, b) = rk4_step(s, h);
        if min_theta(&a, &b) <= THETA_FLOOR || a.iter().chain(&b).any(|z| !z.v.is_finite()) {
            h *= 0.5;
            if h < MIN_DT {
                return Err(TcsError::Stiffness {
                    t: t + dt - remaining,
                    min_dt: MIN_DT,
                });
            }
            continue;
        }
        s.species1 = a;
        s.species2 = b;
        remaining -= h;
        if remaining < 1e-15 * dt {
            break;
        }
    }
    Ok(())
}

/// Sampled trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub species1: Vec<Vec<AgentState>>,
    pub species2: Vec<Vec<AgentState>>,
}

/// Integrates to `t_end` with step `dt`, recording every `stride` steps (and the last one).
pub fn integrate_with(
    s: &TwoSpeciesSystem,
    dt: f64,
    t_end: f64,
    stride: usize,
) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(TcsError::Config(format!("need dt > 0 and T >= 0, got dt={dt}, T={t_end}")));
    }
    micro_rhs(s)?;
    let steps = (t_end / dt).round() as usize;
    let stride = stride.max(1);
    let mut sys = s.clone();
    let mut traj = Trajectory {
        times: vec![0.0],
        species1: vec![sys.species1.clone()],
        species2: vec![sys.species2.clone()],
    };
    for n in 1..=steps {
        guarded_step(&mut sys, (n - 1) as f64 * dt, dt)?;
        if n % stride == 0 || n == steps {
            traj.times.push(n as f64 * dt);
            traj.species1.push(sys.species1.clone());
            traj.species2.push(sys.species2.clone());
        }
    }
    Ok(traj)
}

/// Integrates to `t_end`, recording every step.
pub fn integrate(s: &TwoSpeciesSystem, dt: f64, t_end: f64) -> Result<Trajectory> {
    integrate_with(s, dt, t_end, 1)
}

/// Plain alignment model: `dv_i = κ/N Σ φ(x_i − x_j)(v_j − v_i)`.
pub fn cs_rhs(xs: &[f64], vs: &[f64], kappa: f64, phi: &InfluenceFn) -> Vec<f64> {
    let n = xs.len() as f64;
    (0..xs.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..xs.len() {
                acc += phi.eval_disp(displacement(xs[i], xs[j])) * (vs[j] - vs[i]);
            }
            kappa / n * acc
        })
        .collect()
}

/// RK4 for the plain alignment model; returns `(x, v)` at every step.
pub fn integrate_cs(
    x0: &[f64],
    v0: &[f64],
    kappa: f64,
    phi: &InfluenceFn,
    dt: f64,
    t_end: f64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let steps = (t_end / dt).round() as usize;
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut out = vec![(x.clone(), v.clone())];
    let shift = |base: &[f64], k: &[f64], h: f64| -> Vec<f64> {
        base.iter().zip(k).map(|(b, d)| b + h * d).collect()
    };
    for _ in 0..steps {
        let k1v = cs_rhs(&x, &v, kappa, phi);
        let k1x = v.clone();
        let (x2, v2) = (shift(&x, &k1x, 0.5 * dt), shift(&v, &k1v, 0.5 * dt));
        let k2v = cs_rhs(&x2, &v2, kappa, phi);
        let k2x = v2;
        let (x3, v3) = (shift(&x, &k2x, 0.5 * dt), shift(&v, &k2v, 0.5 * dt));
        let k3v = cs_rhs(&x3, &v3, kappa, phi);
        let k3x = v3;
        let (x4, v4) = (shift(&x, &k3x, dt), shift(&v, &k3v, dt));
        let k4v = cs_rhs(&x4, &v4, kappa, phi);
        let k4x = v4;
        for i in 0..x.len() {
            x[i] = wrap(x[i] + (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]) * (dt / 6.0));
            v[i] += (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]) * (dt / 6.0);
        }
        out.push((x.clone(), v.clone()));
    }
    out
}

/// Node weights of a periodic Gaussian centred at `x`, scaled so that
/// `Δx Σ_i w_i = 1` exactly.
pub fn deposit_weights(x: f64, m: usize, bandwidth: f64) -> Vec<(usize, f64)> {
    let dx = 1.0 / m as f64;
    let reach = ((6.0 * bandwidth / dx).ceil() as usize).clamp(1, m / 2);
    let nearest = (wrap(x) * m as f64).round() as isize;
    let mut out = Vec::with_capacity(2 * reach + 1);
    let mut total = 0.0;
    for o in -(reach as isize)..=(reach as isize) {
        let idx = (nearest + o).rem_euclid(m as isize) as usize;
        if out.iter().any(|&(i, _)| i == idx) {
            continue;
        }
        let d = displacement(idx as f64 * dx, x);
        let w = (-0.5 * d * d / (bandwidth * bandwidth)).exp();
        total += w;
        out.push((idx, w));
    }
    if total > 0.0 {
        for e in &mut out {
            e.1 /= total * dx;
        }
    } else {
        out.clear();
        out.push((nearest.rem_euclid(m as isize) as usize, 1.0 / dx));
    }
    out
}

/// Deposits `weight_p · q_p(z)` onto the grid for several quantities at once.
pub fn deposit<F>(positions: &[f64], weights: &[f64], m: usize, bandwidth: f64, nq: usize, q: F) -> Vec<GridFn1D>
where
    F: Fn(usize) -> Vec<f64>,
{
    let mut fields = vec![vec![0.0; m]; nq];
    for (p, (&x, &w)) in positions.iter().zip(weights).enumerate() {
        let vals = q(p);
        for (idx, k) in deposit_weights(x, m, bandwidth) {
            for (f, v) in fields.iter_mut().zip(&vals) {
                f[idx] += w * k * v;
            }
        }
    }
    fields.into_iter().map(GridFn1D::new).collect()
}

/// Kernel-density estimates of mass, momentum and internal variable of one species.
pub fn empirical_moments(
    species: &[AgentState],
    m: usize,
    bandwidth: f64,
) -> Result<(GridFn1D, GridFn1D, GridFn1D)> {
    if !(bandwidth > 0.0) {
        return Err(TcsError::Config(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if species.is_empty() {
        return Err(TcsError::Config("empty species".into()));
    }
    let w = vec![1.0 / species.len() as f64; species.len()];
    let xs: Vec<f64> = species.iter().map(|z| z.x).collect();
    let mut f = deposit(&xs, &w, m, bandwidth, 3, |p| {
        vec![1.0, species[p].v, species[p].theta]
    });
    let h = f.pop().unwrap();
    let j = f.pop().unwrap();
    let rho = f.pop().unwrap();
    Ok((rho, j, h))
}

/// `max_{i,j} |v_i − v_j|`.
pub fn velocity_diameter(agents: &[AgentState]) -> f64 {
    let (lo, hi) = agents
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), z| (l.min(z.v), h.max(z.v)));
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_agents(n: usize, seed: u64) -> Vec<AgentState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                AgentState::new(
                    rng.random::<f64>(),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.5..2.0),
                )
            })
            .collect()
    }

    fn phi1() -> InfluenceFn {
        InfluenceFn::regular(1.0).unwrap()
    }

    #[test]
    fn weights_bookkeeping() {
        let (w1, w2) = default_weights(3, 97);
        assert!((w1 * 3.0 + w2 * 97.0 - 200.0).abs() < 1e-12);
    }

    #[test]
    fn identical_agents_are_at_rest() {
        let z = AgentState::new(0.3, 0.7, 1.4);
        let mut c = Couplings::zero();
        c.kappa1 = 1.0;
        c.kappa2 = 2.0;
        c.kappa_c = 1.5;
        c.nu1 = 1.0;
        c.nu2 = 0.5;
        c.nu_c = 2.0;
        let s = TwoSpeciesSystem::new(vec![z; 4], vec![z; 6], c, Kernels::uniform(phi1()));
        let (r1, r2) = micro_rhs(&s).unwrap();
        for r in r1.iter().chain(&r2) {
            assert_eq!(r.dv, 0.0);
            assert_eq!(r.dtheta, 0.0);
        }
    }

    #[test]
    fn two_agent_cross_drag() {
        let mut c = Couplings::zero();
        c.kappa_c = 1.0;
        let s = TwoSpeciesSystem::new(
            vec![AgentState::new(0.1, 0.0, 1.0)],
            vec![AgentState::new(0.4, 1.0, 1.0)],
            c,
            Kernels::uniform(InfluenceFn::Constant(1.0)),
        );
        let (r1, _) = micro_rhs(&s).unwrap();
        assert_eq!(r1[0].dv, 0.5);
    }

    #[test]
    fn single_species_matches_direct_formula() {
        let phi = phi1();
        let zeta = InfluenceFn::regular(2.0).unwrap();
        for seed in 0..5 {
            let agents = random_agents(12, seed);
            let s = TwoSpeciesSystem::single(agents.clone(), 1.3, 0.7, phi, zeta);
            let (r, _) = micro_rhs(&s).unwrap();
            let n = agents.len() as f64;
            for (i, zi) in agents.iter().enumerate() {
                let mut dv = 0.0;
                let mut dt = 0.0;
                for zj in &agents {
                    let dist = {
                        let d = (zi.x - zj.x).rem_euclid(1.0);
                        d.min(1.0 - d)
                    };
                    let p = (1.0 + 3.0 * dist * dist).powf(-0.5);
                    let q = (1.0 + dist * dist).powf(-1.0);
                    dv += p * (zj.v / zj.theta - zi.v / zi.theta);
                    dt += q * (1.0 / zi.theta - 1.0 / zj.theta);
                }
                assert!((r[i].dv - 1.3 / n * dv).abs() < 1e-14);
                assert!((r[i].dtheta - 0.7 / n * dt).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_nonpositive_theta() {
        let s = TwoSpeciesSystem::single(
            vec![AgentState::new(0.0, 0.0, 1.0), AgentState::new(0.5, 0.0, 0.0)],
            1.0,
            1.0,
            phi1(),
            phi1(),
        );
        assert!(matches!(micro_rhs(&s), Err(TcsError::Domain { index: 1, .. })));
    }

    #[test]
    fn free_streaming() {
        let agents = random_agents(8, 3);
        let s = TwoSpeciesSystem::single(agents.clone(), 0.0, 0.0, phi1(), phi1());
        let traj = integrate(&s, 0.01, 1.0).unwrap();
        let last = traj.species1.last().unwrap();
        for (z0, z1) in agents.iter().zip(last) {
            let expect = wrap(z0.x + z0.v);
            assert!(displacement(z1.x, expect).abs() < 1e-12);
            assert_eq!(z1.v, z0.v);
        }
    }

    #[test]
    fn velocity_diameter_decays_and_agrees_with_fine_run() {
        let agents = random_agents(32, 11);
        let s = TwoSpeciesSystem::single(agents, 1.0, 1.0, phi1(), phi1());
        let coarse = integrate_with(&s, 0.01, 5.0, 10).unwrap();
        let fine = integrate_with(&s, 0.001, 5.0, 100).unwrap();
        let dc: Vec<f64> = coarse.species1.iter().map(|a| velocity_diameter(a)).collect();
        let df: Vec<f64> = fine.species1.iter().map(|a| velocity_diameter(a)).collect();
        assert_eq!(dc.len(), df.len());
        for (a, b) in dc.iter().zip(&df) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        for w in dc[1..].windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert!(dc.last().unwrap() < &dc[0]);
    }

    #[test]
    fn single_agent_mass_deposit() {
        let a = [AgentState::new(0.37, 0.2, 1.0)];
        let (rho, j, h) = empirical_moments(&a, 64, 2.0 / 64.0).unwrap();
        assert!((rho.integral() - 1.0).abs() < 1e-12);
        assert!((j.integral() - 0.2).abs() < 1e-12);
        assert!((h.integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equispaced_momentum_is_proportional() {
        let m = 32;
        let a: Vec<_> = (0..m).map(|i| AgentState::new(i as f64 / m as f64, 0.6, 1.0)).collect();
        let (rho, j, _) = empirical_moments(&a, m, 2.0 / m as f64).unwrap();
        for i in 0..m {
            assert!((j.values[i] - 0.6 * rho.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_bandwidth_falls_back_to_nearest_node() {
        let w = deposit_weights(0.5, 16, 1e-300);
        let total: f64 = w.iter().map(|e| e.1).sum::<f64>() / 16.0;
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn empirical_moments_rejects_bad_bandwidth() {
        assert!(empirical_moments(&[AgentState::new(0.0, 0.0, 1.0)], 8, 0.0).is_err());
    }
}
