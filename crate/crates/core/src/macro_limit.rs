//! Limiting density/velocity equations.
//!
//! The density follows a continuity equation discretized with WENO5 and
//! TVD-RK3; the velocity solves, at every step, the dense linear system
//! `(I − ΔxΦ)u = (θ_eff/θ^∞)u^∞·1 − θ_eff Δx 𝒲ρ`. In the weak regime the
//! scalar `θ(t)` follows `θ' = 1/θ − 1/θ^∞(t)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::diagnostics::order_parameter;
use crate::error::{Result, TcsError};
use crate::fluid::BackgroundSource;
use crate::geometry::{check_len, sample_kernel, AggregationPotential, GridFn1D, InfluenceFn};

/// CFL bound of the transport step.
pub const TRANSPORT_CFL: f64 = 0.4;

/// Nodes below this density carry no meaningful velocity and are left out of `max_u`.
pub const SUPPORT_RHO: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WenoVariant {
    /// Jiang–Shu smoothness weights.
    JiangShu,
    /// Borges et al. weights with the global `τ₅` indicator.
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Regime {
    Strong,
    Weak { theta0: f64 },
}

const WENO_EPS: f64 = 1e-40;

#[inline]
fn weno5_face(v: [f64; 5], variant: WenoVariant) -> f64 {
    // reconstruction at the right face of v[2] from the left-biased stencil
    let [a, b, c, d, e] = v;
    let q0 = (2.0 * a - 7.0 * b + 11.0 * c) / 6.0;
    let q1 = (-b + 5.0 * c + 2.0 * d) / 6.0;
    let q2 = (2.0 * c + 5.0 * d - e) / 6.0;
    let b0 = 13.0 / 12.0 * (a - 2.0 * b + c).powi(2) + 0.25 * (a - 4.0 * b + 3.0 * c).powi(2);
    let b1 = 13.0 / 12.0 * (b - 2.0 * c + d).powi(2) + 0.25 * (b - d).powi(2);
    let b2 = 13.0 / 12.0 * (c - 2.0 * d + e).powi(2) + 0.25 * (3.0 * c - 4.0 * d + e).powi(2);
    let (w0, w1, w2) = match variant {
        WenoVariant::JiangShu => {
            let eps = 1e-6;
            (
                0.1 / (eps + b0).powi(2),
                0.6 / (eps + b1).powi(2),
                0.3 / (eps + b2).powi(2),
            )
        }
        WenoVariant::Z => {
            let tau = (b0 - b2).abs();
            (
                0.1 * (1.0 + (tau / (b0 + WENO_EPS)).powi(2)),
                0.6 * (1.0 + (tau / (b1 + WENO_EPS)).powi(2)),
                0.3 * (1.0 + (tau / (b2 + WENO_EPS)).powi(2)),
            )
        }
    };
    (w0 * q0 + w1 * q1 + w2 * q2) / (w0 + w1 + w2)
}

/// `−∂x(ρu)` with Lax–Friedrichs flux splitting and WENO5 reconstruction.
pub fn transport_rhs(rho: &[f64], u: &[f64], alpha: f64, variant: WenoVariant) -> Vec<f64> {
    let m = rho.len();
    let idx = |k: isize| k.rem_euclid(m as isize) as usize;
    let fp: Vec<f64> = (0..m).map(|i| 0.5 * (rho[i] * u[i] + alpha * rho[i])).collect();
    let fm: Vec<f64> = (0..m).map(|i| 0.5 * (rho[i] * u[i] - alpha * rho[i])).collect();
    // face[i] is the flux through x_{i+1/2}
    let face: Vec<f64> = (0..m as isize)
        .map(|i| {
            let plus = weno5_face(
                [fp[idx(i - 2)], fp[idx(i - 1)], fp[idx(i)], fp[idx(i + 1)], fp[idx(i + 2)]],
                variant,
            );
            let minus = weno5_face(
                [fm[idx(i + 3)], fm[idx(i + 2)], fm[idx(i + 1)], fm[idx(i)], fm[idx(i - 1)]],
                variant,
            );
            plus + minus
        })
        .collect();
    let inv_dx = m as f64;
    (0..m)
        .map(|i| -(face[i] - face[(i + m - 1) % m]) * inv_dx)
        .collect()
}

/// Result of one transport step.
#[derive(Debug, Clone)]
pub struct TransportOutcome {
    pub rho: GridFn1D,
    /// Mass removed by clipping negative values (before renormalization).
    pub clipped: f64,
}

/// One TVD-RK3 step of `∂tρ + ∂x(ρu) = 0` with `u` frozen.
pub fn transport_step(
    rho: &GridFn1D,
    u: &GridFn1D,
    dt: f64,
    variant: WenoVariant,
) -> Result<TransportOutcome> {
    let m = rho.m();
    check_len(m, u.m())?;
    let alpha = u.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if alpha > 0.0 {
        let limit = TRANSPORT_CFL / (alpha * m as f64);
        if dt > limit * (1.0 + 1e-12) {
            return Err(TcsError::Cfl { dt, limit });
        }
    }
    let r0 = &rho.values;
    let l0 = transport_rhs(r0, &u.values, alpha, variant);
    let r1: Vec<f64> = (0..m).map(|i| r0[i] + dt * l0[i]).collect();
    let l1 = transport_rhs(&r1, &u.values, alpha, variant);
    let r2: Vec<f64> = (0..m)
        .map(|i| 0.75 * r0[i] + 0.25 * (r1[i] + dt * l1[i]))
        .collect();
    let l2 = transport_rhs(&r2, &u.values, alpha, variant);
    let mut r3: Vec<f64> = (0..m)
        .map(|i| r0[i] / 3.0 + 2.0 / 3.0 * (r2[i] + dt * l2[i]))
        .collect();
    if let Some(i) = r3.iter().position(|v| !v.is_finite()) {
        return Err(TcsError::Instability {
            step: 0,
            t: 0.0,
            what: format!("non-finite density at node {i}"),
        });
    }
    let mut clipped = 0.0;
    if r3.iter().any(|&v| v < 0.0) {
        let before: f64 = r3.iter().sum();
        for v in &mut r3 {
            if *v < 0.0 {
                clipped -= *v;
                *v = 0.0;
            }
        }
        let after: f64 = r3.iter().sum();
        let s = before / after;
        for v in &mut r3 {
            *v *= s;
        }
        clipped /= m as f64;
    }
    Ok(TransportOutcome {
        rho: GridFn1D::new(r3),
        clipped,
    })
}

/// Assembled velocity system for a given density.
#[derive(Debug, Clone)]
pub struct VelocitySolve {
    /// `Φ_ij = φ(x_i − x_j)ρ_j − δ_ij Σ_k φ(x_i − x_k)ρ_k`
    pub phi_matrix: DMatrix<f64>,
    /// `(𝒲ρ)_i = Σ_j ∇W(x_i − x_j) ρ_j`
    pub w_rho: DVector<f64>,
}

/// Kernels sampled once per grid.
#[derive(Debug, Clone)]
pub struct VelocityOperator {
    m: usize,
    phi: Vec<f64>,
    grad_w: Vec<f64>,
}

impl VelocityOperator {
    pub fn new(m: usize, phi: &InfluenceFn, potential: &AggregationPotential) -> Self {
        VelocityOperator {
            m,
            phi: sample_kernel(m, |s| phi.eval_disp(s)),
            grad_w: sample_kernel(m, |s| potential.grad(s)),
        }
    }

    pub fn assemble(&self, rho: &GridFn1D) -> Result<VelocitySolve> {
        let m = self.m;
        check_len(m, rho.m())?;
        let r = &rho.values;
        let mut phi = DMatrix::<f64>::zeros(m, m);
        let mut w_rho = DVector::<f64>::zeros(m);
        for i in 0..m {
            // the self term cancels; the diagonal is minus the compensated off-diagonal sum
            let (mut sum, mut carry) = (0.0f64, 0.0f64);
            let mut wr = 0.0;
            for j in 0..m {
                let o = (i + m - j) % m;
                wr += self.grad_w[o] * r[j];
                if j == i {
                    continue;
                }
                let p = self.phi[o] * r[j];
                phi[(i, j)] = p;
                let t = sum + p;
                carry += if sum.abs() >= p.abs() { (sum - t) + p } else { (p - t) + sum };
                sum = t;
            }
            phi[(i, i)] = -(sum + carry);
            w_rho[i] = wr;
        }
        Ok(VelocitySolve {
            phi_matrix: phi,
            w_rho,
        })
    }

    /// Solves `(I − ΔxΦ)u = (θ_eff/θ^∞)u^∞·1 − θ_eff Δx 𝒲ρ`.
    ///
    /// `θ_eff = θ^∞` gives the strong-regime equation.
    pub fn solve_velocity(
        &self,
        rho: &GridFn1D,
        u_inf: f64,
        theta_inf: f64,
        theta_eff: f64,
    ) -> Result<GridFn1D> {
        let sys = self.assemble(rho)?;
        let m = self.m;
        let dx = 1.0 / m as f64;
        let a = DMatrix::<f64>::identity(m, m) - sys.phi_matrix * dx;
        let drive = theta_eff / theta_inf * u_inf;
        let rhs = DVector::from_fn(m, |i, _| drive - theta_eff * dx * sys.w_rho[i]);
        let u = a.clone().lu().solve(&rhs).ok_or_else(|| TcsError::Instability {
            step: 0,
            t: 0.0,
            what: "velocity matrix is singular".into(),
        })?;
        debug_assert!({
            let res = (&a * &u - &rhs).amax();
            res <= 1e-10 * rhs.amax().max(1.0)
        });
        Ok(GridFn1D::new(u.iter().copied().collect()))
    }
}

/// RK4 step of `θ' = 1/θ − 1/θ^∞(t)`.
pub fn relax_step(theta: f64, t: f64, dt: f64, src: &BackgroundSource) -> f64 {
    let f = |s: f64, th: f64| 1.0 / th - 1.0 / src.theta_inf_at(s);
    let k1 = f(t, theta);
    let k2 = f(t + 0.5 * dt, theta + 0.5 * dt * k1);
    let k3 = f(t + 0.5 * dt, theta + 0.5 * dt * k2);
    let k4 = f(t + dt, theta + dt * k3);
    theta + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Advances `θ` over `[t, t + dt]`, halving substeps while `θ` would become non-positive.
pub fn relax_advance(theta: f64, t: f64, dt: f64, src: &BackgroundSource) -> Result<f64> {
    let mut th = theta;
    let mut s = t;
    let end = t + dt;
    let mut h = dt;
    while s < end - 1e-15 * dt.max(1.0) {
        h = h.min(end - s);
        let next = relax_step(th, s, h, src);
        if !(next > 0.0) || !next.is_finite() {
            h *= 0.5;
            if h < crate::particle::MIN_DT {
                return Err(TcsError::Domain { index: 0, value: next });
            }
            continue;
        }
        th = next;
        s += h;
    }
    Ok(th)
}

/// `θ(t)` sampled on the uniform grid `0, dt, …, T`.
pub fn relax_theta(theta0: f64, src: &BackgroundSource, dt: f64, t_end: f64) -> Result<Vec<(f64, f64)>> {
    if !(theta0 > 0.0) {
        return Err(TcsError::Domain { index: 0, value: theta0 });
    }
    let n = (t_end / dt).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut th = theta0;
    out.push((0.0, th));
    for k in 0..n {
        th = relax_advance(th, k as f64 * dt, dt, src)?;
        out.push(((k + 1) as f64 * dt, th));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct MacroConfig {
    pub m: usize,
    pub t_end: f64,
    pub cfl: f64,
    /// Upper bound on the step when the velocity is small.
    pub max_dt: f64,
    pub regime: Regime,
    pub phi: InfluenceFn,
    pub potential: AggregationPotential,
    pub weno: WenoVariant,
    /// Spacing of the scalar series.
    pub output_dt: f64,
    pub snapshot_times: Vec<f64>,
}

/// One row of the scalar output series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroSample {
    pub t: f64,
    pub order_parameter: f64,
    /// `θ(t)` in the weak regime, `θ^∞(t)` in the strong one.
    pub theta: f64,
    pub theta_inf: f64,
    /// `max |u|` over nodes with `ρ ≥ SUPPORT_RHO`.
    pub max_u: f64,
}

#[derive(Debug, Clone)]
pub struct MacroSnapshot {
    pub t: f64,
    pub rho: GridFn1D,
    pub u: GridFn1D,
}

#[derive(Debug, Clone)]
pub struct MacroRun {
    pub series: Vec<MacroSample>,
    pub snapshots: Vec<MacroSnapshot>,
    pub final_rho: GridFn1D,
    pub final_u: GridFn1D,
    pub final_theta: f64,
    pub max_clip: f64,
    /// Largest `|Δx Σ ρ − 1|` seen during the run.
    pub max_mass_error: f64,
    pub steps: usize,
}

fn theta_eff(regime: &Regime, theta: f64, theta_inf: f64) -> f64 {
    match regime {
        Regime::Strong => theta_inf,
        Regime::Weak { .. } => theta,
    }
}

/// Runs the limit system against a precomputed background series.
///
/// Each step uses `u^∞(t_{n+1})`, transports `ρ` with the lagged `u^n` and then
/// solves for `u^{n+1}` from `ρ^{n+1}`.
pub fn run_macro(cfg: &MacroConfig, rho0: &GridFn1D, bg: &BackgroundSource) -> Result<MacroRun> {
    check_len(cfg.m, rho0.m())?;
    let mass = rho0.integral();
    if (mass - 1.0).abs() > 1e-10 {
        return Err(TcsError::Normalization { mass });
    }
    if bg.t_end() + 1e-9 < cfg.t_end && bg.times.len() > 1 {
        return Err(TcsError::Config(format!(
            "background covers [0, {}] but the run needs [0, {}]",
            bg.t_end(),
            cfg.t_end
        )));
    }
    if !(cfg.cfl > 0.0 && cfg.cfl <= TRANSPORT_CFL) {
        return Err(TcsError::Cfl {
            dt: cfg.cfl,
            limit: TRANSPORT_CFL,
        });
    }
    let op = VelocityOperator::new(cfg.m, &cfg.phi, &cfg.potential);
    let mut theta = match cfg.regime {
        Regime::Strong => bg.theta_inf_at(0.0),
        Regime::Weak { theta0 } => {
            if !(theta0 > 0.0) {
                return Err(TcsError::Domain { index: 0, value: theta0 });
            }
            theta0
        }
    };
    let mut t = 0.0;
    let mut rho = rho0.clone();
    let th_inf = bg.theta_inf_at(0.0);
    let mut u = op.solve_velocity(&rho, bg.u_inf_at(0.0), th_inf, theta_eff(&cfg.regime, theta, th_inf))?;

    let sample = |t: f64, rho: &GridFn1D, u: &GridFn1D, theta: f64| MacroSample {
        t,
        order_parameter: order_parameter(rho),
        theta,
        theta_inf: bg.theta_inf_at(t),
        max_u: u
            .values
            .iter()
            .zip(&rho.values)
            .filter(|(_, r)| **r >= SUPPORT_RHO)
            .fold(0.0f64, |a, (v, _)| a.max(v.abs())),
    };

    let mut marks: Vec<f64> = cfg.snapshot_times.iter().copied().filter(|&s| s <= cfg.t_end + 1e-12).collect();
    marks.sort_by(f64::total_cmp);
    let mut run = MacroRun {
        series: vec![sample(0.0, &rho, &u, theta)],
        snapshots: vec![],
        final_rho: rho.clone(),
        final_u: u.clone(),
        final_theta: theta,
        max_clip: 0.0,
        max_mass_error: 0.0,
        steps: 0,
    };
    let mut next_snap = 0;
    while next_snap < marks.len() && marks[next_snap] <= 0.0 {
        run.snapshots.push(MacroSnapshot { t: 0.0, rho: rho.clone(), u: u.clone() });
        next_snap += 1;
    }
    let mut next_out = 1usize;
    let n_out = (cfg.t_end / cfg.output_dt).round() as usize;

    while t < cfg.t_end - 1e-12 {
        let umax = u.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut dt = if umax > 0.0 {
            (cfg.cfl / (umax * cfg.m as f64)).min(cfg.max_dt)
        } else {
            cfg.max_dt
        };
        let mut target = cfg.t_end;
        if next_out <= n_out {
            target = target.min(next_out as f64 * cfg.output_dt);
        }
        if next_snap < marks.len() {
            target = target.min(marks[next_snap]);
        }
        let landed = t + dt >= target - 1e-12;
        if landed {
            dt = target - t;
        }
        let t_next = if landed { target } else { t + dt };

        if let Regime::Weak { .. } = cfg.regime {
            theta = relax_advance(theta, t, dt, bg)?;
        }
        let step = transport_step(&rho, &u, dt, cfg.weno).map_err(|e| match e {
            TcsError::Instability { what, .. } => TcsError::Instability {
                step: run.steps + 1,
                t: t_next,
                what,
            },
            other => other,
        })?;
        rho = step.rho;
        run.max_clip = run.max_clip.max(step.clipped);
        run.max_mass_error = run.max_mass_error.max((rho.integral() - 1.0).abs());
        let th_inf = bg.theta_inf_at(t_next);
        if let Regime::Strong = cfg.regime {
            theta = th_inf;
        }
        u = op.solve_velocity(&rho, bg.u_inf_at(t_next), th_inf, theta_eff(&cfg.regime, theta, th_inf))?;
        t = t_next;
        run.steps += 1;

        if next_out <= n_out && (t - next_out as f64 * cfg.output_dt).abs() < 1e-9 {
            run.series.push(sample(t, &rho, &u, theta));
            next_out += 1;
        }
        while next_snap < marks.len() && (marks[next_snap] - t).abs() < 1e-9 {
            run.snapshots.push(MacroSnapshot { t, rho: rho.clone(), u: u.clone() });
            next_snap += 1;
        }
    }
    run.final_rho = rho;
    run.final_u = u;
    run.final_theta = theta;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn regular() -> InfluenceFn {
        InfluenceFn::regular(1.0).unwrap()
    }

    /// Plain Gaussian elimination with partial pivoting, written independently of nalgebra.
    fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for k in 0..n {
            let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
            a.swap(k, p);
            b.swap(k, p);
            for i in k + 1..n {
                let f = a[i][k] / a[k][k];
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
                b[i] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= a[i][j] * x[j];
            }
            x[i] = s / a[i][i];
        }
        x
    }

    #[test]
    fn velocity_matches_reference_elimination() {
        let m = 256;
        let rho = presets::limit_rho0_grid(m);
        let op = VelocityOperator::new(m, &regular(), &AggregationPotential::PeriodicLogBump);
        let (u_inf, th) = (0.5, 3f64.sqrt());
        let u = op.solve_velocity(&rho, u_inf, th, th).unwrap();
        let dx = 1.0 / m as f64;
        let dist = |i: usize, j: usize| {
            let d = (i as f64 - j as f64).abs() * dx;
            d.min(1.0 - d)
        };
        let w = AggregationPotential::PeriodicLogBump;
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for i in 0..m {
            let mut gw = 0.0;
            for j in 0..m {
                let p = (1.0 + 3.0 * dist(i, j).powi(2)).powf(-0.5) * rho.values[j];
                a[i][j] -= dx * p;
                a[i][i] += dx * p;
                gw += w.grad(i as f64 * dx - j as f64 * dx) * rho.values[j];
            }
            a[i][i] += 1.0;
            b[i] = u_inf - th * dx * gw;
        }
        let reference = gauss_solve(a, b);
        for i in 0..m {
            assert!((u.values[i] - reference[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn constants_solve_the_potential_free_equation() {
        let m = 64;
        let op = VelocityOperator::new(m, &regular(), &AggregationPotential::Zero);
        let rho = presets::limit_rho0_grid(m);
        let u = op.solve_velocity(&rho, 0.37, 2.0, 2.0).unwrap();
        for v in u.values {
            assert!((v - 0.37).abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_is_linear_in_theta_eff() {
        let m = 64;
        let op = VelocityOperator::new(m, &regular(), &AggregationPotential::PeriodicLogBump);
        let rho = presets::limit_rho0_grid(m);
        let u1 = op.solve_velocity(&rho, 0.0, 2.0, 1.5).unwrap();
        let u2 = op.solve_velocity(&rho, 0.0, 2.0, 3.0).unwrap();
        assert!(u1.values.iter().any(|v| v.abs() > 1e-6));
        for (a, b) in u1.values.iter().zip(&u2.values) {
            assert!((2.0 * a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_velocity_keeps_density() {
        let rho = presets::limit_rho0_grid(64);
        let out = transport_step(&rho, &GridFn1D::zeros(64), 0.01, WenoVariant::JiangShu).unwrap();
        for (a, b) in out.rho.values.iter().zip(&rho.values) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn transport_conserves_mass() {
        let m = 128;
        let rho = presets::limit_rho0_grid(m);
        let u = GridFn1D::from_fn(m, |x| 0.5 + (2.0 * std::f64::consts::PI * x).sin());
        let dt = TRANSPORT_CFL / (1.5 * m as f64);
        let mut r = rho;
        for _ in 0..20 {
            r = transport_step(&r, &u, dt, WenoVariant::JiangShu).unwrap().rho;
            assert!((r.integral() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn transport_rejects_large_steps() {
        let rho = presets::limit_rho0_grid(32);
        let u = GridFn1D::constant(32, 1.0);
        assert!(matches!(
            transport_step(&rho, &u, 1.0, WenoVariant::Z),
            Err(TcsError::Cfl { .. })
        ));
    }

    #[test]
    fn relaxation_fixed_point_and_decay() {
        let bg = BackgroundSource::constant(2.0, 0.25);
        let flat = relax_theta(2.0, &bg, 0.01, 5.0).unwrap();
        assert!(flat.iter().all(|&(_, th)| th == 2.0));
        let path = relax_theta(5.0, &bg, 0.01, 40.0).unwrap();
        for w in path.windows(2) {
            assert!(w[1].1 < w[0].1);
            // θ' has the sign of θ^∞ − θ
            assert!(w[0].1 > 2.0);
        }
        assert!((path.last().unwrap().1 - 2.0) < 0.05);
    }

    #[test]
    fn rigid_translation_without_interactions() {
        let m = 128;
        let cfg = MacroConfig {
            m,
            t_end: 0.5,
            cfl: TRANSPORT_CFL,
            max_dt: 0.01,
            regime: Regime::Strong,
            phi: InfluenceFn::Constant(1.0),
            potential: AggregationPotential::Zero,
            weno: WenoVariant::Z,
            output_dt: 0.1,
            snapshot_times: vec![0.5],
        };
        let bg = BackgroundSource::constant(2.0, 0.25);
        let run = run_macro(&cfg, &presets::limit_rho0_grid(m), &bg).unwrap();
        for v in &run.final_u.values {
            assert!((v - 0.5).abs() < 1e-12);
        }
        let exact = GridFn1D::from_fn(m, |x| presets::limit_rho0_unnormalized(x - 0.25));
        let z = exact.integral();
        let l1: f64 = run
            .final_rho
            .values
            .iter()
            .zip(&exact.values)
            .map(|(a, b)| (a - b / z).abs())
            .sum::<f64>()
            / m as f64;
        assert!(l1 < 1e-4, "L1 = {l1}");
        assert_eq!(run.series.len(), 6);
    }

    #[test]
    fn weak_matches_strong_on_a_stationary_background() {
        let m = 64;
        let bg = BackgroundSource::constant(2.0, 0.25);
        let base = MacroConfig {
            m,
            t_end: 1.0,
            cfl: TRANSPORT_CFL,
            max_dt: 0.01,
            regime: Regime::Strong,
            phi: regular(),
            potential: AggregationPotential::PeriodicLogBump,
            weno: WenoVariant::Z,
            output_dt: 0.1,
            snapshot_times: vec![],
        };
        let rho0 = presets::limit_rho0_grid(m);
        let strong = run_macro(&base, &rho0, &bg).unwrap();
        let weak = run_macro(
            &MacroConfig {
                regime: Regime::Weak { theta0: 2.0 },
                ..base.clone()
            },
            &rho0,
            &bg,
        )
        .unwrap();
        assert_eq!(strong.series, weak.series);
    }
}
