//! Background hydrodynamic alignment system on a staggered central scheme.
//!
//! Conservative variables are `(ρ̄, ρ̄ū, ρ̄ē)`. Each step of the central
//! scheme moves the solution half a cell, so states alternate between the
//! regular nodes `j/M` and the staggered nodes `(j + 1/2)/M`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TcsError};
use crate::geometry::{check_len, cyclic_convolve, sample_kernel, GridFn1D, InfluenceFn};

pub const RHO_FLOOR: f64 = 1e-10;
pub const CFL_MAX: f64 = 0.45;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Regular,
    Staggered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub parity: Parity,
    pub rho: GridFn1D,
    pub mom: GridFn1D,
    pub energy: GridFn1D,
    pub t: f64,
}

impl FluidState {
    /// Builds the conservative state from primitive profiles sampled on the regular nodes.
    pub fn from_primitive(
        m: usize,
        rho: impl Fn(f64) -> f64,
        u: impl Fn(f64) -> f64,
        e: impl Fn(f64) -> f64,
    ) -> Self {
        let r = GridFn1D::from_fn(m, &rho);
        let mom = GridFn1D::from_fn(m, |x| rho(x) * u(x));
        let en = GridFn1D::from_fn(m, |x| rho(x) * e(x));
        FluidState {
            parity: Parity::Regular,
            rho: r,
            mom,
            energy: en,
            t: 0.0,
        }
    }

    pub fn m(&self) -> usize {
        self.rho.m()
    }

    pub fn velocity(&self) -> GridFn1D {
        ratio(&self.mom, &self.rho)
    }

    pub fn internal(&self) -> GridFn1D {
        ratio(&self.energy, &self.rho)
    }

    /// Totals `(Δx Σ ρ̄, Δx Σ m̄, Δx Σ Ē)`.
    pub fn totals(&self) -> (f64, f64, f64) {
        (self.rho.integral(), self.mom.integral(), self.energy.integral())
    }

    /// Same state on the regular nodes (two-point average if staggered).
    pub fn to_regular(&self) -> FluidState {
        match self.parity {
            Parity::Regular => self.clone(),
            Parity::Staggered => {
                let avg = |g: &GridFn1D| {
                    let m = g.m();
                    GridFn1D::new(
                        (0..m)
                            .map(|j| 0.5 * (g.values[(j + m - 1) % m] + g.values[j]))
                            .collect(),
                    )
                };
                FluidState {
                    parity: Parity::Regular,
                    rho: avg(&self.rho),
                    mom: avg(&self.mom),
                    energy: avg(&self.energy),
                    t: self.t,
                }
            }
        }
    }

    /// Node positions of the stored values.
    pub fn nodes(&self) -> Vec<f64> {
        let m = self.m();
        let off = match self.parity {
            Parity::Regular => 0.0,
            Parity::Staggered => 0.5,
        };
        (0..m).map(|j| (j as f64 + off) / m as f64).collect()
    }
}

fn ratio(num: &GridFn1D, den: &GridFn1D) -> GridFn1D {
    GridFn1D::new(
        num.values
            .iter()
            .zip(&den.values)
            .map(|(n, d)| n / d.max(RHO_FLOOR))
            .collect(),
    )
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        a.min(b)
    } else if a < 0.0 && b < 0.0 {
        a.max(b)
    } else {
        0.0
    }
}

/// Solver for the background system with fixed kernels and grid size.
#[derive(Debug, Clone)]
pub struct FluidSolver {
    m: usize,
    phi: Vec<f64>,
    zeta: Vec<f64>,
    shared: bool,
}

type Triple = [Vec<f64>; 3];

impl FluidSolver {
    pub fn new(m: usize, phi: &InfluenceFn, zeta: &InfluenceFn) -> Self {
        FluidSolver {
            m,
            phi: sample_kernel(m, |s| phi.eval_disp(s)),
            zeta: sample_kernel(m, |s| zeta.eval_disp(s)),
            shared: phi == zeta,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Momentum and energy sources `(S_m, S_E)`.
    pub fn tcs_source(&self, state: &FluidState) -> Result<(GridFn1D, GridFn1D)> {
        check_len(self.m, state.m())?;
        for (i, &r) in state.rho.values.iter().enumerate() {
            if !(r >= RHO_FLOOR) {
                return Err(TcsError::Positivity { index: i, value: r });
            }
        }
        let (sm, se) = self.sources(&state.rho.values, &state.mom.values, &state.energy.values);
        Ok((GridFn1D::new(sm), GridFn1D::new(se)))
    }

    fn sources(&self, rho: &[f64], mom: &[f64], en: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let m = rho.len();
        let mut a = vec![0.0; m]; // ρ ū/ē
        let mut b = vec![0.0; m]; // ρ/ē
        let mut ue = vec![0.0; m];
        let mut inv_e = vec![0.0; m];
        for i in 0..m {
            let r = rho[i].max(RHO_FLOOR);
            let u = mom[i] / r;
            let e = en[i] / r;
            ue[i] = u / e;
            inv_e[i] = 1.0 / e;
            a[i] = rho[i] * ue[i];
            b[i] = rho[i] * inv_e[i];
        }
        let phi_rho = cyclic_convolve(&self.phi, rho);
        let phi_a = cyclic_convolve(&self.phi, &a);
        let zeta_rho = if self.shared {
            phi_rho.clone()
        } else {
            cyclic_convolve(&self.zeta, rho)
        };
        let zeta_b = cyclic_convolve(&self.zeta, &b);
        let sm = (0..m)
            .map(|i| rho[i] * (phi_a[i] - ue[i] * phi_rho[i]))
            .collect();
        let se = (0..m)
            .map(|i| rho[i] * (inv_e[i] * zeta_rho[i] - zeta_b[i]))
            .collect();
        (sm, se)
    }

    fn flux(w: &Triple) -> Triple {
        let m = w[0].len();
        let mut f = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
        for i in 0..m {
            let r = w[0][i].max(RHO_FLOOR);
            let u = w[1][i] / r;
            f[0][i] = w[1][i];
            f[1][i] = w[1][i] * u;
            f[2][i] = w[2][i] * u;
        }
        f
    }

    fn source_triple(&self, w: &Triple) -> Triple {
        let (sm, se) = self.sources(&w[0], &w[1], &w[2]);
        [vec![0.0; w[0].len()], sm, se]
    }

    /// Largest stable step `CFL · Δx / max(|ū| + 1)`.
    pub fn stable_dt(&self, state: &FluidState, cfl: f64) -> f64 {
        let speed = state
            .velocity()
            .values
            .iter()
            .fold(0.0f64, |acc, u| acc.max(u.abs()))
            + 1.0;
        cfl / (speed * self.m as f64)
    }

    /// One predictor–corrector step; the result lives on the complementary grid.
    pub fn nt_step(&self, state: &FluidState, dt: f64) -> Result<FluidState> {
        check_len(self.m, state.m())?;
        let limit = self.stable_dt(state, CFL_MAX);
        if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
            return Err(TcsError::Cfl { dt, limit });
        }
        let m = self.m;
        let lam = dt * m as f64;
        let w: Triple = [
            state.rho.values.clone(),
            state.mom.values.clone(),
            state.energy.values.clone(),
        ];
        let f = Self::flux(&w);
        let g = self.source_triple(&w);

        let slope = |v: &[f64]| -> Vec<f64> {
            (0..m)
                .map(|j| {
                    let jp = (j + 1) % m;
                    let jm = (j + m - 1) % m;
                    minmod(v[jp] - v[j], v[j] - v[jm])
                })
                .collect()
        };
        let ws: Vec<Vec<f64>> = w.iter().map(|c| slope(c)).collect();
        let fs: Vec<Vec<f64>> = f.iter().map(|c| slope(c)).collect();

        let mut half: Triple = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
        for c in 0..3 {
            for j in 0..m {
                half[c][j] = w[c][j] + 0.5 * dt * (g[c][j] - fs[c][j] * m as f64);
            }
        }
        let fh = Self::flux(&half);
        let gh = self.source_triple(&half);

        let mut new: Triple = [vec![0.0; m], vec![0.0; m], vec![0.0; m]];
        for c in 0..3 {
            for j in 0..m {
                let jp = (j + 1) % m;
                new[c][j] = 0.5 * (w[c][j] + w[c][jp]) + 0.125 * (ws[c][j] - ws[c][jp])
                    + lam * (fh[c][j] - fh[c][jp])
                    + 0.5 * dt * (gh[c][jp] + gh[c][j]);
            }
        }
        for c in 0..3 {
            if let Some(j) = new[c].iter().position(|v| !v.is_finite()) {
                return Err(TcsError::Instability {
                    step: 0,
                    t: state.t + dt,
                    what: format!("non-finite value in component {c} at node {j}"),
                });
            }
        }
        let [r, mo, en] = new;
        let (r, mo, en, parity) = match state.parity {
            Parity::Regular => (
                GridFn1D::new(r),
                GridFn1D::new(mo),
                GridFn1D::new(en),
                Parity::Staggered,
            ),
            // value j now sits at node j + 1
            Parity::Staggered => (
                GridFn1D::new(r).rotate(1),
                GridFn1D::new(mo).rotate(1),
                GridFn1D::new(en).rotate(1),
                Parity::Regular,
            ),
        };
        Ok(FluidState {
            parity,
            rho: r,
            mom: mo,
            energy: en,
            t: state.t + dt,
        })
    }
}

/// Averaged quantities seen by the other levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanQuantities {
    pub theta_inf: f64,
    /// `u^∞ / θ^∞`
    pub ratio: f64,
    pub fluct_u: f64,
    pub fluct_e: f64,
}

impl MeanQuantities {
    pub fn u_inf(&self) -> f64 {
        self.ratio * self.theta_inf
    }
}

/// Harmonic-mean internal variable, velocity ratio and oscillations of `ū`, `ē`.
pub fn mean_quantities(state: &FluidState) -> MeanQuantities {
    let dx = state.rho.dx();
    let u = state.velocity();
    let e = state.internal();
    let mut inv = 0.0;
    let mut r = 0.0;
    for i in 0..state.m() {
        inv += state.rho.values[i] / e.values[i];
        r += state.rho.values[i] * u.values[i] / e.values[i];
    }
    let reg = state.to_regular();
    let (ur, er) = (reg.velocity(), reg.internal());
    MeanQuantities {
        theta_inf: 1.0 / (dx * inv),
        ratio: dx * r,
        fluct_u: ur.max() - ur.min(),
        fluct_e: er.max() - er.min(),
    }
}

/// Time series of background averages, linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSource {
    pub times: Vec<f64>,
    pub theta_inf: Vec<f64>,
    pub ratio: Vec<f64>,
    pub fluct_u: Vec<f64>,
    pub fluct_e: Vec<f64>,
}

impl BackgroundSource {
    /// Background frozen at `θ^∞` and `u^∞/θ^∞` for all times.
    pub fn constant(theta_inf: f64, ratio: f64) -> Self {
        BackgroundSource {
            times: vec![0.0],
            theta_inf: vec![theta_inf],
            ratio: vec![ratio],
            fluct_u: vec![0.0],
            fluct_e: vec![0.0],
        }
    }

    pub fn push(&mut self, t: f64, q: &MeanQuantities) {
        self.times.push(t);
        self.theta_inf.push(q.theta_inf);
        self.ratio.push(q.ratio);
        self.fluct_u.push(q.fluct_u);
        self.fluct_e.push(q.fluct_e);
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    fn interp(&self, series: &[f64], t: f64) -> f64 {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return series[0];
        }
        if t >= self.times[n - 1] {
            return series[n - 1];
        }
        let k = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let a = (t - t0) / (t1 - t0);
        series[k - 1] * (1.0 - a) + series[k] * a
    }

    pub fn theta_inf_at(&self, t: f64) -> f64 {
        self.interp(&self.theta_inf, t)
    }

    pub fn ratio_at(&self, t: f64) -> f64 {
        self.interp(&self.ratio, t)
    }

    pub fn u_inf_at(&self, t: f64) -> f64 {
        self.theta_inf_at(t) * self.ratio_at(t)
    }

    /// Finite-difference estimate of `sup |dθ^∞/dt|` over the stored series.
    pub fn theta_inf_rate(&self) -> f64 {
        self.times
            .windows(2)
            .zip(self.theta_inf.windows(2))
            .filter(|(t, _)| t[1] > t[0])
            .map(|(t, th)| ((th[1] - th[0]) / (t[1] - t[0])).abs())
            .fold(0.0, f64::max)
    }

    pub fn theta_inf_range(&self) -> (f64, f64) {
        self.theta_inf
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)))
    }
}

/// Output of [`run_background`].
#[derive(Debug, Clone)]
pub struct BackgroundRun {
    pub source: BackgroundSource,
    /// Regular-grid snapshots at the requested times.
    pub snapshots: Vec<FluidState>,
    /// `(t, mass, momentum, energy)` after every step.
    pub totals: Vec<(f64, f64, f64, f64)>,
    /// Largest step-to-step decrease of `θ^∞`.
    pub max_theta_decrease: f64,
    /// Largest distance of `ē` outside the initial envelope.
    pub max_envelope_excursion: f64,
    pub min_rho: f64,
    pub steps: usize,
}

/// Runs the background system to `t_end`, landing exactly on each snapshot time.
pub fn run_background(
    solver: &FluidSolver,
    init: &FluidState,
    t_end: f64,
    cfl: f64,
    snapshot_times: &[f64],
) -> Result<BackgroundRun> {
    if !(cfl > 0.0 && cfl <= CFL_MAX) {
        return Err(TcsError::Cfl {
            dt: cfl,
            limit: CFL_MAX,
        });
    }
    let e0 = init.internal();
    let (lo, hi) = (e0.min(), e0.max());
    let mut state = init.clone();
    let mut source = BackgroundSource {
        times: vec![],
        theta_inf: vec![],
        ratio: vec![],
        fluct_u: vec![],
        fluct_e: vec![],
    };
    let q0 = mean_quantities(&state);
    source.push(state.t, &q0);
    let mut out = BackgroundRun {
        source,
        snapshots: vec![],
        totals: vec![{
            let (a, b, c) = state.totals();
            (state.t, a, b, c)
        }],
        max_theta_decrease: 0.0,
        max_envelope_excursion: 0.0,
        min_rho: state.rho.min(),
        steps: 0,
    };
    let mut marks: Vec<f64> = snapshot_times.iter().copied().filter(|&s| s <= t_end).collect();
    marks.sort_by(f64::total_cmp);
    let mut next = 0;
    while next < marks.len() && marks[next] <= state.t {
        out.snapshots.push(state.to_regular());
        next += 1;
    }
    let mut prev_theta = q0.theta_inf;
    while state.t < t_end - 1e-12 {
        let mut dt = solver.stable_dt(&state, cfl);
        let target = if next < marks.len() { marks[next].min(t_end) } else { t_end };
        if state.t + dt > target {
            dt = target - state.t;
        }
        state = solver.nt_step(&state, dt).map_err(|e| match e {
            TcsError::Instability { t, what, .. } => TcsError::Instability {
                step: out.steps + 1,
                t,
                what,
            },
            other => other,
        })?;
        if (state.t - target).abs() < 1e-12 {
            state.t = target;
        }
        out.steps += 1;
        let q = mean_quantities(&state);
        out.source.push(state.t, &q);
        out.max_theta_decrease = out.max_theta_decrease.max(prev_theta - q.theta_inf);
        prev_theta = q.theta_inf;
        let e = state.internal();
        out.max_envelope_excursion = out
            .max_envelope_excursion
            .max(lo - e.min())
            .max(e.max() - hi);
        out.min_rho = out.min_rho.min(state.rho.min());
        let (a, b, c) = state.totals();
        out.totals.push((state.t, a, b, c));
        while next < marks.len() && marks[next] <= state.t + 1e-12 {
            out.snapshots.push(state.to_regular());
            next += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn solver(m: usize) -> FluidSolver {
        let phi = InfluenceFn::regular(1.0).unwrap();
        FluidSolver::new(m, &phi, &phi)
    }

    fn preset_state(m: usize) -> FluidState {
        FluidState::from_primitive(
            m,
            presets::background_rho0,
            presets::background_u0,
            presets::background_e0,
        )
    }

    #[test]
    fn sources_vanish_for_aligned_profiles() {
        let s = solver(64);
        let st = FluidState::from_primitive(64, |x| 1.0 + 0.3 * (6.0 * x).sin(), |x| 0.4 * (2.0 + x), |x| 2.0 + x);
        let (sm, _) = s.tcs_source(&st).unwrap();
        assert!(sm.values.iter().all(|v| v.abs() < 1e-14));
        let st = FluidState::from_primitive(64, |x| 1.0 + 0.3 * (6.0 * x).sin(), |x| x, |_| 2.0);
        let (_, se) = s.tcs_source(&st).unwrap();
        assert!(se.values.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn sources_have_zero_total() {
        let s = solver(128);
        let st = preset_state(128);
        let (sm, se) = s.tcs_source(&st).unwrap();
        assert!(sm.integral().abs() < 1e-15);
        assert!(se.integral().abs() < 1e-15);
    }

    #[test]
    fn source_matches_double_sum() {
        let m = 32;
        let s = solver(m);
        let st = preset_state(m);
        let (sm, se) = s.tcs_source(&st).unwrap();
        let dx = 1.0 / m as f64;
        let u = |x: f64| presets::background_u0(x);
        let e = |x: f64| presets::background_e0(x);
        for i in 0..m {
            let xi = i as f64 * dx;
            let (mut a, mut b) = (0.0, 0.0);
            for j in 0..m {
                let xj = j as f64 * dx;
                let d = (xi - xj).rem_euclid(1.0);
                let d = d.min(1.0 - d);
                let k = 1.0 / (1.0 + 3.0 * d * d).sqrt();
                a += k * (u(xj) / e(xj) - u(xi) / e(xi));
                b += k * (1.0 / e(xi) - 1.0 / e(xj));
            }
            assert!((sm.values[i] - a * dx).abs() < 1e-14);
            assert!((se.values[i] - b * dx).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_state_is_a_fixed_point() {
        let s = solver(64);
        let st = FluidState::from_primitive(64, |_| 1.0, |_| 0.5, |_| 2.0);
        let dt = s.stable_dt(&st, CFL_MAX);
        let a = s.nt_step(&st, dt).unwrap();
        let b = s.nt_step(&a, dt).unwrap();
        for next in [&a, &b] {
            for i in 0..64 {
                assert!((next.rho.values[i] - 1.0).abs() < 1e-14);
                assert!((next.mom.values[i] - 0.5).abs() < 1e-14);
                assert!((next.energy.values[i] - 2.0).abs() < 1e-14);
            }
        }
        assert_eq!(b.parity, Parity::Regular);
    }

    #[test]
    fn two_steps_conserve_totals() {
        let s = solver(256);
        let st = preset_state(256);
        let dt = s.stable_dt(&st, CFL_MAX);
        let a = s.nt_step(&st, dt).unwrap();
        assert!((a.rho.integral() - 1.0).abs() < 1e-14);
        let dt2 = s.stable_dt(&a, CFL_MAX);
        let b = s.nt_step(&a, dt2).unwrap();
        let (m0, p0, e0) = st.totals();
        let (m1, p1, e1) = b.totals();
        // direct summation audit
        let audit = |g: &GridFn1D| g.values.iter().sum::<f64>() / g.m() as f64;
        assert!((audit(&b.mom) - p1).abs() < 1e-15);
        assert!(((m1 - m0) / m0).abs() < 1e-12);
        assert!(((p1 - p0) / p0).abs() < 1e-12);
        assert!(((e1 - e0) / e0).abs() < 1e-12);
    }

    #[test]
    fn staggered_rotation_restores_translation() {
        // pure transport at unit speed with no sources: after two steps of Δx/2 each,
        // the profile has shifted by one cell
        let m = 64;
        let zero = InfluenceFn::Constant(0.0);
        let s = FluidSolver::new(m, &zero, &zero);
        let st = FluidState::from_primitive(m, |_| 1.0, |_| 0.5, |x| 2.0 + (2.0 * std::f64::consts::PI * x).cos());
        let dt = 1.0 / m as f64;
        let a = s.nt_step(&st, dt * 0.3).unwrap();
        let b = s.nt_step(&a, dt * 0.3).unwrap();
        let e = b.internal();
        let exact = |x: f64| 2.0 + (2.0 * std::f64::consts::PI * (x - 0.5 * 0.6 * dt)).cos();
        for i in 0..m {
            assert!((e.values[i] - exact(i as f64 / m as f64)).abs() < 5e-3);
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let s = solver(32);
        let st = preset_state(32);
        let dt = s.stable_dt(&st, CFL_MAX);
        assert!(matches!(s.nt_step(&st, 2.0 * dt), Err(TcsError::Cfl { .. })));
    }

    #[test]
    fn mean_quantity_examples() {
        let st = FluidState::from_primitive(128, |_| 1.0, |_| 0.5, |_| 2.0);
        let q = mean_quantities(&st);
        assert!((q.theta_inf - 2.0).abs() < 1e-14);
        assert_eq!(q.fluct_u, 0.0);
        let st = FluidState::from_primitive(128, |_| 1.0, presets::background_u0, |_| 2.0);
        assert!((mean_quantities(&st).ratio - 0.25).abs() < 1e-14);
        // harmonic mean of 2 + cos 2πx is sqrt(3)
        let q = mean_quantities(&preset_state(256));
        assert!((q.theta_inf - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_linear() {
        let mut src = BackgroundSource::constant(1.0, 0.0);
        src.push(
            2.0,
            &MeanQuantities {
                theta_inf: 3.0,
                ratio: 1.0,
                fluct_u: 0.0,
                fluct_e: 0.0,
            },
        );
        assert_eq!(src.theta_inf_at(1.0), 2.0);
        assert_eq!(src.u_inf_at(1.0), 1.0);
        assert_eq!(src.theta_inf_at(5.0), 3.0);
        assert_eq!(src.theta_inf_rate(), 1.0);
    }

    #[test]
    fn short_run_keeps_invariants() {
        let s = solver(128);
        let run = run_background(&s, &preset_state(128), 1.0, CFL_MAX, &[0.5, 1.0]).unwrap();
        assert_eq!(run.snapshots.len(), 2);
        assert!((run.source.t_end() - 1.0).abs() < 1e-14);
        let (_, m0, p0, e0) = run.totals[0];
        let (_, m1, p1, e1) = *run.totals.last().unwrap();
        assert!(((m1 - m0) / m0).abs() < 1e-12);
        assert!(((p1 - p0) / p0).abs() < 1e-12);
        assert!(((e1 - e0) / e0).abs() < 1e-12);
    }
}
