//! Cross-level comparisons: circular transport distances, bounded-Lipschitz
//! distances of signed measures, decay-rate fits and the order parameter.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TcsError};
use crate::geometry::{wrap, GridFn1D};
use crate::kinetic::KineticRecord;

/// Norm of the first circular moment `|Δx Σ (cos 2πx_i, sin 2πx_i) ρ_i|`.
pub fn order_parameter(rho: &GridFn1D) -> f64 {
    let m = rho.m();
    let dx = rho.dx();
    let (mut c, mut s) = (0.0, 0.0);
    for (i, r) in rho.values.iter().enumerate() {
        let a = 2.0 * PI * i as f64 / m as f64;
        c += a.cos() * r;
        s += a.sin() * r;
    }
    (c * dx).hypot(s * dx)
}

/// Discrete measure on the circle: atoms at `points` with nonnegative `masses`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleMeasure {
    pub points: Vec<f64>,
    pub masses: Vec<f64>,
}

impl CircleMeasure {
    pub fn new(points: Vec<f64>, masses: Vec<f64>) -> Self {
        CircleMeasure {
            points: points.into_iter().map(wrap).collect(),
            masses,
        }
    }

    /// Equal-weight atoms.
    pub fn empirical(points: &[f64]) -> Self {
        let w = 1.0 / points.len() as f64;
        CircleMeasure::new(points.to_vec(), vec![w; points.len()])
    }

    /// Node masses `Δx ρ_i` of a grid density.
    pub fn from_grid(rho: &GridFn1D) -> Self {
        let dx = rho.dx();
        CircleMeasure {
            points: (0..rho.m()).map(|i| rho.node(i)).collect(),
            masses: rho.values.iter().map(|v| v * dx).collect(),
        }
    }

    /// Grid density spread uniformly over the cells `[x_i − Δx/2, x_i + Δx/2)`,
    /// represented by `refine` atoms per cell.
    pub fn from_grid_cells(rho: &GridFn1D, refine: usize) -> Self {
        let m = rho.m();
        let dx = rho.dx();
        let mut points = Vec::with_capacity(m * refine);
        let mut masses = Vec::with_capacity(m * refine);
        for i in 0..m {
            for k in 0..refine {
                points.push(wrap(rho.node(i) - 0.5 * dx + (k as f64 + 0.5) * dx / refine as f64));
                masses.push(rho.values[i] * dx / refine as f64);
            }
        }
        CircleMeasure { points, masses }
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }
}

fn check_normalized(mu: &CircleMeasure) -> Result<()> {
    let mass = mu.total();
    if (mass - 1.0).abs() > 1e-9 || mu.masses.iter().any(|&w| w < -1e-14) {
        return Err(TcsError::Normalization { mass });
    }
    Ok(())
}

/// Weighted median of `values` under `weights` (lower median on ties).
fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &idx {
        acc += weights[i];
        if acc >= 0.5 * total {
            return values[i];
        }
    }
    values[*idx.last().unwrap()]
}

/// Wasserstein-1 distance on the circle between two probability measures.
///
/// Uses `min_c ∫ |F_a − F_b − c|`, where `F` are the cumulative distribution
/// functions from the origin; the optimal shift is a weighted median.
pub fn wasserstein1_circle(a: &CircleMeasure, b: &CircleMeasure) -> Result<f64> {
    check_normalized(a)?;
    check_normalized(b)?;
    let mut ev: Vec<(f64, f64)> = a
        .points
        .iter()
        .zip(&a.masses)
        .map(|(&x, &w)| (x, w))
        .chain(b.points.iter().zip(&b.masses).map(|(&x, &w)| (x, -w)))
        .collect();
    ev.sort_by(|p, q| p.0.total_cmp(&q.0));
    // piecewise-constant F_a − F_b on the intervals between consecutive events
    let mut lens = Vec::with_capacity(ev.len());
    let mut vals = Vec::with_capacity(ev.len());
    let mut f = 0.0;
    let mut prev = 0.0;
    for &(x, w) in &ev {
        if x > prev {
            lens.push(x - prev);
            vals.push(f);
        }
        f += w;
        prev = x;
    }
    if prev < 1.0 {
        lens.push(1.0 - prev);
        vals.push(f);
    }
    let c = weighted_median(&vals, &lens);
    Ok(vals.iter().zip(&lens).map(|(v, l)| (v - c).abs() * l).sum())
}

/// Grid version: both densities are read as node atoms, giving `min_c Δx Σ |F_a − F_b − c|`.
pub fn wasserstein1_periodic(rho_a: &GridFn1D, rho_b: &GridFn1D) -> Result<f64> {
    crate::geometry::check_len(rho_a.m(), rho_b.m())?;
    wasserstein1_circle(&CircleMeasure::from_grid(rho_a), &CircleMeasure::from_grid(rho_b))
}

/// Test functions `cos(2πk x + φ)/(1 + 2πk)` with `Lip ≤ 1`, `sup ≤ 1`.
#[derive(Debug, Clone)]
pub struct FourierFeatures {
    pub freqs: Vec<f64>,
    pub phases: Vec<f64>,
}

impl FourierFeatures {
    pub fn new(count: usize, max_freq: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut freqs = vec![0.0];
        let mut phases = vec![0.0];
        for _ in 1..count {
            freqs.push(rng.random_range(1..=max_freq) as f64);
            phases.push(rng.random_range(0.0..2.0 * PI));
        }
        FourierFeatures { freqs, phases }
    }

    pub fn standard() -> Self {
        FourierFeatures::new(64, 16, 0x5eed)
    }

    fn eval(&self, k: usize, x: f64) -> f64 {
        let w = 2.0 * PI * self.freqs[k];
        (w * x + self.phases[k]).cos() / (1.0 + w)
    }
}

/// Dual bounded-Lipschitz distance restricted to the feature family:
/// `max_k |∫ g_k d(μ − ν)|` for signed measures given as atoms.
pub fn bounded_lipschitz(
    a: &CircleMeasure,
    b: &CircleMeasure,
    features: &FourierFeatures,
) -> f64 {
    (0..features.freqs.len())
        .map(|k| {
            let ia: f64 = a.points.iter().zip(&a.masses).map(|(&x, &w)| w * features.eval(k, x)).sum();
            let ib: f64 = b.points.iter().zip(&b.masses).map(|(&x, &w)| w * features.eval(k, x)).sum();
            (ia - ib).abs()
        })
        .fold(0.0, f64::max)
}

/// Exponential fit `value ≈ A e^{−rate·t}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub amplitude: f64,
    /// Root-mean-square residual of the log-linear fit.
    pub residual: f64,
    pub points: usize,
}

/// Log-linear least squares over the samples with `t ∈ [t_lo, t_hi]`.
pub fn fit_decay(series: &[(f64, f64)], t_lo: f64, t_hi: f64) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|&(t, _)| t >= t_lo && t <= t_hi)
        .collect();
    if pts.len() < 2 {
        return Err(TcsError::Fit(format!(
            "need at least two samples in [{t_lo}, {t_hi}], found {}",
            pts.len()
        )));
    }
    if let Some(&(t, v)) = pts.iter().find(|&&(_, v)| !(v > 0.0)) {
        return Err(TcsError::Fit(format!("non-positive value {v} at t = {t}")));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stl: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - ml)).sum();
    if stt <= 0.0 {
        return Err(TcsError::Fit("all samples share the same time".into()));
    }
    let slope = stl / stt;
    if slope >= 0.0 {
        return Err(TcsError::Fit(format!(
            "series does not decay (log-slope {slope:e})"
        )));
    }
    let icept = ml - slope * mt;
    let residual = (pts
        .iter()
        .map(|p| (p.1.ln() - (icept + slope * p.0)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit {
        rate: -slope,
        amplitude: icept.exp(),
        residual,
        points: pts.len(),
    })
}

/// Fit window `[2√ε, min(1, 20 ε θ_M²)]` that skips the initial layer.
pub fn decay_window(eps: f64, theta_max: f64) -> (f64, f64) {
    (2.0 * eps.sqrt(), (20.0 * eps * theta_max * theta_max).min(1.0))
}

/// Whether `values` strictly decreases along the list.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

/// Distances between a particle cloud and a grid solution at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDistance {
    pub t: f64,
    /// `W₁(ρ_ε, ρ)`
    pub density_w1: f64,
    /// Bounded-Lipschitz distance of `j_ε` to `ρu`.
    pub momentum_bl: f64,
}

/// Compares atoms `(x, v, weight)` with the grid pair `(ρ, u)`.
///
/// The grid density is spread uniformly over each cell before the transport
/// distance is taken, so a perfect sampler of the cell-constant density sits
/// at distance zero.
pub fn cloud_to_grid(
    t: f64,
    atoms: &[(f64, f64, f64)],
    rho: &GridFn1D,
    u: &GridFn1D,
    features: &FourierFeatures,
) -> Result<SnapshotDistance> {
    let m = rho.m();
    if u.m() != m {
        return Err(TcsError::Dimension { expected: m, got: u.m() });
    }
    let xs: Vec<f64> = atoms.iter().map(|a| a.0).collect();
    let dens = CircleMeasure::new(xs.clone(), atoms.iter().map(|a| a.2).collect());
    let w1 = wasserstein1_circle(&dens, &CircleMeasure::from_grid_cells(rho, 8))?;
    let ja = CircleMeasure::new(xs, atoms.iter().map(|a| a.2 * a.1).collect());
    let jm = CircleMeasure::new(
        (0..m).map(|i| rho.node(i)).collect(),
        (0..m).map(|i| rho.values[i] * u.values[i] * rho.dx()).collect(),
    );
    Ok(SnapshotDistance {
        t,
        density_w1: w1,
        momentum_bl: bounded_lipschitz(&ja, &jm, features),
    })
}

/// Distances of a family of kinetic runs to their limit, one row per `ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitComparison {
    pub epsilons: Vec<f64>,
    pub snapshots: Vec<f64>,
    /// `distances[k][s]` for `epsilons[k]` at `snapshots[s]`.
    pub distances: Vec<Vec<SnapshotDistance>>,
    /// Per snapshot: both distances strictly decrease as `ε` decreases.
    pub monotone: Vec<bool>,
    pub rate_fits: Vec<Option<RateFit>>,
}

impl LimitComparison {
    /// Assembles the table; `epsilons` must be listed in decreasing order.
    pub fn new(
        epsilons: Vec<f64>,
        snapshots: Vec<f64>,
        distances: Vec<Vec<SnapshotDistance>>,
        rate_fits: Vec<Option<RateFit>>,
    ) -> Result<Self> {
        if distances.len() != epsilons.len() || distances.iter().any(|d| d.len() != snapshots.len()) {
            return Err(TcsError::Config("distance table does not match the sweep layout".into()));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(TcsError::Config("epsilon list must be strictly decreasing".into()));
        }
        let monotone = (0..snapshots.len())
            .map(|s| {
                let w: Vec<f64> = distances.iter().map(|d| d[s].density_w1).collect();
                let b: Vec<f64> = distances.iter().map(|d| d[s].momentum_bl).collect();
                strictly_decreasing(&w) && strictly_decreasing(&b)
            })
            .collect();
        Ok(LimitComparison {
            epsilons,
            snapshots,
            distances,
            monotone,
            rate_fits,
        })
    }

    pub fn all_monotone(&self) -> bool {
        self.monotone.iter().all(|&m| m)
    }

    /// Plain-text table for terminals.
    pub fn summary(&self) -> String {
        let mut s = String::from("eps        t      W1(rho)     BL(j)\n");
        for (e, row) in self.epsilons.iter().zip(&self.distances) {
            for d in row {
                s += &format!("{e:<10} {:<6} {:.4e}  {:.4e}\n", d.t, d.density_w1, d.momentum_bl);
            }
        }
        for (t, m) in self.snapshots.iter().zip(&self.monotone) {
            s += &format!("t = {t}: {}\n", if *m { "monotone" } else { "NOT monotone" });
        }
        s
    }
}

/// Constants entering the second-moment budget of a kinetic run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetInputs {
    pub eps: f64,
    /// `‖φ‖_∞`
    pub phi_sup: f64,
    /// `‖∇W‖_∞`
    pub grad_w_sup: f64,
    /// `(θ_m, θ_M)` from the confinement envelope.
    pub theta_m: f64,
    pub theta_big_m: f64,
    /// `D_θ(0)`
    pub d_theta0: f64,
}

impl BudgetInputs {
    /// `δ = 1/θ_M − ‖φ‖_∞ D_θ(0)/θ_m²`.
    pub fn delta(&self) -> f64 {
        1.0 / self.theta_big_m - self.phi_sup * self.d_theta0 / (self.theta_m * self.theta_m)
    }
}

/// Both sides of the `k = 2` velocity-moment inequality and of its
/// integrated corollary, evaluated on a recorded run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentBudget {
    pub delta: f64,
    /// `∫ M₂ dt`
    pub m2_integral: f64,
    /// `∫ ∬ φ |v − v*|² f f dt`
    pub dissipation_integral: f64,
    /// `2δ ∫M₂ + (1/θ_M) ∫Diss`
    pub lemma_lhs: f64,
    /// `ε M₂(0) + 2 ∫ g(t) M₁(t) dt` with `g = |u^∞/θ^∞| + ‖∇W‖_∞`
    pub lemma_rhs: f64,
    /// `‖g‖_{L²(0,T)}`
    pub g0: f64,
    /// `δ ∫M₂ + (1/θ_M) ∫Diss`
    pub corollary_lhs: f64,
    /// `ε M₂(0) + G₀²/δ`
    pub corollary_rhs: f64,
}

impl MomentBudget {
    pub fn holds(&self) -> bool {
        self.lemma_lhs <= self.lemma_rhs && self.corollary_lhs <= self.corollary_rhs
    }
}

fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    ts.windows(2)
        .zip(ys.windows(2))
        .map(|(t, y)| 0.5 * (t[1] - t[0]) * (y[0] + y[1]))
        .sum()
}

/// Evaluates the second-moment budget from per-step records.
///
/// `ratio(t)` returns `u^∞(t)/θ^∞(t)` (zero when the background is off).
pub fn moment_budget(
    series: &[KineticRecord],
    ratio: impl Fn(f64) -> f64,
    inputs: &BudgetInputs,
) -> Result<MomentBudget> {
    let delta = inputs.delta();
    if !(delta > 0.0) {
        return Err(TcsError::Config(format!(
            "moment budget needs a positive coercivity constant, got {delta:e}"
        )));
    }
    if series.is_empty() {
        return Err(TcsError::Config("moment budget needs at least one record".into()));
    }
    let ts: Vec<f64> = series.iter().map(|r| r.t).collect();
    let g: Vec<f64> = ts.iter().map(|&t| ratio(t).abs() + inputs.grad_w_sup).collect();
    let m2 = trapezoid(&ts, &series.iter().map(|r| r.m2).collect::<Vec<_>>());
    let dis = trapezoid(&ts, &series.iter().map(|r| r.dissipation).collect::<Vec<_>>());
    let forcing = trapezoid(&ts, &series.iter().zip(&g).map(|(r, g)| g * r.m1).collect::<Vec<_>>());
    let g0 = trapezoid(&ts, &g.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt();
    let init = inputs.eps * series[0].m2;
    Ok(MomentBudget {
        delta,
        m2_integral: m2,
        dissipation_integral: dis,
        lemma_lhs: 2.0 * delta * m2 + dis / inputs.theta_big_m,
        lemma_rhs: init + 2.0 * forcing,
        g0,
        corollary_lhs: delta * m2 + dis / inputs.theta_big_m,
        corollary_rhs: init + g0 * g0 / delta,
    })
}

/// Velocity-support bound `v_M = v_M⁰ + C₂/C₁` of the weak regime, with
/// `C₁ = 1/θ_M − ‖φ‖_∞ (θ_M⁰ − θ_m⁰)/θ_m²` and `C₂ = sup |u^∞/θ^∞| + ‖∇W‖_∞`.
pub fn weak_velocity_bound(v_m0: f64, inputs: &BudgetInputs, sup_ratio: f64) -> Result<f64> {
    let c1 = inputs.delta();
    if !(c1 > 0.0) {
        return Err(TcsError::Config(format!(
            "velocity bound needs the compatibility condition, C1 = {c1:e}"
        )));
    }
    Ok(v_m0 + (sup_ratio.abs() + inputs.grad_w_sup) / c1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use proptest::prelude::*;

    fn delta(m: usize, i: usize) -> GridFn1D {
        let mut g = GridFn1D::zeros(m);
        g.values[i] = m as f64;
        g
    }

    /// Equal-weight matching on the circle: best cyclic assignment of sorted atoms.
    fn matching_oracle(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let n = a.len();
        (0..n)
            .map(|s| {
                (0..n)
                    .map(|i| {
                        let d = (a[i] - b[(i + s) % n]).rem_euclid(1.0);
                        d.min(1.0 - d)
                    })
                    .sum::<f64>()
                    / n as f64
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn order_parameter_examples() {
        assert!(order_parameter(&GridFn1D::constant(64, 1.0)) < 1e-14);
        assert!((order_parameter(&delta(64, 5)) - 1.0).abs() < 1e-14);
        let rho = presets::limit_rho0_grid(4096);
        // wrapped Gaussian, variance 1/100, circular moment by fine quadrature
        let n = 1 << 16;
        let (mut c, mut z) = (0.0, 0.0);
        for k in 0..n {
            let x = k as f64 / n as f64;
            let w = presets::limit_rho0_unnormalized(x);
            c += (2.0 * PI * (x - 0.5)).cos() * w;
            z += w;
        }
        assert!((order_parameter(&rho) - c / z).abs() < 1e-10);
        assert!((order_parameter(&rho) - (-2.0 * PI * PI * 0.01f64).exp()).abs() < 1e-5);
    }

    #[test]
    fn transport_distance_examples() {
        let m = 100;
        let a = presets::limit_rho0_grid(m);
        assert_eq!(wasserstein1_periodic(&a, &a).unwrap(), 0.0);
        let d = wasserstein1_periodic(&delta(m, 10), &delta(m, 30)).unwrap();
        assert!((d - 0.2).abs() <= 1.0 / m as f64);
        let d = wasserstein1_periodic(&delta(m, 5), &delta(m, 85)).unwrap();
        assert!((d - 0.2).abs() <= 1.0 / m as f64);
        assert!(wasserstein1_periodic(&GridFn1D::constant(m, 2.0), &a).is_err());
    }

    #[test]
    fn decay_fit_examples() {
        let s: Vec<(f64, f64)> = (0..50).map(|k| (k as f64 * 0.1, (-3.0 * k as f64 * 0.1).exp())).collect();
        let f = fit_decay(&s, 0.0, 5.0).unwrap();
        assert!((f.rate - 3.0).abs() < 1e-8);
        assert!(f.residual < 1e-10);
        let flat: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 1.0)).collect();
        assert!(fit_decay(&flat, 0.0, 10.0).is_err());
        assert!(fit_decay(&[(0.0, 1.0), (1.0, 0.0)], 0.0, 1.0).is_err());
    }

    #[test]
    fn bl_distance_of_identical_measures_is_zero() {
        let f = FourierFeatures::standard();
        let a = CircleMeasure::new(vec![0.1, 0.7], vec![0.5, -0.2]);
        assert_eq!(bounded_lipschitz(&a, &a, &f), 0.0);
        assert_eq!(f.freqs.len(), 64);
    }

    fn record(t: f64, m1: f64, m2: f64, dissipation: f64) -> KineticRecord {
        KineticRecord {
            t,
            d_theta: 0.0,
            d_v: 0.0,
            theta_min: 1.0,
            theta_max: 1.0,
            theta_mean: 1.0,
            r_v: 0.0,
            m1,
            m2,
            dissipation,
            theta_inf: 1.0,
        }
    }

    #[test]
    fn moment_budget_by_hand() {
        // M₁ = M₂ = 1, no dissipation, u^∞/θ^∞ = 1/2 on [0, 1]
        let series: Vec<_> = (0..=10).map(|k| record(k as f64 / 10.0, 1.0, 1.0, 0.0)).collect();
        let inputs = BudgetInputs {
            eps: 0.1,
            phi_sup: 1.0,
            grad_w_sup: 0.0,
            theta_m: 1.0,
            theta_big_m: 2.0,
            d_theta0: 0.0,
        };
        let b = moment_budget(&series, |_| 0.5, &inputs).unwrap();
        assert!((b.delta - 0.5).abs() < 1e-15);
        assert!((b.m2_integral - 1.0).abs() < 1e-14);
        assert!((b.g0 - 0.5).abs() < 1e-14);
        assert!((b.lemma_lhs - 1.0).abs() < 1e-14);
        assert!((b.lemma_rhs - 1.1).abs() < 1e-14);
        assert!((b.corollary_lhs - 0.5).abs() < 1e-14);
        assert!((b.corollary_rhs - 0.6).abs() < 1e-14);
        assert!(b.holds());
        let bad = BudgetInputs { d_theta0: 1.0, ..inputs };
        assert!(moment_budget(&series, |_| 0.5, &bad).is_err());
    }

    #[test]
    fn weak_velocity_bound_by_hand() {
        let inputs = BudgetInputs {
            eps: 0.1,
            phi_sup: 1.0,
            grad_w_sup: 0.25,
            theta_m: 1.0,
            theta_big_m: 2.0,
            d_theta0: 0.25,
        };
        // C₁ = 1/2 − 1/4 = 1/4, C₂ = 1/2 + 1/4
        let v = weak_velocity_bound(1.0, &inputs, -0.5).unwrap();
        assert!((v - 4.0).abs() < 1e-14);
    }

    #[test]
    fn limit_comparison_flags_each_snapshot() {
        let d = |w: f64, b: f64| SnapshotDistance { t: 0.0, density_w1: w, momentum_bl: b };
        let c = LimitComparison::new(
            vec![0.2, 0.1],
            vec![0.5, 1.0],
            vec![vec![d(0.3, 0.3), d(0.3, 0.3)], vec![d(0.2, 0.1), d(0.2, 0.4)]],
            vec![None, None],
        )
        .unwrap();
        assert_eq!(c.monotone, vec![true, false]);
        assert!(!c.all_monotone());
        let single = LimitComparison::new(vec![0.2], vec![1.0], vec![vec![d(0.3, 0.3)]], vec![None]).unwrap();
        assert!(single.all_monotone());
        assert!(LimitComparison::new(vec![0.1, 0.2], vec![], vec![vec![], vec![]], vec![]).is_err());
    }

    #[test]
    fn sampled_grid_is_close_to_itself() {
        let rho = presets::limit_rho0_grid(64);
        let u = GridFn1D::constant(64, 0.5);
        // one atom per cell midpoint of a 4x refinement
        let fine = CircleMeasure::from_grid_cells(&rho, 4);
        let atoms: Vec<_> = fine.points.iter().zip(&fine.masses).map(|(&x, &w)| (x, 0.5, w)).collect();
        let d = cloud_to_grid(0.0, &atoms, &rho, &u, &FourierFeatures::standard()).unwrap();
        assert!(d.density_w1 < 1.0 / 64.0);
        assert!(d.momentum_bl < 1e-3);
    }

    proptest! {
        #[test]
        fn circle_distance_matches_matching(
            a in proptest::collection::vec(0.0f64..1.0, 7),
            b in proptest::collection::vec(0.0f64..1.0, 7),
        ) {
            let d = wasserstein1_circle(&CircleMeasure::empirical(&a), &CircleMeasure::empirical(&b)).unwrap();
            prop_assert!((d - matching_oracle(&a, &b)).abs() < 1e-10);
        }

        #[test]
        fn metric_axioms(
            a in proptest::collection::vec(0.01f64..1.0, 32),
            b in proptest::collection::vec(0.01f64..1.0, 32),
            c in proptest::collection::vec(0.01f64..1.0, 32),
        ) {
            let norm = |v: Vec<f64>| {
                let g = GridFn1D::new(v);
                let z = g.integral();
                g.map(|x| x / z)
            };
            let (a, b, c) = (norm(a), norm(b), norm(c));
            let ab = wasserstein1_periodic(&a, &b).unwrap();
            let ba = wasserstein1_periodic(&b, &a).unwrap();
            let bc = wasserstein1_periodic(&b, &c).unwrap();
            let ac = wasserstein1_periodic(&a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-15);
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn order_parameter_rotation_invariant(
            v in proptest::collection::vec(0.0f64..1.0, 64),
            k in 0usize..64,
        ) {
            let g = GridFn1D::new(v);
            let z = g.integral();
            prop_assume!(z > 1e-3);
            let g = g.map(|x| x / z);
            prop_assert!((order_parameter(&g) - order_parameter(&g.rotate(k))).abs() < 1e-13);
        }
    }
}
