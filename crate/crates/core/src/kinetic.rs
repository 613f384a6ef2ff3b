//! Scaled kinetic equations solved along characteristics of a weighted particle cloud.
//!
//! Each particle carries `(x, v, θ, w)` with `Σ w = 1`. Along characteristics
//!
//! ```text
//! dv/dt = (1/ε) [ Σ_j w_j φ(x−x_j)(v_j/θ_j − v/θ) − Σ_j w_j ∇W(x−x_j) + u^∞/θ^∞ − v/θ ]
//! dθ/dt = (1/ε) Σ_j w_j ζ(x−x_j)(1/θ − 1/θ_j) + κ_r (1/θ − 1/θ^∞)
//! ```
//!
//! with `κ_r = 1/ε` under strong relaxation and `κ_r = 1` under weak relaxation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, TcsError};
use crate::fluid::BackgroundSource;
use crate::geometry::{displacement, torus_dist, wrap, AggregationPotential, GridFn1D, InfluenceFn, TorusPoint};
use crate::particle::{deposit, AgentRate, MIN_DT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relaxation {
    Strong,
    Weak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Regular,
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRegime {
    pub relaxation: Relaxation,
    pub kernels: KernelKind,
    pub eps: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Exponent of the scaled Cucker–Dong potential, if one replaces `W`.
    pub lambda3: Option<f64>,
}

impl ScalingRegime {
    pub fn new(
        relaxation: Relaxation,
        kernels: KernelKind,
        eps: f64,
        lambda1: f64,
        lambda2: f64,
        lambda3: Option<f64>,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(TcsError::Config(format!("epsilon must be positive, got {eps}")));
        }
        for (name, l) in [("lambda1", lambda1), ("lambda2", lambda2)] {
            if !(l > 0.0 && l.is_finite()) {
                return Err(TcsError::Config(format!("{name} must be positive, got {l}")));
            }
        }
        if kernels == KernelKind::Singular && lambda1 > 1.0 {
            return Err(TcsError::Config(format!(
                "singular kernels need lambda1 in (0, 1], got {lambda1}"
            )));
        }
        if let Some(l3) = lambda3 {
            if (l3 - 0.5 * lambda1).abs() > 1e-12 {
                return Err(TcsError::Config(format!(
                    "scaled potential needs lambda3 = lambda1/2 = {}, got {l3}",
                    0.5 * lambda1
                )));
            }
        }
        Ok(ScalingRegime {
            relaxation,
            kernels,
            eps,
            lambda1,
            lambda2,
            lambda3,
        })
    }

    /// Regular kernels with `λ₁ = λ₂ = λ`.
    pub fn regular(relaxation: Relaxation, eps: f64, lambda: f64) -> Result<Self> {
        ScalingRegime::new(relaxation, KernelKind::Regular, eps, lambda, lambda, None)
    }

    pub fn phi(&self) -> InfluenceFn {
        match self.kernels {
            KernelKind::Regular => InfluenceFn::Regular { lambda: self.lambda1 },
            KernelKind::Singular => InfluenceFn::Singular {
                lambda: self.lambda1,
                eps: self.eps,
            },
        }
    }

    pub fn zeta(&self) -> InfluenceFn {
        match self.kernels {
            KernelKind::Regular => InfluenceFn::Regular { lambda: self.lambda2 },
            KernelKind::Singular => InfluenceFn::Singular {
                lambda: self.lambda2,
                eps: self.eps,
            },
        }
    }

    /// Potential actually used: the scaled Cucker–Dong one when `λ₃` is set.
    pub fn potential(&self, base: AggregationPotential) -> AggregationPotential {
        match self.lambda3 {
            Some(lambda3) => AggregationPotential::CuckerDongScaled {
                lambda3,
                eps: self.eps,
            },
            None => base,
        }
    }

    /// Factor in front of the background relaxation of `θ`.
    pub fn relaxation_factor(&self) -> f64 {
        match self.relaxation {
            Relaxation::Strong => 1.0 / self.eps,
            Relaxation::Weak => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub x: f64,
    pub v: f64,
    pub theta: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct KineticCloud {
    pub particles: Vec<Particle>,
    pub regime: ScalingRegime,
    pub potential: AggregationPotential,
}

impl KineticCloud {
    /// `base_potential` is replaced by the scaled Cucker–Dong potential when the regime sets `λ₃`.
    pub fn new(
        particles: Vec<Particle>,
        regime: ScalingRegime,
        base_potential: AggregationPotential,
    ) -> Result<Self> {
        if particles.is_empty() {
            return Err(TcsError::Config("empty particle cloud".into()));
        }
        let mass: f64 = particles.iter().map(|p| p.weight).sum();
        if (mass - 1.0).abs() > 1e-12 || particles.iter().any(|p| !(p.weight > 0.0)) {
            return Err(TcsError::Normalization { mass });
        }
        check_theta(&particles)?;
        Ok(KineticCloud {
            particles: particles
                .into_iter()
                .map(|p| Particle { x: wrap(p.x), ..p })
                .collect(),
            regime,
            potential: regime.potential(base_potential),
        })
    }

    pub fn total_weight(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn mean_theta(&self) -> f64 {
        self.particles.iter().map(|p| p.weight * p.theta).sum()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.x).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }
}

fn check_theta(particles: &[Particle]) -> Result<()> {
    match particles.iter().position(|p| !(p.theta > 0.0)) {
        Some(index) => Err(TcsError::Domain {
            index,
            value: particles[index].theta,
        }),
        None => Ok(()),
    }
}

/// Weighted pairwise sums over the cloud, self-interaction excluded.
#[derive(Debug, Clone)]
struct PairSums {
    /// `Σ w φ`
    s_phi: Vec<f64>,
    /// `Σ w φ v/θ`
    p_phi: Vec<f64>,
    /// `Σ w φ v`
    pv_phi: Vec<f64>,
    /// `Σ w ζ`
    s_zeta: Vec<f64>,
    /// `Σ w ζ / θ`
    q_zeta: Vec<f64>,
    /// `−Σ w ∇W`
    h: Vec<f64>,
}

fn pair_sums(ps: &[Particle], phi: &InfluenceFn, zeta: &InfluenceFn, pot: &AggregationPotential) -> PairSums {
    let n = ps.len();
    let mut s = PairSums {
        s_phi: vec![0.0; n],
        p_phi: vec![0.0; n],
        pv_phi: vec![0.0; n],
        s_zeta: vec![0.0; n],
        q_zeta: vec![0.0; n],
        h: vec![0.0; n],
    };
    let same = phi == zeta;
    let with_w = !pot.is_zero();
    let vt: Vec<f64> = ps.iter().map(|p| p.v / p.theta).collect();
    let it: Vec<f64> = ps.iter().map(|p| 1.0 / p.theta).collect();
    for i in 0..n {
        let (xi, wi) = (ps[i].x, ps[i].weight);
        let (mut a0, mut a1, mut a2, mut a3, mut a4, mut a5) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for j in i + 1..n {
            let wj = ps[j].weight;
            let d = displacement(xi, ps[j].x);
            let r = d.abs();
            let f = phi.eval_dist(r);
            let z = if same { f } else { zeta.eval_dist(r) };
            a0 += wj * f;
            a1 += wj * f * vt[j];
            a2 += wj * f * ps[j].v;
            a3 += wj * z;
            a4 += wj * z * it[j];
            s.s_phi[j] += wi * f;
            s.p_phi[j] += wi * f * vt[i];
            s.pv_phi[j] += wi * f * ps[i].v;
            s.s_zeta[j] += wi * z;
            s.q_zeta[j] += wi * z * it[i];
            if with_w {
                let g = pot.grad(d);
                a5 -= wj * g;
                s.h[j] += wi * g;
            }
        }
        s.s_phi[i] += a0;
        s.p_phi[i] += a1;
        s.pv_phi[i] += a2;
        s.s_zeta[i] += a3;
        s.q_zeta[i] += a4;
        s.h[i] += a5;
    }
    s
}

/// Background data entering `F_c` and `G_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundTerms {
    /// `u^∞/θ^∞`
    pub ratio: f64,
    pub theta_inf: f64,
}

impl BackgroundTerms {
    pub fn at(src: &BackgroundSource, t: f64) -> Self {
        BackgroundTerms {
            ratio: src.ratio_at(t),
            theta_inf: src.theta_inf_at(t),
        }
    }
}

/// Per-particle coefficients of `dv/dt = c − a v`, `dθ/dt = A/θ − B`.
#[derive(Debug, Clone)]
struct Coeffs {
    a: Vec<f64>,
    c: Vec<f64>,
    big_a: Vec<f64>,
    big_b: Vec<f64>,
}

fn coefficients(
    ps: &[Particle],
    sums: &PairSums,
    regime: &ScalingRegime,
    bg: Option<BackgroundTerms>,
) -> Coeffs {
    let n = ps.len();
    let inv_eps = 1.0 / regime.eps;
    let kr = regime.relaxation_factor();
    let (kc, ratio, inv_inf) = match bg {
        Some(b) => (1.0, b.ratio, 1.0 / b.theta_inf),
        None => (0.0, 0.0, 0.0),
    };
    let mut out = Coeffs {
        a: vec![0.0; n],
        c: vec![0.0; n],
        big_a: vec![0.0; n],
        big_b: vec![0.0; n],
    };
    for i in 0..n {
        out.a[i] = inv_eps * (sums.s_phi[i] + kc) / ps[i].theta;
        out.c[i] = inv_eps * (sums.p_phi[i] + sums.h[i] + kc * ratio);
        out.big_a[i] = inv_eps * sums.s_zeta[i] + kr * kc;
        out.big_b[i] = inv_eps * sums.q_zeta[i] + kr * kc * inv_inf;
    }
    out
}

/// Characteristic velocities `(dx, dv, dθ)` of every particle at time `t`.
///
/// `bg = None` switches off the background terms `F_c` and `G_c`.
pub fn kinetic_forces(cloud: &KineticCloud, bg: Option<&BackgroundSource>, t: f64) -> Result<Vec<AgentRate>> {
    check_theta(&cloud.particles)?;
    let sums = pair_sums(&cloud.particles, &cloud.regime.phi(), &cloud.regime.zeta(), &cloud.potential);
    let k = coefficients(&cloud.particles, &sums, &cloud.regime, bg.map(|b| BackgroundTerms::at(b, t)));
    Ok(cloud
        .particles
        .iter()
        .enumerate()
        .map(|(i, p)| AgentRate {
            dx: p.v,
            dv: k.c[i] - k.a[i] * p.v,
            dtheta: k.big_a[i] / p.theta - k.big_b[i],
        })
        .collect())
}

/// Exact solution at time `h` of `θ' = A/θ − B` with `A, B > 0`.
///
/// With `θ* = A/B` and `z = θ − θ*`, the flow satisfies
/// `θ* ln(z/z₀) + z − z₀ = −B h`; the ratio `r = z/z₀ ∈ (0, 1]` is found by
/// safeguarded Newton on that relation.
pub fn theta_flow(theta0: f64, big_a: f64, big_b: f64, h: f64) -> f64 {
    if big_a <= 0.0 || big_b <= 0.0 || h <= 0.0 {
        return theta0 + h * (big_a / theta0 - big_b);
    }
    let star = big_a / big_b;
    let z0 = theta0 - star;
    if z0.abs() <= 1e-15 * star {
        return theta0;
    }
    let g = |r: f64| star * r.ln() + z0 * (r - 1.0) + big_b * h;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    // linearized rate A/(θ₀θ*) = B/θ₀
    let mut r = (-big_b * h / theta0).exp().clamp(1e-300, 1.0);
    for _ in 0..100 {
        let gr = g(r);
        if gr > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let step = gr / (star / r + z0);
        let mut next = r - step;
        if !(next > lo && next < hi) {
            next = if lo > 0.0 { 0.5 * (lo + hi) } else { (hi * 1e-3).max(0.5 * hi * hi) };
        }
        if (next - r).abs() <= 1e-16 * r.max(1e-300) {
            r = next;
            break;
        }
        r = next;
    }
    star + z0 * r
}

/// `∫₀^h e^{−a s} ds` and `∫₀^h (1 − e^{−a s})/a ds` for `a ≥ 0`.
fn exp_integrals(a: f64, h: f64) -> (f64, f64) {
    let z = a * h;
    if z < 1e-6 {
        (h * (1.0 - z / 2.0 + z * z / 6.0), h * h * (0.5 - z / 6.0 + z * z / 24.0))
    } else {
        let e = (-z).exp_m1();
        (-e / a, (z + e) / (a * a))
    }
}

fn flow(ps: &[Particle], k: &Coeffs, h: f64) -> Vec<Particle> {
    ps.iter()
        .enumerate()
        .map(|(i, p)| {
            let a = k.a[i];
            let e = (-a * h).exp();
            let (i1, i2) = exp_integrals(a, h);
            // v(s) = v₀ e^{−as} + c (1 − e^{−as})/a
            let v = p.v * e + k.c[i] * i1;
            let x = p.x + p.v * i1 + k.c[i] * i2;
            Particle {
                x: wrap(x),
                v,
                theta: theta_flow(p.theta, k.big_a[i], k.big_b[i], h),
                weight: p.weight,
            }
        })
        .collect()
}

fn average(k0: &Coeffs, k1: &Coeffs) -> Coeffs {
    let avg = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    Coeffs {
        a: avg(&k0.a, &k1.a),
        c: avg(&k0.c, &k1.c),
        big_a: avg(&k0.big_a, &k1.big_a),
        big_b: avg(&k0.big_b, &k1.big_b),
    }
}

/// Support extents of a cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diameters {
    pub d_x: f64,
    pub d_v: f64,
    pub d_theta: f64,
    pub r_x: f64,
    pub r_v: f64,
}

fn spread(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)))
}

/// Position diameter on the circle: `max_{i,j} |x_i − x_j|_𝕋`.
fn circle_diameter(xs: &[f64]) -> f64 {
    let mut s: Vec<f64> = xs.iter().map(|&x| wrap(x)).collect();
    s.sort_by(f64::total_cmp);
    // the farthest point from x is the one nearest to its antipode
    let nearest = |y: f64| {
        let k = s.partition_point(|&p| p < y);
        let a = s[k % s.len()];
        let b = s[(k + s.len() - 1) % s.len()];
        torus_dist(TorusPoint::new(a), TorusPoint::new(y)).min(torus_dist(TorusPoint::new(b), TorusPoint::new(y)))
    };
    s.iter()
        .map(|&x| 0.5 - nearest(wrap(x + 0.5)))
        .fold(0.0, f64::max)
}

pub fn support_diameters(cloud: &KineticCloud) -> Diameters {
    let ps = &cloud.particles;
    let (vl, vh) = spread(ps.iter().map(|p| p.v));
    let (tl, th) = spread(ps.iter().map(|p| p.theta));
    Diameters {
        d_x: circle_diameter(&cloud.positions()),
        d_v: vh - vl,
        d_theta: th - tl,
        r_x: ps
            .iter()
            .map(|p| torus_dist(TorusPoint::new(p.x), TorusPoint::default()))
            .fold(0.0, f64::max),
        r_v: ps.iter().map(|p| p.v.abs()).fold(0.0, f64::max),
    }
}

/// Grid moments of the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub rho: GridFn1D,
    /// `∫ v f`
    pub j: GridFn1D,
    /// `∫ θ f`
    pub h: GridFn1D,
    /// `∫ v/θ f`
    pub a: GridFn1D,
    /// `∫ 1/θ f`
    pub b: GridFn1D,
    /// `∫ v² f`
    pub s_v: GridFn1D,
    /// `∫ vθ f`
    pub s_theta: GridFn1D,
}

pub fn moments_on_grid(cloud: &KineticCloud, m: usize, bandwidth: f64) -> Result<MomentSet> {
    if !(bandwidth > 0.0) {
        return Err(TcsError::Config(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let ps = &cloud.particles;
    let mut f = deposit(&cloud.positions(), &cloud.weights(), m, bandwidth, 7, |i| {
        let p = ps[i];
        vec![1.0, p.v, p.theta, p.v / p.theta, 1.0 / p.theta, p.v * p.v, p.v * p.theta]
    })
    .into_iter();
    let mut next = || f.next().unwrap();
    Ok(MomentSet {
        rho: next(),
        j: next(),
        h: next(),
        a: next(),
        b: next(),
        s_v: next(),
        s_theta: next(),
    })
}

/// Scalars recorded at every time level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticRecord {
    pub t: f64,
    pub d_theta: f64,
    pub d_v: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_mean: f64,
    pub r_v: f64,
    /// `Σ w |v|`
    pub m1: f64,
    /// `Σ w v²`
    pub m2: f64,
    /// `Σ_i Σ_j w_i w_j φ_ij (v_i − v_j)²`
    pub dissipation: f64,
    /// `θ^∞(t)`, NaN without background.
    pub theta_inf: f64,
}

#[derive(Debug, Clone)]
pub struct KineticSnapshot {
    pub t: f64,
    pub particles: Vec<Particle>,
    pub diameters: Diameters,
}

#[derive(Debug, Clone)]
pub struct KineticRun {
    pub series: Vec<KineticRecord>,
    pub snapshots: Vec<KineticSnapshot>,
    pub final_cloud: KineticCloud,
    pub dt: f64,
    pub steps: usize,
}

fn record(ps: &[Particle], sums: &PairSums, t: f64, bg: Option<BackgroundTerms>) -> KineticRecord {
    let (tl, th) = spread(ps.iter().map(|p| p.theta));
    let (vl, vh) = spread(ps.iter().map(|p| p.v));
    let mut dis = 0.0;
    for (i, p) in ps.iter().enumerate() {
        dis += p.weight * (p.v * p.v * sums.s_phi[i] - p.v * sums.pv_phi[i]);
    }
    KineticRecord {
        t,
        d_theta: th - tl,
        d_v: vh - vl,
        theta_min: tl,
        theta_max: th,
        theta_mean: ps.iter().map(|p| p.weight * p.theta).sum(),
        r_v: ps.iter().map(|p| p.v.abs()).fold(0.0, f64::max),
        m1: ps.iter().map(|p| p.weight * p.v.abs()).sum(),
        m2: ps.iter().map(|p| p.weight * p.v * p.v).sum(),
        dissipation: 2.0 * dis,
        theta_inf: bg.map_or(f64::NAN, |b| b.theta_inf),
    }
}

/// Step actually used: `min(dt_user, ε/4)`.
pub fn kinetic_dt(regime: &ScalingRegime, dt_user: f64) -> f64 {
    dt_user.min(0.25 * regime.eps)
}

/// Advances the cloud to `t_end`.
///
/// Over each step the coefficients of `dv/dt = c − a v` and `dθ/dt = A/θ − B`
/// are frozen and the resulting scalar equations are integrated exactly; the
/// coefficients are then re-evaluated at the predicted state and the step is
/// repeated with their average.
pub fn advance(
    cloud: &KineticCloud,
    bg: Option<&BackgroundSource>,
    dt_user: f64,
    t_end: f64,
    snapshot_times: &[f64],
) -> Result<KineticRun> {
    if !(dt_user > 0.0) {
        return Err(TcsError::Config(format!("time step must be positive, got {dt_user}")));
    }
    if let Some(b) = bg {
        if b.times.len() > 1 && b.t_end() + 1e-9 < t_end {
            return Err(TcsError::Config(format!(
                "background covers [0, {}] but the run needs [0, {t_end}]",
                b.t_end()
            )));
        }
    }
    check_theta(&cloud.particles)?;
    let regime = cloud.regime;
    let (phi, zeta, pot) = (regime.phi(), regime.zeta(), cloud.potential);
    let dt = kinetic_dt(&regime, dt_user);
    let mut marks: Vec<f64> = snapshot_times.iter().copied().filter(|&s| s >= 0.0 && s <= t_end + 1e-12).collect();
    marks.sort_by(f64::total_cmp);
    marks.dedup();

    let terms = |t: f64| bg.map(|b| BackgroundTerms::at(b, t));
    let mut ps = cloud.particles.clone();
    let mut t = 0.0;
    let mut run = KineticRun {
        series: vec![],
        snapshots: vec![],
        final_cloud: cloud.clone(),
        dt,
        steps: 0,
    };
    let mut next_snap = 0;
    let snapshot = |ps: &[Particle], t: f64| {
        let c = KineticCloud {
            particles: ps.to_vec(),
            ..cloud.clone()
        };
        KineticSnapshot {
            t,
            diameters: support_diameters(&c),
            particles: c.particles,
        }
    };
    loop {
        let sums = pair_sums(&ps, &phi, &zeta, &pot);
        run.series.push(record(&ps, &sums, t, terms(t)));
        while next_snap < marks.len() && (marks[next_snap] - t).abs() < 1e-9 {
            run.snapshots.push(snapshot(&ps, t));
            next_snap += 1;
        }
        if t >= t_end - 1e-12 {
            break;
        }
        let mut target = t_end;
        if next_snap < marks.len() {
            target = target.min(marks[next_snap]);
        }
        let h = if t + dt >= target - 1e-12 { target - t } else { dt };
        if h < MIN_DT {
            return Err(TcsError::Stiffness { t, min_dt: MIN_DT });
        }
        let k0 = coefficients(&ps, &sums, &regime, terms(t));
        let pred = flow(&ps, &k0, h);
        let k1 = coefficients(&pred, &pair_sums(&pred, &phi, &zeta, &pot), &regime, terms(t + h));
        let next = flow(&ps, &average(&k0, &k1), h);
        if let Some(i) = next
            .iter()
            .position(|p| !(p.v.is_finite() && p.theta.is_finite() && p.x.is_finite()))
        {
            return Err(TcsError::Instability {
                step: run.steps + 1,
                t: t + h,
                what: format!("non-finite state of particle {i}"),
            });
        }
        check_theta(&next)?;
        ps = next;
        t = if h < dt { target } else { t + h };
        run.steps += 1;
    }
    run.final_cloud = KineticCloud {
        particles: ps,
        ..cloud.clone()
    };
    Ok(run)
}

/// Initial cloud description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudSpec {
    pub n: usize,
    /// Standard deviation of velocities about the profile.
    pub sigma_v: f64,
    pub theta_min: f64,
    pub theta_max: f64,
    pub seed: u64,
}

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while k > 0 {
        f /= base as f64;
        r += f * (k % base) as f64;
        k /= base;
    }
    r
}

/// Equal-weight cloud from a grid density and a velocity profile.
///
/// Positions invert the cumulative distribution of `ρ⁰` read as a
/// piecewise-constant density on the cells around the nodes; velocities are
/// `u⁰(x) + σ_v Z` and `θ` is uniform on `[θ_min, θ_max]`. The three uniforms
/// come from a randomly shifted Halton sequence (bases 2, 3, 5).
pub fn sample_cloud(spec: &CloudSpec, rho0: &GridFn1D, u0: impl Fn(f64) -> f64) -> Result<Vec<Particle>> {
    if spec.n == 0 {
        return Err(TcsError::Config("cloud needs at least one particle".into()));
    }
    if !(spec.sigma_v >= 0.0) {
        return Err(TcsError::Config(format!("sigma_v must be non-negative, got {}", spec.sigma_v)));
    }
    if !(spec.theta_min > 0.0 && spec.theta_max >= spec.theta_min) {
        return Err(TcsError::Config(format!(
            "theta range [{}, {}] must be positive and ordered",
            spec.theta_min, spec.theta_max
        )));
    }
    let mass = rho0.integral();
    if (mass - 1.0).abs() > 1e-9 || rho0.min() < 0.0 {
        return Err(TcsError::Normalization { mass });
    }
    let m = rho0.m();
    let dx = rho0.dx();
    let mut cdf = Vec::with_capacity(m + 1);
    cdf.push(0.0);
    for v in &rho0.values {
        cdf.push(cdf.last().unwrap() + v * dx);
    }
    let total = cdf[m];
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let shift: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    let normal = Normal::standard();
    let w = 1.0 / spec.n as f64;
    Ok((0..spec.n as u64)
        .map(|k| {
            let q = |b: u64, s: f64| (radical_inverse(k + 1, b) + s).fract();
            let qx = q(2, shift[0]) * total;
            let cell = cdf.partition_point(|&c| c <= qx).clamp(1, m) - 1;
            let frac = if rho0.values[cell] > 0.0 {
                ((qx - cdf[cell]) / (rho0.values[cell] * dx)).clamp(0.0, 1.0)
            } else {
                0.5
            };
            let x = wrap(rho0.node(cell) + (frac - 0.5) * dx);
            let qv = q(3, shift[1]).clamp(1e-12, 1.0 - 1e-12);
            let v = u0(x) + spec.sigma_v * normal.inverse_cdf(qv);
            let theta = spec.theta_min + (spec.theta_max - spec.theta_min) * q(5, shift[2]);
            Particle { x, v, theta, weight: w }
        })
        .collect())
}

/// `(θ_m, θ_M) = (min{θ_m⁰, θ̄_m}, max{θ_M⁰, θ̄_M})`.
pub fn theta_envelope(theta0: (f64, f64), background: (f64, f64)) -> (f64, f64) {
    (theta0.0.min(background.0), theta0.1.max(background.1))
}

/// `min{θ_m⁰, θ̄_m}² / max{θ_M⁰, θ̄_M} − (θ_M⁰ − θ_m⁰)`; positive when the
/// initial spread of `θ` is compatible with the moment estimates.
pub fn compatibility_margin(theta0: (f64, f64), background: (f64, f64)) -> f64 {
    let (lo, hi) = theta_envelope(theta0, background);
    lo * lo / hi - (theta0.1 - theta0.0)
}

/// `θ_m²/θ_M − D_θ(0)/ε`; must be positive for singular kernels.
pub fn singular_concentration_margin(theta0: (f64, f64), background: (f64, f64), eps: f64) -> f64 {
    let (lo, hi) = theta_envelope(theta0, background);
    lo * lo / hi - (theta0.1 - theta0.0) / eps
}
