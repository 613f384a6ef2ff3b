//! Torus arithmetic, influence functions, aggregation potentials and
//! periodic convolution on equispaced grids.

use std::ops::{Add, Neg, Sub};

use crate::error::{Result, TcsError};

/// Point of the unit circle, stored as its representative in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct TorusPoint(f64);

impl TorusPoint {
    pub fn new(a: f64) -> Self {
        TorusPoint(wrap(a))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Add for TorusPoint {
    type Output = TorusPoint;
    fn add(self, rhs: TorusPoint) -> TorusPoint {
        TorusPoint::new(self.0 + rhs.0)
    }
}

impl Neg for TorusPoint {
    type Output = TorusPoint;
    fn neg(self) -> TorusPoint {
        TorusPoint::new(1.0 - self.0)
    }
}

impl Sub for TorusPoint {
    type Output = TorusPoint;
    fn sub(self, rhs: TorusPoint) -> TorusPoint {
        self + (-rhs)
    }
}

/// Canonical representative in `[0, 1)`.
#[inline]
pub fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(1.0);
    // rem_euclid rounds tiny negatives up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Signed displacement `a - b + n` with `n` chosen so the result lies in `(-1/2, 1/2]`.
#[inline]
pub fn displacement(a: f64, b: f64) -> f64 {
    let d = a - b;
    d - (d - 0.5).ceil()
}

/// Geodesic distance on the circle, in `[0, 1/2]`.
#[inline]
pub fn torus_dist(x: TorusPoint, y: TorusPoint) -> f64 {
    displacement(x.0, y.0).abs()
}

/// Normalization constant `2^(2/λ) - 1` making `φ(1) = 1/2`.
pub fn c_lambda(lambda: f64) -> f64 {
    2f64.powf(2.0 / lambda) - 1.0
}

/// Radially symmetric communication weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InfluenceFn {
    /// `(1 + c_λ d²)^(-λ/2)`
    Regular { lambda: f64 },
    /// `(ε² + c_λ d²)^(-λ/2)`
    Singular { lambda: f64, eps: f64 },
    /// Constant weight, mostly for closed-form checks.
    Constant(f64),
}

impl InfluenceFn {
    pub fn regular(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(TcsError::Config(format!("lambda must be positive, got {lambda}")));
        }
        Ok(InfluenceFn::Regular { lambda })
    }

    pub fn singular(lambda: f64, eps: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(TcsError::Config(format!("lambda must be positive, got {lambda}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(TcsError::Config(format!(
                "singular kernel needs epsilon > 0, got {eps}"
            )));
        }
        Ok(InfluenceFn::Singular { lambda, eps })
    }

    /// Value at geodesic distance `r >= 0`.
    #[inline]
    pub fn eval_dist(&self, r: f64) -> f64 {
        match *self {
            InfluenceFn::Regular { lambda } if lambda == 1.0 => (1.0 + 3.0 * r * r).sqrt().recip(),
            InfluenceFn::Regular { lambda } => {
                (1.0 + c_lambda(lambda) * r * r).powf(-0.5 * lambda)
            }
            InfluenceFn::Singular { lambda, eps } => {
                (eps * eps + c_lambda(lambda) * r * r).powf(-0.5 * lambda)
            }
            InfluenceFn::Constant(c) => c,
        }
    }

    /// Value at a torus point, measured from the origin.
    pub fn eval(&self, x: TorusPoint) -> f64 {
        self.eval_dist(torus_dist(x, TorusPoint::default()))
    }

    /// Value at an arbitrary real displacement (wrapped onto the circle first).
    #[inline]
    pub fn eval_disp(&self, s: f64) -> f64 {
        self.eval_dist(displacement(s, 0.0).abs())
    }

    /// Supremum over the circle, attained at the origin.
    pub fn sup(&self) -> f64 {
        self.eval_dist(0.0)
    }
}

/// Interaction potential whose gradient drives aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AggregationPotential {
    /// `∇W ≡ 0`
    Zero,
    /// `η(|x|)(½log(1+x²) − ½log(5/4))`, smooth and supported in `|x| < 1/3`.
    PeriodicLogBump,
    CuckerDong { lambda3: f64 },
    CuckerDongScaled { lambda3: f64, eps: f64 },
}

/// Smooth step `S(s)` going from 0 at `s <= 0` to 1 at `s >= 1`.
fn smooth_step(s: f64) -> f64 {
    if s <= 0.0 {
        0.0
    } else if s >= 1.0 {
        1.0
    } else {
        let a = (-1.0 / s).exp();
        let b = (-1.0 / (1.0 - s)).exp();
        a / (a + b)
    }
}

fn smooth_step_deriv(s: f64) -> f64 {
    if s <= 0.0 || s >= 1.0 {
        0.0
    } else {
        let v = smooth_step(s);
        v * (1.0 - v) * (1.0 / (s * s) + 1.0 / ((1.0 - s) * (1.0 - s)))
    }
}

/// Cutoff equal to 1 on `[0, 1/6]` and 0 on `[1/3, ∞)`.
pub fn bump(r: f64) -> f64 {
    smooth_step((1.0 / 3.0 - r) * 6.0)
}

pub fn bump_deriv(r: f64) -> f64 {
    -6.0 * smooth_step_deriv((1.0 / 3.0 - r) * 6.0)
}

impl AggregationPotential {
    pub fn cucker_dong(lambda3: f64) -> Result<Self> {
        if !(lambda3 > 0.0 && lambda3.is_finite()) {
            return Err(TcsError::Config(format!("lambda3 must be positive, got {lambda3}")));
        }
        Ok(AggregationPotential::CuckerDong { lambda3 })
    }

    pub fn cucker_dong_scaled(lambda3: f64, eps: f64) -> Result<Self> {
        if !(lambda3 > 0.0 && lambda3.is_finite()) {
            return Err(TcsError::Config(format!("lambda3 must be positive, got {lambda3}")));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(TcsError::Config(format!(
                "scaled potential needs epsilon > 0, got {eps}"
            )));
        }
        Ok(AggregationPotential::CuckerDongScaled { lambda3, eps })
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, AggregationPotential::Zero)
    }

    /// Potential value at signed displacement `s`.
    pub fn value(&self, s: f64) -> f64 {
        let x = displacement(s, 0.0);
        let r = x.abs();
        match *self {
            AggregationPotential::Zero => 0.0,
            AggregationPotential::PeriodicLogBump => {
                bump(r) * (0.5 * (1.0 + r * r).ln() - 0.5 * 1.25f64.ln())
            }
            AggregationPotential::CuckerDong { lambda3 } => cd_value(lambda3, 1.0, r),
            AggregationPotential::CuckerDongScaled { lambda3, eps } => {
                cd_value(lambda3, eps * eps, r)
            }
        }
    }

    /// Gradient at signed displacement `s` (wrapped onto `(-1/2, 1/2]`).
    ///
    /// At the antipode the two one-sided values are averaged, which is zero by
    /// symmetry, so the gradient is exactly odd on the circle.
    #[inline]
    pub fn grad(&self, s: f64) -> f64 {
        let x = displacement(s, 0.0);
        if x == 0.5 {
            return 0.0;
        }
        match *self {
            AggregationPotential::Zero => 0.0,
            AggregationPotential::PeriodicLogBump => {
                let r = x.abs();
                if r >= 1.0 / 3.0 {
                    return 0.0;
                }
                let core = bump(r) * x / (1.0 + x * x);
                let db = bump_deriv(r);
                if db == 0.0 {
                    return core;
                }
                let g = 0.5 * (1.0 + r * r).ln() - 0.5 * 1.25f64.ln();
                db * x.signum() * g + core
            }
            AggregationPotential::CuckerDong { lambda3 } => cd_grad(lambda3, 1.0, x),
            AggregationPotential::CuckerDongScaled { lambda3, eps } => {
                cd_grad(lambda3, eps * eps, x)
            }
        }
    }

    /// Supremum of `|∇W|` over a fine sample of the circle.
    pub fn grad_sup(&self) -> f64 {
        let n = 4096;
        (0..n)
            .map(|k| self.grad(k as f64 / n as f64 * 0.5).abs())
            .fold(0.0, f64::max)
    }
}

fn cd_value(lambda3: f64, a: f64, r: f64) -> f64 {
    let c = c_lambda(lambda3);
    if (lambda3 - 1.0).abs() < 1e-15 {
        (a + c * r * r).ln() / (2.0 * c.sqrt())
    } else {
        (a + c * r * r).powf(0.5 * (1.0 - lambda3)) / ((1.0 - lambda3) * c.sqrt())
    }
}

fn cd_grad(lambda3: f64, a: f64, x: f64) -> f64 {
    let c = c_lambda(lambda3);
    c.sqrt() * x * (a + c * x * x).powf(-0.5 * (1.0 + lambda3))
}

/// Periodic scalar field on `M` equispaced nodes `x_i = i/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFn1D {
    pub values: Vec<f64>,
}

impl GridFn1D {
    pub fn new(values: Vec<f64>) -> Self {
        GridFn1D { values }
    }

    pub fn zeros(m: usize) -> Self {
        GridFn1D { values: vec![0.0; m] }
    }

    pub fn constant(m: usize, c: f64) -> Self {
        GridFn1D { values: vec![c; m] }
    }

    /// Samples `f` at the nodes.
    pub fn from_fn(m: usize, f: impl Fn(f64) -> f64) -> Self {
        GridFn1D {
            values: (0..m).map(|i| f(i as f64 / m as f64)).collect(),
        }
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.values.len() as f64
    }

    /// Rectangle-rule integral `Δx Σ g_i`.
    pub fn integral(&self) -> f64 {
        self.dx() * self.values.iter().sum::<f64>()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Cyclic shift by `k` nodes: `out[i] = self[i - k]`.
    pub fn rotate(&self, k: usize) -> Self {
        let m = self.m();
        GridFn1D {
            values: (0..m).map(|i| self.values[(i + m - k % m) % m]).collect(),
        }
    }

    /// Periodic piecewise-linear interpolation between nodes.
    pub fn interpolate(&self, x: f64) -> f64 {
        let m = self.m();
        let s = wrap(x) * m as f64;
        let k = (s.floor() as usize).min(m - 1);
        let a = s - k as f64;
        (1.0 - a) * self.values[k] + a * self.values[(k + 1) % m]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFn1D {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &GridFn1D, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_len(self.m(), other.m())?;
        Ok(GridFn1D {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(TcsError::Dimension { expected, got });
    }
    Ok(())
}

/// Kernel sampled at the grid offsets: entry `k` holds `f(displacement(k/M))`.
pub fn sample_kernel(m: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..m)
        .map(|k| f(displacement(k as f64 / m as f64, 0.0)))
        .collect()
}

/// `(k*g)_i = Δx Σ_j k(x_i − x_j) g_j` with `k` given by [`sample_kernel`].
///
/// The sum runs over offsets in a fixed order, so rotating `g` rotates the
/// output bit for bit.
pub fn periodic_convolve(kernel: &[f64], g: &GridFn1D) -> Result<GridFn1D> {
    check_len(g.m(), kernel.len())?;
    Ok(GridFn1D {
        values: cyclic_convolve(kernel, &g.values),
    })
}

/// Slice version of [`periodic_convolve`] without the length check.
pub fn cyclic_convolve(kernel: &[f64], g: &[f64]) -> Vec<f64> {
    let m = g.len();
    let dx = 1.0 / m as f64;
    // rev[p] = g[(m - 1 - p) mod m], so g[(i - o) mod m] = rev[m - 1 - i + o]
    let rev: Vec<f64> = (0..2 * m).map(|p| g[(2 * m - 1 - p) % m]).collect();
    (0..m)
        .map(|i| dx * dot4(kernel, &rev[m - 1 - i..2 * m - 1 - i]))
        .collect()
}

/// Dot product with four interleaved partial sums; the order depends only on the index.
#[inline]
fn dot4(a: &[f64], b: &[f64]) -> f64 {
    let mut s = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        s[0] += x[0] * y[0];
        s[1] += x[1] * y[1];
        s[2] += x[2] * y[2];
        s[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        let d = |a, b| torus_dist(TorusPoint::new(a), TorusPoint::new(b));
        assert_eq!(d(0.25, 0.25), 0.0);
        assert!((d(0.9, 0.1) - 0.2).abs() < 1e-15);
        assert_eq!(d(0.0, 0.5), 0.5);
        assert_eq!(displacement(0.0, 0.5), 0.5);
        assert_eq!(displacement(0.5, 0.0), 0.5);
    }

    #[test]
    fn group_law() {
        let x = TorusPoint::new(0.7);
        let y = TorusPoint::new(0.6);
        assert!(((x + y).value() - 0.3).abs() < 1e-15);
        assert_eq!((x + (-x)).value(), 0.0);
        assert_eq!((-TorusPoint::new(0.0)).value(), 0.0);
        assert_eq!(TorusPoint::new(-1e-18).value(), 0.0);
        assert_eq!(TorusPoint::new(1.0).value(), 0.0);
    }

    #[test]
    fn interpolation_wraps_and_hits_nodes() {
        let g = GridFn1D::new(vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.interpolate(0.25), 1.0);
        assert_eq!(g.interpolate(0.125), 0.5);
        // between the last node and node 0 across the seam
        assert_eq!(g.interpolate(0.875), 1.5);
        assert_eq!(g.interpolate(-0.125), 1.5);
        let f = GridFn1D::from_fn(64, |x| (2.0 * std::f64::consts::PI * x).sin());
        let err = (0..1000)
            .map(|k| {
                let x = k as f64 / 1000.0;
                (f.interpolate(x) - (2.0 * std::f64::consts::PI * x).sin()).abs()
            })
            .fold(0.0, f64::max);
        // linear interpolation error bound h²/8 · max|f''|
        assert!(err <= (4.0 * std::f64::consts::PI.powi(2)) / (8.0 * 64.0 * 64.0));
    }

    #[test]
    fn influence_examples() {
        let phi1 = InfluenceFn::regular(1.0).unwrap();
        assert_eq!(phi1.eval_dist(0.0), 1.0);
        // (1 + 3/4)^(-1/2) = 2/sqrt(7)
        assert!((phi1.eval_dist(0.5) - 2.0 / 7f64.sqrt()).abs() < 1e-15);
        let phi2 = InfluenceFn::regular(2.0).unwrap();
        assert!((phi2.eval_dist(1.0) - 0.5).abs() < 1e-15);
        let s = InfluenceFn::singular(0.5, 0.1).unwrap();
        assert!((s.eval_dist(0.0) - 0.1f64.powf(-0.5)).abs() < 1e-12);
        assert!(InfluenceFn::singular(1.0, 0.0).is_err());
    }

    #[test]
    fn bump_plateau_and_support() {
        assert_eq!(bump(0.0), 1.0);
        assert_eq!(bump(1.0 / 6.0), 1.0);
        assert_eq!(bump(1.0 / 3.0), 0.0);
        assert_eq!(bump(0.4), 0.0);
        let w = AggregationPotential::PeriodicLogBump;
        assert_eq!(w.grad(0.0), 0.0);
        assert_eq!(w.grad(0.34), 0.0);
        assert_eq!(w.grad(-0.45), 0.0);
    }

    #[test]
    fn log_bump_gradient_matches_finite_difference() {
        let w = AggregationPotential::PeriodicLogBump;
        for &x in &[0.05, 0.12, 0.2, 0.25, 0.3, -0.22] {
            let h = 1e-6;
            let fd = (w.value(x + h) - w.value(x - h)) / (2.0 * h);
            assert!((fd - w.grad(x)).abs() < 1e-7, "x = {x}: {fd} vs {}", w.grad(x));
        }
    }

    #[test]
    fn cucker_dong_gradient_matches_finite_difference() {
        for w in [
            AggregationPotential::cucker_dong(1.0).unwrap(),
            AggregationPotential::cucker_dong(0.5).unwrap(),
            AggregationPotential::cucker_dong_scaled(0.5, 0.1).unwrap(),
        ] {
            for &x in &[0.03, 0.2, 0.41, -0.3] {
                let h = 1e-6;
                let fd = (w.value(x + h) - w.value(x - h)) / (2.0 * h);
                assert!((fd - w.grad(x)).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn convolution_constant_kernel() {
        let m = 64;
        let g = GridFn1D::from_fn(m, |x| 1.0 + (2.0 * std::f64::consts::PI * x).sin());
        let k = vec![1.0; m];
        let c = periodic_convolve(&k, &g).unwrap();
        for v in c.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn convolution_delta_sifts() {
        let m = 32;
        let phi = InfluenceFn::regular(1.0).unwrap();
        let mut g = GridFn1D::zeros(m);
        g.values[0] = m as f64;
        let k = sample_kernel(m, |s| phi.eval_disp(s));
        let c = periodic_convolve(&k, &g).unwrap();
        for i in 0..m {
            let expect = phi.eval(TorusPoint::new(i as f64 / m as f64));
            assert!((c.values[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn convolution_matches_double_loop() {
        let m = 256;
        let phi = InfluenceFn::regular(1.0).unwrap();
        let raw = GridFn1D::from_fn(m, |x| (-50.0 * displacement(x, 0.5).powi(2)).exp());
        let z = raw.integral();
        let rho = raw.map(|v| v / z);
        let k = sample_kernel(m, |s| phi.eval_disp(s));
        let fast = periodic_convolve(&k, &rho).unwrap();
        let dx = 1.0 / m as f64;
        for i in 0..m {
            let xi = i as f64 * dx;
            let mut acc = 0.0;
            for j in 0..m {
                let xj = j as f64 * dx;
                let r = torus_dist(TorusPoint::new(xi), TorusPoint::new(xj));
                acc += (1.0 + 3.0 * r * r).powf(-0.5) * rho.values[j];
            }
            assert!((fast.values[i] - acc * dx).abs() < 1e-13);
        }
    }

    #[test]
    fn convolution_dimension_mismatch() {
        let g = GridFn1D::zeros(8);
        assert!(matches!(
            periodic_convolve(&[1.0; 7], &g),
            Err(TcsError::Dimension { expected: 8, got: 7 })
        ));
    }

    fn lambda_strategy() -> impl Strategy<Value = f64> {
        0.1f64..4.0
    }

    proptest! {
        #[test]
        fn canonical_representative(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let x = TorusPoint::new(a);
            let y = TorusPoint::new(b);
            for p in [x + y, -x, x - y] {
                prop_assert!(p.value() >= 0.0 && p.value() < 1.0);
            }
            let d = torus_dist(x, y);
            prop_assert!((0.0..=0.5).contains(&d));
        }

        #[test]
        fn influence_monotone(lam in lambda_strategy(), eps in 0.01f64..1.0, r in 0.0f64..0.5, dr in 0.0f64..0.5) {
            for f in [InfluenceFn::regular(lam).unwrap(), InfluenceFn::singular(lam, eps).unwrap()] {
                prop_assert!(f.eval_dist(r + dr) <= f.eval_dist(r));
            }
            if r + dr >= 1.0 {
                prop_assert!(InfluenceFn::regular(lam).unwrap().eval_dist(r + dr) <= 0.5 + 1e-15);
            }
        }

        #[test]
        fn gradient_is_odd(x in -2.0f64..2.0, lam in lambda_strategy(), eps in 0.01f64..1.0) {
            for w in [
                AggregationPotential::PeriodicLogBump,
                AggregationPotential::cucker_dong(lam).unwrap(),
                AggregationPotential::cucker_dong_scaled(lam, eps).unwrap(),
            ] {
                prop_assert_eq!(w.grad(x) + w.grad(-x), 0.0);
            }
        }

        #[test]
        fn scaled_gradient_below_singular_kernel(x in -0.5f64..0.5, lam1 in 0.05f64..1.0, eps in 0.001f64..1.0) {
            let w = AggregationPotential::cucker_dong_scaled(lam1 / 2.0, eps).unwrap();
            let phi = InfluenceFn::singular(lam1, eps).unwrap();
            prop_assert!(w.grad(x).abs() <= phi.eval_disp(x) * (1.0 + 1e-12));
        }

        #[test]
        fn convolution_linear_and_equivariant(
            vals in proptest::collection::vec(-1.0f64..1.0, 16),
            other in proptest::collection::vec(-1.0f64..1.0, 16),
            a in -2.0f64..2.0,
            shift in 0usize..16,
        ) {
            let phi = InfluenceFn::regular(1.0).unwrap();
            let k = sample_kernel(16, |s| phi.eval_disp(s));
            let g = GridFn1D::new(vals);
            let h = GridFn1D::new(other);
            let lhs = periodic_convolve(&k, &g.zip_map(&h, |p, q| a * p + q).unwrap()).unwrap();
            let kg = periodic_convolve(&k, &g).unwrap();
            let kh = periodic_convolve(&k, &h).unwrap();
            for i in 0..16 {
                prop_assert!((lhs.values[i] - (a * kg.values[i] + kh.values[i])).abs() < 1e-13);
            }
            let rotated = periodic_convolve(&k, &g.rotate(shift)).unwrap();
            prop_assert_eq!(rotated, kg.rotate(shift));
        }
    }
}
