//! Initial data used by the reference experiments.

use std::f64::consts::PI;

use crate::geometry::{displacement, GridFn1D};

/// Background density at `t = 0`.
pub fn background_rho0(_x: f64) -> f64 {
    1.0
}

/// Background velocity `0.5 + sin 2πx`.
pub fn background_u0(x: f64) -> f64 {
    0.5 + (2.0 * PI * x).sin()
}

/// Background internal energy `2 + cos 2πx`.
pub fn background_e0(x: f64) -> f64 {
    2.0 + (2.0 * PI * x).cos()
}

/// Unnormalized bump `exp(-50 |x - 1/2|²)` measured with the torus distance.
pub fn limit_rho0_unnormalized(x: f64) -> f64 {
    let d = displacement(x, 0.5);
    (-50.0 * d * d).exp()
}

/// Normalizing constant of [`limit_rho0_unnormalized`], by composite Simpson on a fine mesh.
pub fn limit_rho0_mass() -> f64 {
    let n = 1 << 14;
    let h = 1.0 / n as f64;
    let mut acc = limit_rho0_unnormalized(0.0) + limit_rho0_unnormalized(1.0);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * limit_rho0_unnormalized(k as f64 * h);
    }
    acc * h / 3.0
}

/// Limit density sampled on `m` nodes and normalized so that `Δx Σ ρ = 1`.
pub fn limit_rho0_grid(m: usize) -> GridFn1D {
    let raw = GridFn1D::from_fn(m, limit_rho0_unnormalized);
    let z = raw.integral();
    raw.map(|v| v / z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_sample_at_origin() {
        assert_eq!(background_e0(0.0), 3.0);
        assert_eq!(background_u0(0.0), 0.5);
    }

    #[test]
    fn limit_density_is_normalized() {
        let g = limit_rho0_grid(256);
        assert!((g.integral() - 1.0).abs() < 1e-14);
        // wrapped Gaussian with variance 1/100: Z ≈ sqrt(π/50)
        assert!((limit_rho0_mass() - (PI / 50.0).sqrt()).abs() < 1e-6);
    }
}
