//! Convergence order of the WENO transport step on a rigid translation.

use tcs_hierarchy::macro_limit::{transport_step, WenoVariant};
use tcs_hierarchy::{presets, GridFn1D};

fn main() -> tcs_hierarchy::Result<()> {
    for variant in [WenoVariant::JiangShu, WenoVariant::Z] {
        let mut prev: Option<f64> = None;
        for m in [64usize, 128, 256, 512] {
            let rho0 = presets::limit_rho0_grid(m);
            let u = GridFn1D::constant(m, 1.0);
            let dt0 = 0.4 / 64.0 * (64.0 / m as f64).powf(5.0 / 3.0);
            let steps = (1.0 / dt0).ceil() as usize;
            let mut r = rho0.clone();
            for _ in 0..steps {
                r = transport_step(&r, &u, 1.0 / steps as f64, variant)?.rho;
            }
            let l1 = r.values.iter().zip(&rho0.values).map(|(a, b)| (a - b).abs()).sum::<f64>() / m as f64;
            match prev {
                Some(p) => println!("{variant:?} M={m:<4} L1={l1:.3e} order={:.2}", (p / l1).log2()),
                None => println!("{variant:?} M={m:<4} L1={l1:.3e}"),
            }
            prev = Some(l1);
        }
    }
    Ok(())
}
