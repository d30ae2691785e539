//! With no signal and `T = I` the system collapses to the Marchenko–Pastur
//! law. For `c = 1` the transform is the upper-half-plane root of
//! `z m² + z m + 1 = 0` and the density is `√(x(4−x)) / (2πx)`.
//!
//! ```bash
//! cargo run --example marchenko_pastur
//! ```

use num_complex::Complex64;
use spectral_ipn::density::density_curve;
use spectral_ipn::measure::{AspectRatio, SpectralPairMeasure};
use spectral_ipn::solver::{solve_grid, SolverConfig};

fn quadratic_root(z: Complex64) -> Complex64 {
    let disc = (z * z - 4.0 * z).sqrt();
    let r1 = (-z + disc) / (2.0 * z);
    let r2 = (-z - disc) / (2.0 * z);
    if r1.im > 0.0 {
        r1
    } else {
        r2
    }
}

fn main() -> spectral_ipn::Result<()> {
    let h = SpectralPairMeasure::dirac(0.0, 1.0)?;
    let c = AspectRatio::new(1.0)?;
    let cfg = SolverConfig::default();

    let xs: Vec<f64> = (0..8).map(|i| 0.25 + 0.5 * i as f64).collect();
    println!("{:>6} {:>26} {:>10}", "x", "m(x + 1e-6 i)", "|Δm|");
    for p in solve_grid(&xs, 1e-6, &h, c, &cfg)? {
        let err = (p.m - quadratic_root(p.z)).norm();
        println!(
            "{:>6.2} {:>12.8} {:+.8}i {:>10.2e}",
            p.z.re, p.m.re, p.m.im, err
        );
    }

    let curve = density_curve(&h, c, 0.0, 4.5, 200, 1e-6, &cfg)?;
    let worst = curve
        .grid
        .iter()
        .zip(&curve.f)
        .filter(|(&x, _)| x > 0.05 && (x - 4.0).abs() > 0.01)
        .map(|(&x, &f)| {
            let exact = if x < 4.0 {
                (x * (4.0 - x)).sqrt() / (2.0 * std::f64::consts::PI * x)
            } else {
                0.0
            };
            (f - exact).abs()
        })
        .fold(0.0, f64::max);
    println!(
        "density on {} points: mass {:.5}, max deviation from closed form {:.2e}",
        curve.grid.len(),
        curve.total_mass(),
        worst
    );
    Ok(())
}
