//! The solution in the upper half-plane is unique: iterations started from
//! scattered initial points land on the same `(m, g)`.
//!
//! ```bash
//! cargo run --example uniqueness
//! ```

use num_complex::Complex64;
use spectral_ipn::measure::{AspectRatio, SpectralPairMeasure};
use spectral_ipn::solver::{solve_from, SolverConfig, UpperHalfPoint};

fn main() -> spectral_ipn::Result<()> {
    let h = SpectralPairMeasure::new([(0.3, 0.5, 0.2), (1.5, 2.0, 0.5), (0.0, 1.0, 0.3)])?;
    let c = AspectRatio::new(1.4)?;
    let z = UpperHalfPoint::new(1.7, 0.2)?;
    let cfg = SolverConfig::default();

    let starts = [(0.01, 0.01), (5.0, 0.1), (-3.0, 8.0), (0.0, 0.5)];
    for (re, im) in starts {
        let s = Complex64::new(re, im);
        let p = solve_from(z, &h, c, &cfg, (s, s))?;
        println!(
            "start {s:>10}: m = {:.12} g = {:.12} ({} iterations)",
            p.m, p.g, p.iterations
        );
    }
    Ok(())
}
