//! When `T = σ² I` the model is the classical information-plus-noise matrix
//! `(1/N)(R' + σX)(R' + σX)*` with `R' = σR`, and `m` solves a single scalar
//! equation in the spectral distribution of `R'R'*/N`, whose atoms sit at
//! `σ² s`. The coupled solver and the independent scalar solver agree.
//!
//! ```bash
//! cargo run --example dozier_silverstein
//! ```

use spectral_ipn::measure::{AspectRatio, SpectralPairMeasure};
use spectral_ipn::solver::{dozier_silverstein_reference, solve_at, SolverConfig, UpperHalfPoint};

fn main() -> spectral_ipn::Result<()> {
    let cfg = SolverConfig::default();
    for sigma2 in [0.5, 1.0, 2.0] {
        for c in [0.5, 1.0] {
            let h = SpectralPairMeasure::new([(1.0, sigma2, 0.5), (3.0, sigma2, 0.5)])?;
            let c = AspectRatio::new(c)?;
            let mut worst: f64 = 0.0;
            for (re, im) in [(0.5, 0.1), (2.0, 0.3), (4.0, 1.0), (7.5, 0.2)] {
                let z = UpperHalfPoint::new(re, im)?;
                let coupled = solve_at(z, &h, c, &cfg, None)?.m;
                let scalar = dozier_silverstein_reference(
                    z,
                    &[(sigma2 * 1.0, 0.5), (sigma2 * 3.0, 0.5)],
                    sigma2,
                    c,
                    &cfg,
                )?;
                worst = worst.max((coupled - scalar).norm());
            }
            println!("σ² = {sigma2:<4} c = {:<4} max |Δm| = {worst:.2e}", c.get());
        }
    }
    Ok(())
}
