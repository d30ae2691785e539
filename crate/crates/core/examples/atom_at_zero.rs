//! For `c > 1` the matrix `C_n` has rank at most `N`, so a fraction
//! `1 − 1/c` of its eigenvalues are zero. The limit puts the same mass at 0.
//!
//! ```bash
//! cargo run --example atom_at_zero
//! ```

use spectral_ipn::density::{density_curve_auto, estimate_atom};
use spectral_ipn::ensemble::{sample_eigenvalues, Basis, EnsembleSpec, NoiseKind};
use spectral_ipn::measure::{AspectRatio, SpectralPairMeasure};
use spectral_ipn::solver::SolverConfig;

fn main() -> spectral_ipn::Result<()> {
    let h = SpectralPairMeasure::dirac(0.0, 1.0)?;
    let c = AspectRatio::new(2.0)?;
    let cfg = SolverConfig::default();

    let atom = estimate_atom(0.0, &h, c, &cfg)?;
    let spec =
        EnsembleSpec::from_measure(&h, c, 400, 200, NoiseKind::RealGaussian, Basis::Identity, 1)?;
    let sample = sample_eigenvalues(&spec)?;
    println!("estimated atom at 0:      {atom:.6}");
    println!("zero eigenvalues (n=400): {:.6}", sample.zero_fraction());

    let curve = density_curve_auto(&h, c, 300, 1e-6, &cfg)?;
    println!(
        "continuous mass {:.5} + atom mass {:.5} = {:.5}",
        curve.continuous_mass(),
        curve.atom_mass(),
        curve.total_mass()
    );
    Ok(())
}
