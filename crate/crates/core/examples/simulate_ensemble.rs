//! Draws one matrix of the ensemble with a random shared basis and prints a
//! text histogram of its eigenvalues next to the limiting density.
//!
//! ```bash
//! cargo run --example simulate_ensemble
//! ```

use spectral_ipn::density::density_curve;
use spectral_ipn::ensemble::{build_matrices, sample_eigenvalues, Basis, EnsembleSpec, NoiseKind};
use spectral_ipn::measure::{AspectRatio, SpectralPairMeasure};
use spectral_ipn::solver::SolverConfig;
use spectral_ipn::stats::histogram;

fn main() -> spectral_ipn::Result<()> {
    // two signal strengths, two noise colourings
    let h = SpectralPairMeasure::new([(0.5, 1.0, 0.5), (2.0, 2.0, 0.5)])?;
    let c = AspectRatio::new(0.5)?;
    let spec =
        EnsembleSpec::from_measure(&h, c, 400, 800, NoiseKind::Rademacher, Basis::Random, 42)?;

    let (t_half, r) = build_matrices(&spec)?;
    let t = &t_half * &t_half;
    let rr = &r * r.adjoint();
    let comm = &t * &rr - &rr * &t;
    println!("‖T·RR* − RR*·T‖_F = {:.2e}", comm.norm_l2());

    let sample = sample_eigenvalues(&spec)?;
    let (lo, hi) = (0.0, sample.eigs[sample.eigs.len() - 1] * 1.05);
    let bars = histogram(&sample.eigs, 24, Some((lo, hi)))?;
    let curve = density_curve(&h, c, lo, hi, 200, 1e-6, &SolverConfig::default())?;

    for (x, d) in bars {
        let k = curve
            .grid
            .partition_point(|&g| g < x)
            .min(curve.grid.len() - 1);
        println!(
            "{x:>6.2} {:>7.4} {:>7.4} {}",
            d,
            curve.f[k],
            "#".repeat((d * 60.0) as usize)
        );
    }
    Ok(())
}
