//! `H = δ(1, 1)` at `c = 0.5`: five `800 × 1600` samples with complex
//! Gaussian noise against the limiting density, as in the first figure of
//! the original simulations.
//!
//! ```bash
//! cargo run --release --example figure1_single_atom
//! ```

use spectral_ipn::cli::{compare, ExperimentConfig};

fn main() -> spectral_ipn::Result<()> {
    let mut cfg = ExperimentConfig::load("crates/core/examples/configs/figure1.toml".as_ref())
        .or_else(|_| ExperimentConfig::load("examples/configs/figure1.toml".as_ref()))?;
    cfg.output_dir = std::env::temp_dir().join("spectral-ipn-figure1");
    let report = compare(&cfg)?;
    for row in &report.rows {
        println!("seed {:>20}  KS {:.5}", row.seed, row.ks);
    }
    println!(
        "pooled KS over {} eigenvalues: {:.5}",
        report.pooled_n, report.pooled_ks
    );
    println!("plot-ready CSV written to {}", cfg.output_dir.display());
    Ok(())
}
