//! Runs the full density + simulation + KS pipeline from a TOML file, the
//! same work as `spectral-ipn compare`.
//!
//! ```bash
//! cargo run --example compare_pipeline -- crates/core/examples/configs/marchenko_pastur.toml 0.05
//! ```

use std::path::PathBuf;

use spectral_ipn::cli::{cmd_compare, init_thread_pool, ExperimentConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = PathBuf::from(
        args.next()
            .unwrap_or_else(|| "crates/core/examples/configs/marchenko_pastur.toml".into()),
    );
    let threshold: f64 = args.next().map_or(0.05, |t| t.parse().expect("threshold"));

    let result = init_thread_pool()
        .and_then(|_| ExperimentConfig::load(&path))
        .and_then(|cfg| cmd_compare(&cfg, threshold));
    match result {
        Ok(report) => print!("{}", report.to_csv()),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    }
}
