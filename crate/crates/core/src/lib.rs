//! Limiting spectral distribution of general information-plus-noise matrices
//!
//! `C_n = (1/N) T^{1/2}(R+X)(R+X)* T^{1/2}`
//!
//! where `T` and `RR*` commute and their paired eigenvalues have limiting
//! joint distribution `H(s, t)`. The Stieltjes transform `m` of the limit is
//! obtained from the coupled system in `(m, g)` solved by [`solver`], turned
//! into a density by [`density`], and checked against Monte Carlo samples
//! from [`ensemble`] with the tools in [`stats`].
//!
//! ```no_run
//! use spectral_ipn::measure::{AspectRatio, SpectralPairMeasure};
//! use spectral_ipn::solver::{solve_at, SolverConfig, UpperHalfPoint};
//!
//! let h = SpectralPairMeasure::dirac(1.0, 1.0)?;
//! let c = AspectRatio::new(0.5)?;
//! let z = UpperHalfPoint::new(2.0, 1.0)?;
//! let pair = solve_at(z, &h, c, &SolverConfig::default(), None)?;
//! println!("m = {}, g = {}", pair.m, pair.g);
//! # Ok::<(), spectral_ipn::Error>(())
//! ```

pub mod cli;
pub mod density;
pub mod ensemble;
pub mod error;
pub mod measure;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
