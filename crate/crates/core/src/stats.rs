//! Empirical spectral distribution utilities.

use num_complex::Complex64;

use crate::density::{DensityCurve, PointMass};
use crate::error::{Error, Result};
use crate::solver::UpperHalfPoint;

const MIN_FD_BINS: usize = 20;
const MAX_FD_BINS: usize = 10_000;

/// Step function `F(x) = #{points ≤ x} / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCDF {
    sorted: Vec<f64>,
}

impl EmpiricalCDF {
    pub fn new(mut points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument(
                "empirical CDF needs at least one point".into(),
            ));
        }
        if points.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidArgument(
                "empirical CDF points contain NaN".into(),
            ));
        }
        points.sort_by(f64::total_cmp);
        Ok(Self { sorted: points })
    }

    pub fn points(&self) -> &[f64] {
        &self.sorted
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&p| p <= x) as f64 / self.sorted.len() as f64
    }
}

/// `(1/n) Σ 1/(λ_i − z)`.
pub fn empirical_stieltjes(eigs: &[f64], z: UpperHalfPoint) -> Complex64 {
    let z = z.z();
    let sum: Complex64 = eigs
        .iter()
        .map(|&l| (Complex64::new(l, 0.0) - z).inv())
        .sum();
    sum / eigs.len() as f64
}

/// Kolmogorov distance between an empirical step function and a CDF,
/// evaluated at the jump points:
/// `max_j max(|F_n(x_j) − F(x_j)|, |F_n(x_j⁻) − F(x_j⁻)|)`.
///
/// `F(x⁻)` is read as `F` at the next float below `x`, which is exact for
/// right-continuous piecewise CDFs and equals `F(x)` for continuous ones.
pub fn ks_distance<F>(empirical: &EmpiricalCDF, theory_cdf: F) -> f64
where
    F: Fn(f64) -> f64,
{
    let pts = empirical.points();
    let n = pts.len() as f64;
    let mut worst: f64 = 0.0;
    let mut i = 0;
    while i < pts.len() {
        let x = pts[i];
        let mut j = i;
        while j < pts.len() && pts[j] == x {
            j += 1;
        }
        let f = theory_cdf(x);
        let f_left = theory_cdf(x.next_down());
        worst = worst
            .max((i as f64 / n - f_left).abs())
            .max((j as f64 / n - f).abs());
        i = j;
    }
    worst
}

/// Density-normalized histogram: `(bin_center, density)` pairs whose bar
/// areas sum to one over the points falling inside `range`.
pub fn histogram(eigs: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Vec<(f64, f64)>> {
    if eigs.is_empty() {
        return Err(Error::InvalidArgument(
            "histogram of an empty sample".into(),
        ));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "histogram needs at least one bin".into(),
        ));
    }
    let (lo, hi) = match range {
        Some((lo, hi)) if lo < hi => (lo, hi),
        Some((lo, hi)) => {
            return Err(Error::InvalidArgument(format!(
                "histogram range [{lo}, {hi}] is empty"
            )))
        }
        None => {
            let lo = eigs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo < hi {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        }
    };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut inside = 0usize;
    for &x in eigs {
        if x < lo || x > hi {
            continue;
        }
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
        inside += 1;
    }
    if inside == 0 {
        return Err(Error::InvalidArgument(format!(
            "no sample points fall inside [{lo}, {hi}]"
        )));
    }
    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, &cnt)| {
            let center = lo + (k as f64 + 0.5) * width;
            (center, cnt as f64 / (inside as f64 * width))
        })
        .collect())
}

/// Freedman–Diaconis bin count, `range / (2·IQR·n^{-1/3})`, at least 20.
pub fn freedman_diaconis_bins(eigs: &[f64]) -> usize {
    if eigs.len() < 2 {
        return MIN_FD_BINS;
    }
    let mut v = eigs.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < v.len() {
            v[i] * (1.0 - frac) + v[i + 1] * frac
        } else {
            v[i]
        }
    };
    let iqr = q(0.75) - q(0.25);
    let span = v[v.len() - 1] - v[0];
    if iqr <= 0.0 || span <= 0.0 {
        return MIN_FD_BINS;
    }
    let width = 2.0 * iqr / (v.len() as f64).cbrt();
    ((span / width).ceil() as usize).clamp(MIN_FD_BINS, MAX_FD_BINS)
}

/// Piecewise-linear CDF built from a [`DensityCurve`]: cumulative trapezoid
/// of `f` plus jumps at the atoms, clamped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct TheoryCdf {
    grid: Vec<f64>,
    cumulative: Vec<f64>,
    atoms: Vec<PointMass>,
}

impl TheoryCdf {
    pub fn eval(&self, x: f64) -> f64 {
        let jumps: f64 = self
            .atoms
            .iter()
            .filter(|a| a.location <= x)
            .map(|a| a.mass)
            .sum();
        let continuous = if x < self.grid[0] {
            0.0
        } else if x >= self.grid[self.grid.len() - 1] {
            self.cumulative[self.cumulative.len() - 1]
        } else {
            let k = self.grid.partition_point(|&g| g <= x) - 1;
            let (x0, x1) = (self.grid[k], self.grid[k + 1]);
            let (c0, c1) = (self.cumulative[k], self.cumulative[k + 1]);
            c0 + (c1 - c0) * (x - x0) / (x1 - x0)
        };
        (continuous + jumps).clamp(0.0, 1.0)
    }
}

pub fn theory_cdf_builder(curve: &DensityCurve) -> Result<TheoryCdf> {
    if curve.grid.len() < 2 || curve.grid.len() != curve.f.len() {
        return Err(Error::Density(
            "density curve needs matching grid and values".into(),
        ));
    }
    curve.check_mass()?;
    Ok(TheoryCdf {
        grid: curve.grid.clone(),
        cumulative: curve.cumulative(),
        atoms: curve.atoms.clone(),
    })
}
