//! Atomic two-dimensional measures `H(s, t)` over the paired eigenvalues of
//! the signal Gram matrix `(1/N) R R*` (coordinate `s`) and of the
//! colouring matrix `T` (coordinate `t`).

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates closer than this are merged into one atom.
const DEDUP_TOL: f64 = 1e-12;
/// Weight sums further than this from one are reported before normalizing.
const NORMALIZE_WARN_TOL: f64 = 1e-9;

/// One mass point of `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub s: f64,
    pub t: f64,
    pub w: f64,
}

/// Finite atomic probability measure on `[0, ∞)²`.
///
/// Invariants: every coordinate is finite and nonnegative, every weight is
/// positive, weights sum to one and no two atoms share a location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 3]>", into = "Vec<[f64; 3]>")]
pub struct SpectralPairMeasure {
    atoms: Vec<Atom>,
}

impl SpectralPairMeasure {
    /// Builds a measure from `(s, t, w)` triples.
    ///
    /// Weights are rescaled to sum to one; coincident atoms are merged.
    pub fn new<I>(triples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64, f64)>,
    {
        let mut atoms: Vec<Atom> = Vec::new();
        for (i, (s, t, w)) in triples.into_iter().enumerate() {
            if !(s.is_finite() && t.is_finite() && w.is_finite()) {
                return Err(Error::InvalidMeasure(format!(
                    "atom #{i} has a non-finite entry ({s}, {t}, {w})"
                )));
            }
            if s < 0.0 || t < 0.0 {
                return Err(Error::InvalidMeasure(format!(
                    "atom #{i} has a negative coordinate (s = {s}, t = {t})"
                )));
            }
            if w <= 0.0 {
                return Err(Error::InvalidMeasure(format!(
                    "atom #{i} has nonpositive weight {w}"
                )));
            }
            match atoms
                .iter_mut()
                .find(|a| (a.s - s).abs() <= DEDUP_TOL && (a.t - t).abs() <= DEDUP_TOL)
            {
                Some(existing) => existing.w += w,
                None => atoms.push(Atom { s, t, w }),
            }
        }
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }

        let total: f64 = atoms.iter().map(|a| a.w).sum();
        if (total - 1.0).abs() > NORMALIZE_WARN_TOL {
            log::warn!("measure weights sum to {total}; normalizing");
        }
        for a in &mut atoms {
            a.w /= total;
        }
        // the last weight absorbs the rounding residue: with S the running
        // sum of the others, S + (1 − S) rounds to exactly one, so the
        // left-to-right sum used by `integrate` is exact
        if let Some((last, rest)) = atoms.split_last_mut() {
            let rest_sum: f64 = rest.iter().map(|a| a.w).sum();
            let closing = 1.0 - rest_sum;
            if closing > 0.0 {
                last.w = closing;
            }
        }
        Ok(Self { atoms })
    }

    /// Point mass at `(s, t)`.
    pub fn dirac(s: f64, t: f64) -> Result<Self> {
        Self::new([(s, t, 1.0)])
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn s_max(&self) -> f64 {
        self.atoms.iter().map(|a| a.s).fold(0.0, f64::max)
    }

    pub fn t_max(&self) -> f64 {
        self.atoms.iter().map(|a| a.t).fold(0.0, f64::max)
    }

    /// `Σ w_i · kernel(s_i, t_i)`.
    pub fn integrate<K>(&self, kernel: K) -> Result<Complex64>
    where
        K: Fn(f64, f64) -> Complex64,
    {
        let mut acc = Complex64::new(0.0, 0.0);
        for (index, a) in self.atoms.iter().enumerate() {
            let k = kernel(a.s, a.t);
            if !(k.re.is_finite() && k.im.is_finite()) {
                return Err(Error::NonFiniteKernel {
                    index,
                    s: a.s,
                    t: a.t,
                });
            }
            acc += k * a.w;
        }
        Ok(acc)
    }

    /// `Σ w_i t_i^k`; the zeroth moment is exactly one.
    pub fn marginal_t_moment(&self, k: u32) -> f64 {
        if k == 0 {
            return 1.0;
        }
        self.atoms.iter().map(|a| a.w * a.t.powi(k as i32)).sum()
    }

    /// Total `H`-mass sitting on `t = 0`.
    pub fn mass_on_zero_t(&self) -> f64 {
        self.atoms.iter().filter(|a| a.t == 0.0).map(|a| a.w).sum()
    }
}

impl TryFrom<Vec<[f64; 3]>> for SpectralPairMeasure {
    type Error = Error;

    fn try_from(triples: Vec<[f64; 3]>) -> Result<Self> {
        Self::new(triples.into_iter().map(|[s, t, w]| (s, t, w)))
    }
}

impl From<SpectralPairMeasure> for Vec<[f64; 3]> {
    fn from(m: SpectralPairMeasure) -> Self {
        m.atoms.iter().map(|a| [a.s, a.t, a.w]).collect()
    }
}

impl fmt::Display for SpectralPairMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .atoms
            .iter()
            .map(|a| format!("{}·δ({}, {})", a.w, a.s, a.t))
            .collect();
        f.write_str(&parts.join(" + "))
    }
}

/// Limiting ratio `c = lim n / N` of the two matrix dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct AspectRatio(f64);

impl AspectRatio {
    pub fn new(c: f64) -> Result<Self> {
        if c.is_finite() && c > 0.0 {
            Ok(Self(c))
        } else {
            Err(Error::InvalidArgument(format!(
                "aspect ratio must be positive and finite, got {c}"
            )))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for AspectRatio {
    type Error = Error;

    fn try_from(c: f64) -> Result<Self> {
        Self::new(c)
    }
}

impl From<AspectRatio> for f64 {
    fn from(c: AspectRatio) -> f64 {
        c.0
    }
}
