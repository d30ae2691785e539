//! Monte Carlo simulation of `C_n = (1/N) T^{1/2}(R+X)(R+X)* T^{1/2}`.

use faer::{c64, Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{AspectRatio, SpectralPairMeasure};

/// Default cap on `n·N`.
pub const DEFAULT_MAX_ENTRIES: usize = 64_000_000;
/// Eigenvalues with `|λ| ≤ ZERO_SNAP·λ_max` are reported as exactly zero.
pub const ZERO_SNAP: f64 = 1e-10;
const ASPECT_SLACK: f64 = 0.1;

const NOISE_STREAM: u64 = 0;
const LEFT_BASIS_STREAM: u64 = 1;
const RIGHT_BASIS_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    RealGaussian,
    /// Circularly symmetric: real and imaginary parts each of variance ½.
    ComplexGaussian,
    Rademacher,
}

impl NoiseKind {
    pub fn is_complex(self) -> bool {
        matches!(self, NoiseKind::ComplexGaussian)
    }
}

/// Shared left basis of `T` and `R`. `Random` is Haar orthogonal for real
/// noise and Haar unitary for complex noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Identity,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    /// `(s_i, t_i)`: eigenvalues of `RR*/N` and of `T` sharing eigenvector `i`.
    pub pair_eigs: Vec<(f64, f64)>,
    pub noise: NoiseKind,
    pub basis: Basis,
    pub seed: u64,
    pub max_entries: usize,
}

impl EnsembleSpec {
    pub fn new(
        n: usize,
        big_n: usize,
        pair_eigs: Vec<(f64, f64)>,
        noise: NoiseKind,
        basis: Basis,
        seed: u64,
    ) -> Result<Self> {
        let spec = Self {
            n,
            big_n,
            pair_eigs,
            noise,
            basis,
            seed,
            max_entries: DEFAULT_MAX_ENTRIES,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Realizes `h` at dimension `n` and checks `n/N` against the target ratio.
    pub fn from_measure(
        h: &SpectralPairMeasure,
        c: AspectRatio,
        n: usize,
        big_n: usize,
        noise: NoiseKind,
        basis: Basis,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 || big_n == 0 {
            return Err(Error::InvalidSpec("n and N must be positive".into()));
        }
        let c_n = n as f64 / big_n as f64;
        if (c_n - c.get()).abs() > ASPECT_SLACK * c.get() {
            return Err(Error::InvalidSpec(format!(
                "n/N = {c_n} is not within 10% of c = {}",
                c.get()
            )));
        }
        Self::new(n, big_n, realize_pairs(h, n), noise, basis, seed)
    }

    pub fn with_max_entries(mut self, cap: usize) -> Self {
        self.max_entries = cap;
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn c_n(&self) -> f64 {
        self.n as f64 / self.big_n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.big_n == 0 {
            return Err(Error::InvalidSpec("n and N must be positive".into()));
        }
        if self.pair_eigs.len() != self.n {
            return Err(Error::InvalidSpec(format!(
                "{} eigenvalue pairs for n = {}",
                self.pair_eigs.len(),
                self.n
            )));
        }
        if let Some((i, &(s, t))) = self
            .pair_eigs
            .iter()
            .enumerate()
            .find(|(_, &(s, t))| !(s.is_finite() && t.is_finite() && s >= 0.0 && t >= 0.0))
        {
            return Err(Error::InvalidSpec(format!(
                "pair #{i} = ({s}, {t}) is not finite and nonnegative"
            )));
        }
        let rank = self.pair_eigs.iter().filter(|p| p.0 > 0.0).count();
        if rank > self.big_n {
            return Err(Error::InvalidSpec(format!(
                "{rank} nonzero singular values do not fit N = {}",
                self.big_n
            )));
        }
        Ok(())
    }

    fn check_memory(&self) -> Result<()> {
        let entries = self.n.saturating_mul(self.big_n);
        if entries > self.max_entries {
            return Err(Error::MemoryCap {
                entries,
                cap: self.max_entries,
            });
        }
        Ok(())
    }
}

/// Sorted eigenvalues of one realization of `C_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSample {
    pub spec: EnsembleSpec,
    pub eigs: Vec<f64>,
}

impl EigenSample {
    /// One eigenvalue per line under an `eig` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(24 * (self.eigs.len() + 1));
        out.push_str("eig\n");
        for e in &self.eigs {
            out.push_str(&format!("{e:.16e}\n"));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    pub fn zero_fraction(&self) -> f64 {
        self.eigs.iter().filter(|&&e| e == 0.0).count() as f64 / self.eigs.len() as f64
    }
}

/// Largest-remainder allocation of `n` slots to the atoms of `h`, in atom order.
pub fn realize_pairs(h: &SpectralPairMeasure, n: usize) -> Vec<(f64, f64)> {
    let quotas: Vec<f64> = h.atoms().iter().map(|a| a.w * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    h.atoms()
        .iter()
        .zip(&counts)
        .flat_map(|(a, &k)| std::iter::repeat_n((a.s, a.t), k))
        .collect()
}

/// Per-replicate seed, a splitmix64 mix of `(seed, replicate)`.
pub fn derive_seed(seed: u64, replicate: usize) -> u64 {
    splitmix64(seed ^ splitmix64(replicate as u64).rotate_left(17))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha20Rng, complex: bool) -> c64 {
    if complex {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    } else {
        c64::new(rng.sample(StandardNormal), 0.0)
    }
}

/// Haar-distributed `rows × cols` matrix with orthonormal columns, from the
/// QR factorization of a Gaussian matrix with the phases of `diag(R)` removed.
fn haar_columns(rows: usize, cols: usize, complex: bool, rng: &mut ChaCha20Rng) -> Mat<c64> {
    let mut g = Mat::<c64>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            g[(i, j)] = gaussian(rng, complex);
        }
    }
    let qr = g.qr();
    let mut q = qr.compute_thin_Q();
    let r = qr.thin_R();
    for j in 0..cols {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            c64::new(1.0, 0.0)
        };
        for i in 0..rows {
            q[(i, j)] *= phase;
        }
    }
    q
}

/// Pairs with nonzero `s` first, so they align with the leading right
/// singular vectors.
fn ordered_pairs(spec: &EnsembleSpec) -> Vec<(f64, f64)> {
    let (mut pairs, zeros): (Vec<_>, Vec<_>) = spec.pair_eigs.iter().partition(|p| p.0 > 0.0);
    pairs.extend(zeros);
    pairs
}

/// `(T^{1/2}, R)` sharing the left basis `U₁`.
pub fn build_matrices(spec: &EnsembleSpec) -> Result<(Mat<c64>, Mat<c64>)> {
    spec.validate()?;
    spec.check_memory()?;
    faer::set_global_parallelism(faer::Par::Seq);
    let (n, big_n) = (spec.n, spec.big_n);
    let pairs = ordered_pairs(spec);
    let rank = pairs.iter().filter(|p| p.0 > 0.0).count();
    let scale = (big_n as f64).sqrt();

    match spec.basis {
        Basis::Identity => {
            let t_half = Mat::<c64>::from_fn(n, n, |i, j| {
                if i == j {
                    c64::new(pairs[i].1.sqrt(), 0.0)
                } else {
                    c64::new(0.0, 0.0)
                }
            });
            let r = Mat::<c64>::from_fn(n, big_n, |i, j| {
                if i == j && i < rank {
                    c64::new(scale * pairs[i].0.sqrt(), 0.0)
                } else {
                    c64::new(0.0, 0.0)
                }
            });
            Ok((t_half, r))
        }
        Basis::Random => {
            let complex = spec.noise.is_complex();
            let u = haar_columns(n, n, complex, &mut stream(spec.seed, LEFT_BASIS_STREAM));
            let v = haar_columns(
                big_n,
                rank,
                complex,
                &mut stream(spec.seed, RIGHT_BASIS_STREAM),
            );
            let ut = Mat::<c64>::from_fn(n, n, |i, j| u[(i, j)] * pairs[j].1.sqrt());
            let t_half = &ut * u.adjoint();
            let us = Mat::<c64>::from_fn(n, rank, |i, j| u[(i, j)] * (scale * pairs[j].0.sqrt()));
            let r = if rank == 0 {
                Mat::<c64>::zeros(n, big_n)
            } else {
                &us * v.adjoint()
            };
            Ok((t_half, r))
        }
    }
}

/// Noise matrix `X` (`n × N`) with i.i.d. mean-zero, unit-variance entries,
/// filled row by row from the spec's noise stream.
pub fn draw_noise(spec: &EnsembleSpec) -> Mat<c64> {
    let mut rng = stream(spec.seed, NOISE_STREAM);
    let mut x = Mat::<c64>::zeros(spec.n, spec.big_n);
    for i in 0..spec.n {
        for j in 0..spec.big_n {
            x[(i, j)] = match spec.noise {
                NoiseKind::RealGaussian => gaussian(&mut rng, false),
                NoiseKind::ComplexGaussian => gaussian(&mut rng, true),
                NoiseKind::Rademacher => {
                    c64::new(if rng.random::<bool>() { 1.0 } else { -1.0 }, 0.0)
                }
            };
        }
    }
    x
}

/// `Y = (1/√N) T^{1/2} (R + X)`, so that `C_n = Y Y*`.
pub fn draw_factor(spec: &EnsembleSpec) -> Result<Mat<c64>> {
    let (t_half, r) = build_matrices(spec)?;
    let x = draw_noise(spec);
    let inv = 1.0 / (spec.big_n as f64).sqrt();
    let signal = Mat::<c64>::from_fn(spec.n, spec.big_n, |i, j| (r[(i, j)] + x[(i, j)]) * inv);
    Ok(match spec.basis {
        Basis::Identity => Mat::<c64>::from_fn(spec.n, spec.big_n, |i, j| {
            signal[(i, j)] * t_half[(i, i)].re
        }),
        Basis::Random => &t_half * &signal,
    })
}

/// Ascending eigenvalues of a Hermitian matrix (lower triangle is read).
pub fn hermitian_eigenvalues(a: MatRef<'_, c64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))
}

fn snap_zeros(eigs: &mut [f64]) {
    let scale = eigs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    for e in eigs.iter_mut() {
        if e.abs() <= ZERO_SNAP * scale {
            *e = 0.0;
        }
    }
}

/// Eigenvalues of `YY*` computed on the smaller Gram side, padded with
/// `|N − n|` zeros when `N < n`.
pub fn sample_eigenvalues(spec: &EnsembleSpec) -> Result<EigenSample> {
    let y = draw_factor(spec)?;
    let mut eigs = if spec.n <= spec.big_n {
        let gram = &y * y.adjoint();
        hermitian_eigenvalues(gram.as_ref())?
    } else {
        let gram = y.adjoint() * &y;
        let mut e = hermitian_eigenvalues(gram.as_ref())?;
        e.resize(spec.n, 0.0);
        e
    };
    if eigs.iter().any(|e| !e.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    snap_zeros(&mut eigs);
    eigs.sort_by(f64::total_cmp);
    Ok(EigenSample {
        spec: spec.clone(),
        eigs,
    })
}

/// Nonzero-padded spectra of `YY*` (`n × n`) and of the companion `Y*Y`
/// (`N × N`), both from the same draw.
pub fn both_gram_spectra(spec: &EnsembleSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let y = draw_factor(spec)?;
    let mut small = hermitian_eigenvalues((&y * y.adjoint()).as_ref())?;
    let mut large = hermitian_eigenvalues((y.adjoint() * &y).as_ref())?;
    snap_zeros(&mut small);
    snap_zeros(&mut large);
    small.sort_by(f64::total_cmp);
    large.sort_by(f64::total_cmp);
    Ok((small, large))
}

/// Replicate `r` is `sample_eigenvalues` of the spec reseeded with
/// `derive_seed(spec.seed, r)`.
pub fn batch_sample(spec: &EnsembleSpec, replicates: usize) -> Result<Vec<EigenSample>> {
    if replicates == 0 {
        return Err(Error::InvalidArgument(
            "replicates must be at least 1".into(),
        ));
    }
    spec.validate()?;
    (0..replicates)
        .into_par_iter()
        .map(|r| {
            sample_eigenvalues(&spec.with_seed(derive_seed(spec.seed, r))).map_err(|e| {
                Error::Replicate {
                    replicate: r,
                    source: Box::new(e),
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn measure(triples: &[(f64, f64, f64)]) -> SpectralPairMeasure {
        SpectralPairMeasure::new(triples.iter().copied()).unwrap()
    }

    #[test]
    fn realize_pairs_examples() {
        let h = measure(&[(1.0, 1.0, 1.0)]);
        assert_eq!(realize_pairs(&h, 4), vec![(1.0, 1.0); 4]);

        let fig2 = measure(&[(0.5, 1.0, 0.5), (2.8, 1.0, 0.5)]);
        assert_eq!(
            realize_pairs(&fig2, 4),
            vec![(0.5, 1.0), (0.5, 1.0), (2.8, 1.0), (2.8, 1.0)]
        );

        let h = measure(&[(0.0, 1.0, 0.3), (1.0, 1.0, 0.7)]);
        let pairs = realize_pairs(&h, 10);
        assert_eq!(pairs.iter().filter(|p| p.0 == 0.0).count(), 3);
        assert_eq!(pairs.iter().filter(|p| p.0 == 1.0).count(), 7);

        let thirds = measure(&[(0.0, 1.0, 1.0), (1.0, 1.0, 1.0), (2.0, 1.0, 1.0)]);
        assert_eq!(realize_pairs(&thirds, 7).len(), 7);
    }

    #[test]
    fn identity_matrices() {
        let spec = EnsembleSpec::new(
            2,
            4,
            vec![(1.0, 1.0); 2],
            NoiseKind::RealGaussian,
            Basis::Identity,
            0,
        )
        .unwrap();
        let (t, r) = build_matrices(&spec).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(t[(i, j)].re, if i == j { 1.0 } else { 0.0 });
            }
            for j in 0..4 {
                assert_eq!(r[(i, j)].re, if i == j { 2.0 } else { 0.0 });
            }
        }

        let spec = EnsembleSpec::new(
            2,
            2,
            vec![(0.0, 2.0), (0.0, 3.0)],
            NoiseKind::RealGaussian,
            Basis::Identity,
            0,
        )
        .unwrap();
        let (t, r) = build_matrices(&spec).unwrap();
        assert_eq!(r.norm_l2(), 0.0);
        assert_abs_diff_eq!(t[(0, 0)].re, 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(t[(1, 1)].re, 3f64.sqrt(), epsilon = 1e-15);
        assert_eq!(t[(0, 1)].norm(), 0.0);
    }

    #[test]
    fn random_basis_commutes() {
        let pairs: Vec<(f64, f64)> = (0..50)
            .map(|i| ((i % 5) as f64 * 0.7, 0.5 + (i % 3) as f64))
            .collect();
        for noise in [NoiseKind::RealGaussian, NoiseKind::ComplexGaussian] {
            let spec = EnsembleSpec::new(50, 80, pairs.clone(), noise, Basis::Random, 7).unwrap();
            let (th, r) = build_matrices(&spec).unwrap();
            let t = &th * &th;
            let rr = &r * r.adjoint();
            let comm = &t * &rr - &rr * &t;
            assert!(comm.norm_l2() <= 1e-10 * t.norm_l2() * rr.norm_l2());
        }
    }

    #[test]
    fn rank_must_fit() {
        let err = EnsembleSpec::new(
            3,
            2,
            vec![(1.0, 1.0); 3],
            NoiseKind::RealGaussian,
            Basis::Identity,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidSpec(_)));
        assert!(EnsembleSpec::new(
            3,
            2,
            vec![(1.0, 1.0), (1.0, 1.0), (0.0, 1.0)],
            NoiseKind::RealGaussian,
            Basis::Random,
            0
        )
        .is_ok());
    }

    #[test]
    fn aspect_ratio_is_checked() {
        let h = measure(&[(1.0, 1.0, 1.0)]);
        let c = AspectRatio::new(0.5).unwrap();
        let mk = |n, nn| {
            EnsembleSpec::from_measure(&h, c, n, nn, NoiseKind::RealGaussian, Basis::Identity, 0)
        };
        assert!(mk(100, 200).is_ok());
        assert!(mk(100, 190).is_ok());
        assert!(mk(100, 150).is_err());
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let spec = EnsembleSpec::new(
            1,
            1,
            vec![(0.0, 0.0)],
            NoiseKind::ComplexGaussian,
            Basis::Identity,
            3,
        )
        .unwrap();
        assert_eq!(sample_eigenvalues(&spec).unwrap().eigs, vec![0.0]);
    }

    #[test]
    fn memory_cap() {
        let spec = EnsembleSpec::new(
            10,
            10,
            vec![(0.0, 1.0); 10],
            NoiseKind::RealGaussian,
            Basis::Identity,
            0,
        )
        .unwrap()
        .with_max_entries(99);
        assert!(matches!(
            sample_eigenvalues(&spec),
            Err(Error::MemoryCap {
                entries: 100,
                cap: 99
            })
        ));
    }

    #[test]
    fn tall_case_pads_zeros() {
        let spec = EnsembleSpec::new(
            30,
            10,
            vec![(0.0, 1.0); 30],
            NoiseKind::RealGaussian,
            Basis::Identity,
            5,
        )
        .unwrap();
        let s = sample_eigenvalues(&spec).unwrap();
        assert_eq!(s.eigs.len(), 30);
        assert_eq!(s.eigs.iter().filter(|&&e| e == 0.0).count(), 20);
    }

    #[test]
    fn batch_matches_single_and_is_deterministic() {
        let spec = EnsembleSpec::new(
            20,
            40,
            vec![(1.0, 1.0); 20],
            NoiseKind::Rademacher,
            Basis::Random,
            11,
        )
        .unwrap();
        let batch = batch_sample(&spec, 1).unwrap();
        let single = sample_eigenvalues(&spec.with_seed(derive_seed(11, 0))).unwrap();
        assert_eq!(batch[0].eigs, single.eigs);
        let again = batch_sample(&spec, 3).unwrap();
        let twice = batch_sample(&spec, 3).unwrap();
        assert_eq!(again, twice);
        assert_ne!(again[1].eigs, again[2].eigs);
    }

    #[test]
    fn csv_and_json() {
        let spec = EnsembleSpec::new(
            1,
            1,
            vec![(0.0, 0.0)],
            NoiseKind::RealGaussian,
            Basis::Identity,
            0,
        )
        .unwrap();
        let s = sample_eigenvalues(&spec).unwrap();
        assert_eq!(s.to_csv(), "eig\n0.0000000000000000e0\n");
        let back: EigenSample = serde_json::from_str(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
