#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spectral_ipn::measure::{AspectRatio, SpectralPairMeasure};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 1–4 atoms with `s, t` uniform on `[0, 3]` and random positive weights.
pub fn random_measure(rng: &mut ChaCha8Rng) -> SpectralPairMeasure {
    let k = rng.random_range(1..=4);
    let triples: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.random_range(0.0..3.0),
                rng.random_range(0.0..3.0),
                rng.random_range(0.1..1.0),
            )
        })
        .collect();
    SpectralPairMeasure::new(triples).unwrap()
}

pub fn ratio(c: f64) -> AspectRatio {
    AspectRatio::new(c).unwrap()
}

/// Upper-half-plane root of `z m² + z m + 1 = 0`.
pub fn mp_ratio_one(z: Complex64) -> Complex64 {
    let disc = (z * z - 4.0 * z).sqrt();
    let a = (-z + disc) / (2.0 * z);
    let b = (-z - disc) / (2.0 * z);
    if a.im > b.im {
        a
    } else {
        b
    }
}

/// Marchenko–Pastur CDF for ratio `c ≤ 1` by composite Simpson on the
/// closed-form density, after the substitution `x = a + (b−a) sin²φ` that
/// removes the square-root edges.
pub fn mp_cdf(c: f64) -> impl Fn(f64) -> f64 {
    assert!(c <= 1.0);
    let a = (1.0 - c.sqrt()).powi(2);
    let b = (1.0 + c.sqrt()).powi(2);
    let pi = std::f64::consts::PI;
    // integrand in φ: f(x(φ)) dx/dφ
    let g = move |phi: f64| {
        let s = phi.sin();
        let x = a + (b - a) * s * s;
        let dx = 2.0 * (b - a) * s * phi.cos();
        ((b - x) * (x - a)).max(0.0).sqrt() / (2.0 * pi * c * x) * dx
    };
    let steps = 4000;
    let h = (pi / 2.0) / steps as f64;
    let mut cum = vec![0.0];
    for i in 0..steps {
        let (l, r) = (i as f64 * h, (i + 1) as f64 * h);
        let m = 0.5 * (l + r);
        cum.push(cum[i] + h / 6.0 * (g(l) + 4.0 * g(m) + g(r)));
    }
    move |x: f64| {
        if x < a {
            return 0.0;
        }
        if x >= b {
            return 1.0;
        }
        let phi = ((x - a) / (b - a)).sqrt().asin();
        let k = ((phi / h) as usize).min(steps - 1);
        let frac = (phi - k as f64 * h) / h;
        (cum[k] + frac * (cum[k + 1] - cum[k])).clamp(0.0, 1.0)
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Like [`random_measure`], but realizable by the matrix model at ratio `c`:
/// `RR*/N` has rank at most `N = n/c`, so for `c > 1` a mass of at least
/// `1 − 1/c` must sit on `s = 0`.
pub fn admissible_measure(rng: &mut ChaCha8Rng, c: f64) -> SpectralPairMeasure {
    let base = random_measure(rng);
    if c <= 1.0 {
        return base;
    }
    let mut triples: Vec<(f64, f64, f64)> =
        base.atoms().iter().map(|a| (a.s, a.t, a.w / c)).collect();
    triples.push((0.0, rng.random_range(0.0..3.0), 1.0 - 1.0 / c));
    SpectralPairMeasure::new(triples).unwrap()
}
