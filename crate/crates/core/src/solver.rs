//! Solver for the coupled Stieltjes-transform system
//!
//! ```text
//! m = ∫ dH(s,t) / d(s,t),    g = ∫ t dH(s,t) / d(s,t),
//! d(s,t) = s·t / (1 + c·g) − (1 + c·m·t)·z + t·(1 − c),
//! ```
//!
//! whose unique solution in the upper half-plane gives the Stieltjes
//! transform `m` of the limiting spectral distribution of
//! `C_n = (1/N) T^{1/2} (R + X)(R + X)* T^{1/2}` together with the limit `g`
//! of `(1/n) tr (C_n − z)^{-1} T`.
//!
//! Points close to the real axis are reached by continuation in `Im z`:
//! solve at `Im z = v_start`, then shrink the imaginary part geometrically and
//! warm-start every level from the previous one.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{AspectRatio, SpectralPairMeasure};

/// A point `z = re + i·im` with `im > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpperHalfPoint {
    re: f64,
    im: f64,
}

impl UpperHalfPoint {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if re.is_finite() && im.is_finite() && im > 0.0 {
            Ok(Self { re, im })
        } else {
            Err(Error::InvalidArgument(format!(
                "z = {re} + {im}i is not in the upper half-plane"
            )))
        }
    }

    pub fn re(self) -> f64 {
        self.re
    }

    pub fn im(self) -> f64 {
        self.im
    }

    pub fn z(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl TryFrom<Complex64> for UpperHalfPoint {
    type Error = Error;

    fn try_from(z: Complex64) -> Result<Self> {
        Self::new(z.re, z.im)
    }
}

/// Solution `(m, g)` of the system at one point together with iteration data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformPair {
    pub z: Complex64,
    pub m: Complex64,
    pub g: Complex64,
    pub residual_m: f64,
    pub residual_g: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl TransformPair {
    pub fn residual(&self) -> f64 {
        self.residual_m.max(self.residual_g)
    }
}

/// Iteration controls.
///
/// Residuals are measured relative to `max(1, |m|)` (resp. `max(1, |g|)`),
/// so `tol` stays meaningful next to point masses where `|m| ~ 1/v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub v_floor: f64,
    pub v_start: f64,
    pub homotopy_factor: f64,
    /// Try a safeguarded Newton step before each damped step.
    pub accelerate: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 10_000,
            damping: 0.5,
            v_floor: 1e-6,
            v_start: 1.0,
            homotopy_factor: 0.5,
            accelerate: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("solver: {what}")));
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        if !(self.v_floor.is_finite() && self.v_floor > 0.0) {
            return bad("v_floor must be positive");
        }
        if !(self.v_start.is_finite() && self.v_start > 0.0) {
            return bad("v_start must be positive");
        }
        if !(self.homotopy_factor > 0.0 && self.homotopy_factor < 1.0) {
            return bad("homotopy_factor must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Right-hand sides of both equations evaluated at `(m, g)`.
pub fn system_rhs(
    z: UpperHalfPoint,
    m: Complex64,
    g: Complex64,
    h: &SpectralPairMeasure,
    c: AspectRatio,
) -> Result<(Complex64, Complex64)> {
    let eval = evaluate(z.z(), m, g, h, c.get(), false)?;
    Ok((eval.m_rhs, eval.g_rhs))
}

struct Evaluation {
    m_rhs: Complex64,
    g_rhs: Complex64,
    /// Jacobian of the right-hand sides: `[[∂M/∂m, ∂M/∂g], [∂G/∂m, ∂G/∂g]]`.
    jac: [[Complex64; 2]; 2],
    /// Relative rounding level of the right-hand sides: cancellation in the
    /// denominators amplifies machine epsilon by `Σ|terms| / |d|`.
    noise: f64,
}

fn evaluate(
    z: Complex64,
    m: Complex64,
    g: Complex64,
    h: &SpectralPairMeasure,
    c: f64,
    with_jacobian: bool,
) -> Result<Evaluation> {
    let zero = Complex64::new(0.0, 0.0);
    let q = Complex64::new(1.0, 0.0) + g * c;
    if q.norm_sqr() == 0.0 {
        let a = h.atoms()[0];
        return Err(Error::SingularEvaluation {
            index: 0,
            s: a.s,
            t: a.t,
            z,
            reason: "1 + c·g vanishes",
        });
    }
    let q_inv = q.inv();
    let mut out = Evaluation {
        m_rhs: zero,
        g_rhs: zero,
        jac: [[zero; 2]; 2],
        noise: 0.0,
    };
    for (index, a) in h.atoms().iter().enumerate() {
        let coupling = q_inv * (a.s * a.t);
        let shift = m * z * (c * a.t);
        let d = coupling - z - shift + a.t * (1.0 - c);
        let magnitude = coupling.norm() + z.norm() + shift.norm() + (a.t * (1.0 - c)).abs();
        out.noise = out
            .noise
            .max(ROUNDING_SLACK * f64::EPSILON * magnitude / d.norm());
        let inv = d.inv();
        if d.norm_sqr() == 0.0 || !(inv.re.is_finite() && inv.im.is_finite()) {
            return Err(Error::SingularEvaluation {
                index,
                s: a.s,
                t: a.t,
                z,
                reason: "denominator vanishes",
            });
        }
        let wi = inv * a.w;
        out.m_rhs += wi;
        out.g_rhs += wi * a.t;
        if with_jacobian {
            // ∂d/∂m = −c t z,  ∂d/∂g = −c s t / q²
            let wi2 = wi * inv;
            let dm = wi2 * (z * (c * a.t));
            let dg = wi2 * (q_inv * q_inv * (c * a.s * a.t));
            out.jac[0][0] += dm;
            out.jac[0][1] += dg;
            out.jac[1][0] += dm * a.t;
            out.jac[1][1] += dg * a.t;
        }
    }
    Ok(out)
}

const HERGLOTZ_SLACK: f64 = 1e-12;
const NEWTON_FALLBACK_STEPS: usize = 200;
const MAX_STEP_HALVINGS: usize = 60;
const ROUNDING_SLACK: f64 = 16.0;
const NONMONOTONE_SLACK: f64 = 4.0;
const MAX_NONMONOTONE: usize = 8;

fn rel_residual(x: Complex64, rhs: Complex64) -> f64 {
    (x - rhs).norm() / x.norm().max(1.0)
}

fn in_upper_half(m: Complex64, g: Complex64, g_may_vanish: bool) -> bool {
    m.im > 0.0
        && (g.im > 0.0 || (g_may_vanish && g.im >= 0.0))
        && m.re.is_finite()
        && g.re.is_finite()
}

/// `Im(z m) ≥ 0` up to rounding.
fn herglotz(z: Complex64, m: Complex64) -> bool {
    (z * m).im >= -HERGLOTZ_SLACK * (1.0 + (z * m).norm())
}

/// Far-field starting point `m₀ = −1/z`, `g₀ = (∫ t dH)·(−1/z)`.
pub fn cold_start(z: UpperHalfPoint, h: &SpectralPairMeasure) -> (Complex64, Complex64) {
    let m0 = -z.z().inv();
    (m0, m0 * h.marginal_t_moment(1))
}

/// Iterates from an explicit starting point at a single `z`.
///
/// Each step is the damped fixed-point update
/// `(m, g) ← (1 − damping)(m, g) + damping·rhs(m, g)`. With
/// `cfg.accelerate`, a Newton step on the residual replaces it whenever that
/// step stays in the upper half-plane and lowers the residual; if that run
/// fails, the plain damped iteration is restarted from `start`. If both fail,
/// the same start is used at `x + iV` for growing `V`, where the map
/// contracts, and the solution is continued back down to `z`.
/// Non-convergence is reported through `converged = false`, never as an error.
pub fn solve_from(
    z: UpperHalfPoint,
    h: &SpectralPairMeasure,
    c: AspectRatio,
    cfg: &SolverConfig,
    start: (Complex64, Complex64),
) -> Result<TransformPair> {
    let direct = solve_level(z, h, c, cfg, start)?;
    if direct.converged {
        return Ok(direct);
    }
    match lift(z, h, c, cfg, start)? {
        Some(mut pair) => {
            pair.iterations += direct.iterations;
            Ok(pair)
        }
        None => Ok(direct),
    }
}

const LIFT_FACTOR: f64 = 4.0;
const MAX_LIFTS: usize = 12;

/// Solves at `x + iV` for `V = v·4, v·16, …` from `start` until a level
/// converges, then continues down to `z`. `None` if no level converges.
fn lift(
    z: UpperHalfPoint,
    h: &SpectralPairMeasure,
    c: AspectRatio,
    cfg: &SolverConfig,
    start: (Complex64, Complex64),
) -> Result<Option<TransformPair>> {
    let mut v = z.im();
    for _ in 0..MAX_LIFTS {
        v *= LIFT_FACTOR;
        let high = UpperHalfPoint::new(z.re(), v)?;
        let pair = solve_level(high, h, c, cfg, start)?;
        if pair.converged && pair.m.im > 0.0 {
            let down = descend(pair, z.im(), h, c, cfg)?;
            return Ok(down.converged.then_some(down));
        }
    }
    Ok(None)
}

/// Newton-accelerated iteration, restarted without acceleration on failure.
fn solve_level(
    z: UpperHalfPoint,
    h: &SpectralPairMeasure,
    c: AspectRatio,
    cfg: &SolverConfig,
    start: (Complex64, Complex64),
) -> Result<TransformPair> {
    let first = iterate(z, h, c, cfg, start, cfg.accelerate)?;
    if first.converged || !cfg.accelerate {
        return Ok(first);
    }
    // Newton can be drawn to a boundary minimum of the residual; the plain
    // damped map from the same start does not share that failure
    let second = iterate(z, h, c, cfg, start, false)?;
    Ok(TransformPair {
        iterations: first.iterations + second.iterations,
        ..second
    })
}

fn iterate(
    z: UpperHalfPoint,
    h: &SpectralPairMeasure,
    c: AspectRatio,
    cfg: &SolverConfig,
    start: (Complex64, Complex64),
    accelerate: bool,
) -> Result<TransformPair> {
    let zc = z.z();
    let c = c.get();
    let g_may_vanish = h.t_max() == 0.0;
    let (mut m, mut g) = start;
    let mut eval = evaluate(zc, m, g, h, c, true)?;
    let mut iterations = 0;
    let mut nonmonotone = 0;
    loop {
        let res_m = rel_residual(m, eval.m_rhs);
        let res_g = rel_residual(g, eval.g_rhs);
        let res = res_m.max(res_g);
        // tol cannot be met below the rounding level of the evaluation itself
        let floor = cfg.tol.max(eval.noise);
        if res <= floor || iterations >= cfg.max_iter || !res.is_finite() {
            // a root with Im(z m) < 0 is not a transform of a measure on
            // [0, ∞); it sits where 1 + c g vanishes and is spurious
            let converged = res <= floor && herglotz(zc, m);
            return Ok(TransformPair {
                z: zc,
                m,
                g,
                residual_m: res_m,
                residual_g: res_g,
                iterations,
                converged,
            });
        }
        iterations += 1;

        if accelerate {
            if let Some((nm, ng)) = newton_step(m, g, &eval) {
                if in_upper_half(nm, ng, g_may_vanish) && herglotz(zc, nm) {
                    if let Ok(next) = evaluate(zc, nm, ng, h, c, true) {
                        let next_res =
                            rel_residual(nm, next.m_rhs).max(rel_residual(ng, next.g_rhs));
                        // a few non-monotone steps are allowed: next to a
                        // pole of m the residual can stall for one step
                        // while the iterate moves into the quadratic basin
                        let relaxed =
                            next_res < NONMONOTONE_SLACK * res && nonmonotone < MAX_NONMONOTONE;
                        if next_res < res || relaxed {
                            if next_res >= res {
                                nonmonotone += 1;
                            }
                            m = nm;
                            g = ng;
                            eval = next;
                            continue;
                        }
                    }
                }
            }
        }
        // shorten the damped step until it stays in the upper half-plane;
        // the solution is unique there and nowhere else
        let mut a = cfg.damping;
        let mut step = None;
        for _ in 0..MAX_STEP_HALVINGS {
            let (nm, ng) = damped(m, g, &eval, a);
            if in_upper_half(nm, ng, g_may_vanish) {
                step = Some((nm, ng));
                break;
            }
            a *= 0.5;
        }
        let Some((nm, ng)) = step else {
            return Ok(TransformPair {
                z: zc,
                m,
                g,
                residual_m: res_m,
                residual_g: res_g,
                iterations,
                converged: false,
            });
        };
        m = nm;
        g = ng;
        eval = evaluate(zc, m, g, h, c, true)?;
    }
}

fn damped(m: Complex64, g: Complex64, eval: &Evaluation, a: f64) -> (Complex64, Complex64) {
    (
        m * (1.0 - a) + eval.m_rhs * a,
        g * (1.0 - a) + eval.g_rhs * a,
    )
}

fn newton_step(m: Complex64, g: Complex64, eval: &Evaluation) -> Option<(Complex64, Complex64)> {
    let one = Complex64::new(1.0, 0.0);
    let f1 = m - eval.m_rhs;
    let f2 = g - eval.g_rhs;
    let a = one - eval.jac[0][0];
    let b = -eval.jac[0][1];
    let cc = -eval.jac[1][0];
    let d = one - eval.jac[1][1];
    let det = a * d - b * cc;
    if det.norm_sqr() == 0.0 || !det.re.is_finite() {
        return None;
    }
    let dm = (d * f1 - b * f2) / det;
    let dg = (a * f2 - cc * f1) / det;
    let out = (m - dm, g - dg);
    (out.0.re.is_finite() && out.0.im.is_finite() && out.1.re.is_finite() && out.1.im.is_finite())
        .then_some(out)
}

/// Continuation in `Im z` from `cfg.v_start` down to `v_target` at fixed
/// real part `x`. Returns the last pair reached; `converged = false` marks a
/// broken chain.
fn continue_down(
    x: f64,
    v_target: f64,
    h: &SpectralPairMeasure,
    c: AspectRatio,
    cfg: &SolverConfig,
) -> Result<TransformPair> {
    let v = cfg.v_start.max(v_target);
    let z = UpperHalfPoint::new(x, v)?;
    let pair = solve_from(z, h, c, cfg, cold_start(z, h))?;
    if !pair.converged {
        return Ok(pair);
    }
    descend(pair, v_target, h, c, cfg)
}

/// Continues a converged pair from its `Im z` down to `v_target`, shrinking
/// the step whenever a level fails.
fn descend(
    mut pair: TransformPair,
    v_target: f64,
    h: &SpectralPairMeasure,
    c: AspectRatio,
    cfg: &SolverConfig,
) -> Result<TransformPair> {
    let x = pair.z.re;
    let mut v = pair.z.im;
    let mut factor = cfg.homotopy_factor;
    let mut total_iterations = pair.iterations;
    while v > v_target {
        let next_v = (v * factor).max(v_target);
        let z = UpperHalfPoint::new(x, next_v)?;
        let attempt = solve_level(z, h, c, cfg, predict(&pair, z, h, c))?;
        total_iterations += attempt.iterations;
        if attempt.converged && attempt.m.im > 0.0 {
            pair = attempt;
            v = next_v;
            factor = cfg.homotopy_factor;
        } else if factor < 0.99 {
            // smaller continuation step
            factor = factor.sqrt();
        } else {
            return Ok(TransformPair {
                iterations: total_iterations,
                converged: false,
                ..attempt
            });
        }
    }
    pair.iterations = total_iterations;
    Ok(pair)
}

/// Warm start for the next continuation level: the previous solution as is,
/// or rescaled by `z_prev / z` as if `m` and `g` were dominated by a pole at
/// zero, whichever has the smaller residual at the new point.
fn predict(
    prev: &TransformPair,
    z: UpperHalfPoint,
    h: &SpectralPairMeasure,
    c: AspectRatio,
) -> (Complex64, Complex64) {
    let plain = (prev.m, prev.g);
    let r = prev.z / z.z();
    let scaled = (prev.m * r, prev.g * r);
    let score = |(m, g): (Complex64, Complex64)| match evaluate(z.z(), m, g, h, c.get(), false) {
        Ok(e) => rel_residual(m, e.m_rhs).max(rel_residual(g, e.g_rhs)),
        Err(_) => f64::INFINITY,
    };
    if score(scaled) < score(plain) {
        scaled
    } else {
        plain
    }
}

fn check_herglotz(pair: &TransformPair) -> Result<()> {
    if pair.m.im <= 0.0 {
        return Err(Error::InvariantViolation {
            z: pair.z,
            what: format!("Im m = {} is not positive", pair.m.im),
        });
    }
    Ok(())
}

/// Solves the system at one point.
///
/// With a warm start the iteration begins from `warm`; otherwise points
/// below `cfg.v_start` are reached by continuation. Non-convergence is an
/// error here; use [`solve_from`] or [`solve_grid`] to receive it as data.
pub fn solve_at(
    z: UpperHalfPoint,
    h: &SpectralPairMeasure,
    c: AspectRatio,
    cfg: &SolverConfig,
    warm: Option<&TransformPair>,
) -> Result<TransformPair> {
    cfg.validate()?;
    let pair = match warm {
        Some(w) => {
            let p = solve_from(z, h, c, cfg, (w.m, w.g))?;
            if p.converged && p.m.im > 0.0 {
                p
            } else if z.im() >= cfg.v_floor {
                continue_down(z.re(), z.im(), h, c, cfg)?
            } else {
                p
            }
        }
        None => {
            if z.im() < cfg.v_floor {
                return Err(Error::InvalidArgument(format!(
                    "Im z = {} is below v_floor = {} and no warm start was given",
                    z.im(),
                    cfg.v_floor
                )));
            }
            continue_down(z.re(), z.im(), h, c, cfg)?
        }
    };
    if !pair.converged {
        return Err(Error::NonConvergence {
            z: pair.z,
            iterations: pair.iterations,
            residual: pair.residual(),
        });
    }
    check_herglotz(&pair)?;
    Ok(pair)
}

/// Solves at `x + i·v_target` for every abscissa, each by its own
/// continuation chain. Points are independent and evaluated in parallel;
/// failed points come back with `converged = false`.
pub fn solve_grid(
    x_grid: &[f64],
    v_target: f64,
    h: &SpectralPairMeasure,
    c: AspectRatio,
    cfg: &SolverConfig,
) -> Result<Vec<TransformPair>> {
    cfg.validate()?;
    if let Some(x) = x_grid.iter().find(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "grid abscissa {x} is not finite"
        )));
    }
    if !(v_target >= cfg.v_floor && v_target.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "v_target = {v_target} is below v_floor = {}",
            cfg.v_floor
        )));
    }
    x_grid
        .par_iter()
        .map(|&x| {
            let mut pair = continue_down(x, v_target, h, c, cfg)?;
            if pair.converged && pair.m.im <= 0.0 {
                pair.converged = false;
            }
            Ok(pair)
        })
        .collect()
}

/// Stieltjes transform of the companion `N × N` matrix
/// `(1/N)(R + X)* T (R + X)`: `−(1 − c)/z + c·m`.
pub fn companion_transform(m: Complex64, z: UpperHalfPoint, c: AspectRatio) -> Complex64 {
    let c = c.get();
    -z.z().inv() * (1.0 - c) + m * c
}

/// Scalar information-plus-noise equation for `T = σ² I`:
///
/// ```text
/// m = ∫ dH_R(t) / ( t / (1 + σ² c m) − (1 + σ² c m) z + σ² (1 − c) ),
/// ```
///
/// where `H_R` is the spectral distribution of `(1/N) R' R'*` given as
/// `(location, weight)` pairs. Solved by plain damped iteration with the
/// same continuation in `Im z`; kept separate from the coupled solver so it
/// can serve as an independent cross-check.
pub fn dozier_silverstein_reference(
    z: UpperHalfPoint,
    h_r: &[(f64, f64)],
    sigma2: f64,
    c: AspectRatio,
    cfg: &SolverConfig,
) -> Result<Complex64> {
    cfg.validate()?;
    if h_r.is_empty()
        || h_r
            .iter()
            .any(|&(t, w)| !(t >= 0.0 && w > 0.0 && t.is_finite()))
    {
        return Err(Error::InvalidMeasure(
            "H_R needs nonnegative locations and positive weights".into(),
        ));
    }
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sigma2 = {sigma2} must be positive"
        )));
    }
    let total: f64 = h_r.iter().map(|&(_, w)| w).sum();
    let c = c.get();
    let rhs = |zc: Complex64, m: Complex64| -> Complex64 {
        let q = Complex64::new(1.0, 0.0) + m * (sigma2 * c);
        h_r.iter()
            .map(|&(t, w)| (w / total) / (t / q - q * zc + sigma2 * (1.0 - c)))
            .sum()
    };
    // d rhs / dm
    let slope = |zc: Complex64, m: Complex64| -> Complex64 {
        let q = Complex64::new(1.0, 0.0) + m * (sigma2 * c);
        h_r.iter()
            .map(|&(t, w)| {
                let d = t / q - q * zc + sigma2 * (1.0 - c);
                let dd = (-t / (q * q) - zc) * (sigma2 * c);
                -(w / total) * dd / (d * d)
            })
            .sum()
    };
    let solve_level = |zc: Complex64, start: Complex64| -> Option<Complex64> {
        let mut m = start;
        for _ in 0..cfg.max_iter {
            let r = rhs(zc, m);
            if rel_residual(m, r) <= cfg.tol {
                break;
            }
            m = m * (1.0 - cfg.damping) + r * cfg.damping;
        }
        // a transform of a measure on [0, ∞) has Im m > 0 and Im(z m) ≥ 0
        let admissible = |m: Complex64| m.im > 0.0 && (zc * m).im >= -1e-12 * (1.0 + m.norm());
        if admissible(m) && rel_residual(m, rhs(zc, m)) <= cfg.tol {
            return Some(m);
        }
        // near a large atom at zero the damped map can be attracted to the
        // lower-half-plane root; scalar Newton on m − rhs(m) from the same
        // start tracks the upper one
        let mut m = start;
        for _ in 0..NEWTON_FALLBACK_STEPS {
            let r = rhs(zc, m);
            if rel_residual(m, r) <= cfg.tol {
                return admissible(m).then_some(m);
            }
            let step = (m - r) / (Complex64::new(1.0, 0.0) - slope(zc, m));
            let mut next = m - step;
            let mut halvings = 0;
            while !(next.im > 0.0 && next.is_finite()) && halvings < MAX_STEP_HALVINGS {
                next = 0.5 * (next + m);
                halvings += 1;
            }
            if !(next.im > 0.0 && next.is_finite()) {
                return None;
            }
            m = next;
        }
        None
    };

    let target = z.im();
    let mut v = cfg.v_start.max(target);
    let z0 = Complex64::new(z.re(), v);
    let mut m = match solve_level(z0, -z0.inv()) {
        Some(m) if m.im > 0.0 => m,
        _ => {
            return Err(Error::NonConvergence {
                z: z0,
                iterations: cfg.max_iter,
                residual: f64::NAN,
            })
        }
    };
    let mut factor = cfg.homotopy_factor;
    while v > target {
        let next_v = (v * factor).max(target);
        let zc = Complex64::new(z.re(), next_v);
        match solve_level(zc, m) {
            Some(next) if next.im > 0.0 => {
                m = next;
                v = next_v;
                factor = cfg.homotopy_factor;
            }
            _ if factor < 0.99 => factor = factor.sqrt(),
            _ => {
                return Err(Error::NonConvergence {
                    z: zc,
                    iterations: cfg.max_iter,
                    residual: rel_residual(m, rhs(zc, m)),
                })
            }
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn cplx(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn zp(re: f64, im: f64) -> UpperHalfPoint {
        UpperHalfPoint::new(re, im).unwrap()
    }

    fn ratio(c: f64) -> AspectRatio {
        AspectRatio::new(c).unwrap()
    }

    /// Root in C+ of `z m² + z m + 1 = 0`.
    fn mp_ratio_one(z: Complex64) -> Complex64 {
        let disc = (z * z - z * 4.0).sqrt();
        let r1 = (-z + disc) / (z * 2.0);
        let r2 = (-z - disc) / (z * 2.0);
        if r1.im > r2.im {
            r1
        } else {
            r2
        }
    }

    #[test]
    fn rhs_at_origin_atom_is_minus_inverse_z() {
        let h = SpectralPairMeasure::dirac(0.0, 0.0).unwrap();
        let (mr, gr) =
            system_rhs(zp(0.0, 1.0), cplx(0.0, 1.0), cplx(0.0, 0.0), &h, ratio(1.0)).unwrap();
        assert_abs_diff_eq!(mr.re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mr.im, 1.0, epsilon = 1e-15);
        assert_eq!(gr, cplx(0.0, 0.0));
    }

    #[test]
    fn rhs_pure_noise_atom() {
        let h = SpectralPairMeasure::dirac(0.0, 1.0).unwrap();
        let (mr, gr) =
            system_rhs(zp(0.0, 1.0), cplx(0.0, 0.0), cplx(0.0, 0.0), &h, ratio(1.0)).unwrap();
        assert_abs_diff_eq!(mr.im, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gr.im, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(mr.re, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rhs_matches_hand_evaluation() {
        let z = cplx(2.0, 0.1);
        let m = cplx(0.3, 0.4);
        let g = cplx(0.3, 0.4);
        let c = 0.5;
        let (s, t) = (1.0, 1.0);
        // expanded by hand: d = st/(1+cg) − (1+cmt) z + t(1−c)
        let denom = cplx(s * t, 0.0) / (cplx(1.0, 0.0) + g * c)
            - (cplx(1.0, 0.0) + m * (c * t)) * z
            + cplx(t * (1.0 - c), 0.0);
        let want = cplx(1.0, 0.0) / denom;
        let h = SpectralPairMeasure::dirac(s, t).unwrap();
        let (mr, gr) = system_rhs(zp(2.0, 0.1), m, g, &h, ratio(c)).unwrap();
        assert_abs_diff_eq!((mr - want).norm(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!((gr - want * t).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn rhs_reports_singular_coupling() {
        let h = SpectralPairMeasure::dirac(1.0, 1.0).unwrap();
        // 1 + c g = 0 for c = 1, g = −1
        let err = system_rhs(
            zp(0.0, 1.0),
            cplx(0.0, 1.0),
            cplx(-1.0, 0.0),
            &h,
            ratio(1.0),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SingularEvaluation { index: 0, .. }));
    }

    #[test]
    fn solve_origin_atom() {
        let h = SpectralPairMeasure::dirac(0.0, 0.0).unwrap();
        let p = solve_at(zp(0.0, 1.0), &h, ratio(1.0), &SolverConfig::default(), None).unwrap();
        assert_abs_diff_eq!((p.m - cplx(0.0, 1.0)).norm(), 0.0, epsilon = 1e-12);
        assert_eq!(p.g, cplx(0.0, 0.0));
        assert!(p.converged);
    }

    #[test]
    fn solve_marchenko_pastur_ratio_one() {
        let h = SpectralPairMeasure::dirac(0.0, 1.0).unwrap();
        let p = solve_at(zp(0.0, 1.0), &h, ratio(1.0), &SolverConfig::default(), None).unwrap();
        let want = mp_ratio_one(cplx(0.0, 1.0));
        assert_abs_diff_eq!((p.m - want).norm(), 0.0, epsilon = 1e-11);
        // constant t = 1 ⇒ g = m
        assert!((p.g - p.m).norm() <= 1e-11);
    }

    #[test]
    fn solve_grid_far_from_axis() {
        let h = SpectralPairMeasure::dirac(0.0, 0.0).unwrap();
        let out = solve_grid(&[-1.0], 0.5, &h, ratio(1.0), &SolverConfig::default()).unwrap();
        let want = -cplx(-1.0, 0.5).inv();
        assert!(out[0].converged);
        assert_abs_diff_eq!((out[0].m - want).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn solve_grid_reaches_mp_density_at_one() {
        let h = SpectralPairMeasure::dirac(0.0, 1.0).unwrap();
        let out = solve_grid(&[1.0], 1e-6, &h, ratio(1.0), &SolverConfig::default()).unwrap();
        assert!(out[0].converged);
        assert_abs_diff_eq!(out[0].m.im, 3f64.sqrt() / 2.0, epsilon = 1e-5);
    }

    #[test]
    fn solve_grid_rejects_bad_input() {
        let h = SpectralPairMeasure::dirac(0.0, 1.0).unwrap();
        let cfg = SolverConfig::default();
        assert!(solve_grid(&[f64::NAN], 0.1, &h, ratio(1.0), &cfg).is_err());
        assert!(solve_grid(&[1.0], 1e-9, &h, ratio(1.0), &cfg).is_err());
    }

    #[test]
    fn non_convergence_is_data_in_solve_from_and_error_in_solve_at() {
        let h = SpectralPairMeasure::dirac(1.0, 1.0).unwrap();
        let cfg = SolverConfig {
            max_iter: 1,
            ..SolverConfig::default()
        };
        let z = zp(2.0, 1e-3);
        let p = solve_from(z, &h, ratio(0.5), &cfg, cold_start(z, &h)).unwrap();
        assert!(!p.converged);
        assert!(matches!(
            solve_at(z, &h, ratio(0.5), &cfg, None),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn warm_start_below_floor_is_allowed() {
        let h = SpectralPairMeasure::dirac(0.0, 1.0).unwrap();
        let cfg = SolverConfig::default();
        let near = solve_at(zp(1.0, 1e-6), &h, ratio(1.0), &cfg, None).unwrap();
        assert!(solve_at(zp(1.0, 1e-7), &h, ratio(1.0), &cfg, None).is_err());
        let below = solve_at(zp(1.0, 1e-7), &h, ratio(1.0), &cfg, Some(&near)).unwrap();
        assert!((below.m - near.m).norm() < 1e-5);
    }

    #[test]
    fn companion_examples() {
        let i = cplx(0.0, 1.0);
        assert_eq!(companion_transform(i, zp(0.0, 1.0), ratio(1.0)), i);
        let v = companion_transform(cplx(0.0, 0.0), zp(0.0, 1.0), ratio(0.5));
        assert_abs_diff_eq!((v - cplx(0.0, 0.5)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn reference_solver_examples() {
        let cfg = SolverConfig::default();
        let m = dozier_silverstein_reference(zp(0.0, 1.0), &[(0.0, 1.0)], 1.0, ratio(1.0), &cfg)
            .unwrap();
        assert_abs_diff_eq!(
            (m - mp_ratio_one(cplx(0.0, 1.0))).norm(),
            0.0,
            epsilon = 1e-10
        );

        let h = SpectralPairMeasure::dirac(1.0, 1.0).unwrap();
        let z = zp(1.0, 0.5);
        let coupled = solve_at(z, &h, ratio(0.5), &cfg, None).unwrap();
        let scalar = dozier_silverstein_reference(z, &[(1.0, 1.0)], 1.0, ratio(0.5), &cfg).unwrap();
        assert_abs_diff_eq!((coupled.m - scalar).norm(), 0.0, epsilon = 1e-10);

        let h = SpectralPairMeasure::dirac(0.0, 2.0).unwrap();
        let coupled = solve_at(zp(0.0, 1.0), &h, ratio(0.5), &cfg, None).unwrap();
        let scalar =
            dozier_silverstein_reference(zp(0.0, 1.0), &[(0.0, 1.0)], 2.0, ratio(0.5), &cfg)
                .unwrap();
        assert_abs_diff_eq!((coupled.m - scalar).norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        for bad in [
            SolverConfig {
                damping: 0.0,
                ..Default::default()
            },
            SolverConfig {
                damping: 1.5,
                ..Default::default()
            },
            SolverConfig {
                homotopy_factor: 1.0,
                ..Default::default()
            },
            SolverConfig {
                tol: -1.0,
                ..Default::default()
            },
            SolverConfig {
                max_iter: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
