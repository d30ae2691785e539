//! Density, CDF and point masses of the limiting spectral distribution,
//! recovered from `m(z)` through the Stieltjes inversion formula
//! `f(x) = lim_{v→0⁺} Im m(x + iv) / π`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{AspectRatio, SpectralPairMeasure};
use crate::solver::{self, SolverConfig, TransformPair, UpperHalfPoint};

/// Ends of the density window are pushed out until `f` drops below this.
pub const TAIL_LEVEL: f64 = 1e-6;
/// Tolerated deviation of the total mass from one.
pub const MASS_TOL: f64 = 5e-3;
/// Negative density values above this are numerical noise and are clipped.
const CLIP_LEVEL: f64 = -1e-6;
/// Atom estimates below this are reported as zero.
const ATOM_FLOOR: f64 = 1e-4;
const ATOM_PROBES: (f64, f64) = (1e-4, 1e-5);
/// Local trapezoid error (area) above which a cell is bisected.
const REFINE_AREA: f64 = 1e-7;
const MAX_REFINE_DEPTH: u32 = 48;
const MAX_EXTENSIONS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointMass {
    pub location: f64,
    pub mass: f64,
}

/// Sampled density of the limiting spectral distribution.
///
/// `grid` is strictly increasing: a uniform base grid with cells bisected
/// wherever the trapezoid rule is locally inaccurate (square-root edges,
/// the integrable singularity at zero for square ensembles).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub f: Vec<f64>,
    pub atoms: Vec<PointMass>,
    pub v_used: f64,
}

impl DensityCurve {
    /// Trapezoid integral of the continuous part.
    pub fn continuous_mass(&self) -> f64 {
        trapezoid(&self.grid, &self.f)
    }

    pub fn atom_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.continuous_mass() + self.atom_mass()
    }

    pub fn check_mass(&self) -> Result<()> {
        let total = self.total_mass();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Density(format!(
                "total mass {total:.6} deviates from 1 by more than {MASS_TOL}"
            )));
        }
        Ok(())
    }

    /// Cumulative trapezoid integral of `f`, starting at zero on `grid[0]`.
    pub fn cumulative(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.grid.len());
        out.push(0.0);
        for i in 1..self.grid.len() {
            acc += 0.5 * (self.f[i] + self.f[i - 1]) * (self.grid[i] - self.grid[i - 1]);
            out.push(acc);
        }
        out
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (yw[0] + yw[1]) * (xw[1] - xw[0]))
        .sum()
}

/// Shared state for evaluating `f` at arbitrary abscissae.
struct Inverter<'a> {
    h: &'a SpectralPairMeasure,
    c: AspectRatio,
    cfg: &'a SolverConfig,
    v: f64,
    /// Mass whose Lorentzian `mass·v / (π (x² + v²))` is removed from `f`.
    zero_mass: f64,
}

impl Inverter<'_> {
    fn density(&self, x: f64, pair: &TransformPair) -> f64 {
        let lorentz = self.zero_mass * self.v / (x * x + self.v * self.v);
        (pair.m.im - lorentz) / PI
    }

    fn solve(&self, x: f64, warm: Option<&TransformPair>) -> Option<TransformPair> {
        let z = UpperHalfPoint::new(x, self.v).ok()?;
        // a neighbour can sit on the far side of a steep transition, so the
        // continuation from large Im z comes first
        if let Ok(p) = solver::solve_at(z, self.h, self.c, self.cfg, None) {
            return Some(p);
        }
        let w = warm?;
        solver::solve_from(z, self.h, self.c, self.cfg, (w.m, w.g))
            .ok()
            .filter(|p| p.converged && p.m.im > 0.0)
    }

    /// Bisects `[xl, xr]` until the trapezoid rule is locally accurate and
    /// returns the interior points it created, in increasing order.
    fn refine(
        &self,
        (xl, fl, pl): (f64, f64, &TransformPair),
        (xr, fr): (f64, f64),
        depth: u32,
        out: &mut Vec<(f64, f64)>,
        failed: &mut Vec<f64>,
    ) {
        if depth >= MAX_REFINE_DEPTH {
            return;
        }
        let xm = 0.5 * (xl + xr);
        if xm <= xl || xm >= xr {
            return;
        }
        let Some(pm) = self.solve(xm, Some(pl)) else {
            failed.push(xm);
            return;
        };
        let fm = self.density(xm, &pm);
        if (fm - 0.5 * (fl + fr)).abs() * (xr - xl) > REFINE_AREA {
            self.refine((xl, fl, pl), (xm, fm), depth + 1, out, failed);
            out.push((xm, fm));
            self.refine((xm, fm, &pm), (xr, fr), depth + 1, out, failed);
        }
    }
}

/// Samples the density on `[x_min, x_max]` at `v_target`.
///
/// The window is first widened until `f < 1e-6` at both ends (or the left
/// end reaches zero), then sampled on `points` uniform abscissae and refined
/// by bisection. The point mass at zero is detected separately and its
/// Lorentzian removed from `f`.
pub fn density_curve(
    h: &SpectralPairMeasure,
    c: AspectRatio,
    x_min: f64,
    x_max: f64,
    points: usize,
    v_target: f64,
    cfg: &SolverConfig,
) -> Result<DensityCurve> {
    cfg.validate()?;
    if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
        return Err(Error::InvalidArgument(format!(
            "density window [{x_min}, {x_max}] is empty"
        )));
    }
    // rank(RR*) ≤ N caps the mass on s > 0 at 1/c
    let signal: f64 = h.atoms().iter().filter(|a| a.s > 0.0).map(|a| a.w).sum();
    if signal > 1.0 / c.get() + 1e-12 {
        log::warn!(
            "H puts mass {signal} on s > 0 but at most 1/c = {} is realizable; \
             the curve need not have unit mass",
            1.0 / c.get()
        );
    }
    if points < 2 {
        return Err(Error::InvalidArgument(
            "density grid needs at least 2 points".into(),
        ));
    }
    if !(v_target >= cfg.v_floor && v_target.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "v_target = {v_target} is below v_floor = {}",
            cfg.v_floor
        )));
    }

    let atom = zero_atom(h, c, cfg)?;
    let zero_mass = if atom > 0.0 {
        let p = solver::solve_at(UpperHalfPoint::new(0.0, v_target)?, h, c, cfg, None)?;
        v_target * p.m.im
    } else {
        0.0
    };
    let inv = Inverter {
        h,
        c,
        cfg,
        v: v_target,
        zero_mass,
    };

    let (x_min, x_max) = extend_window(&inv, x_min, x_max)?;

    let base: Vec<f64> = (0..points)
        .map(|i| {
            if i + 1 == points {
                x_max
            } else {
                x_min + (x_max - x_min) * i as f64 / (points - 1) as f64
            }
        })
        .collect();
    let pairs = solver::solve_grid(&base, v_target, h, c, cfg)?;
    let failed: Vec<f64> = pairs
        .iter()
        .zip(&base)
        .filter(|(p, _)| !p.converged)
        .map(|(_, &x)| x)
        .collect();
    if !failed.is_empty() {
        return Err(Error::GridFailure(failed));
    }
    let f_base: Vec<f64> = pairs
        .iter()
        .zip(&base)
        .map(|(p, &x)| inv.density(x, p))
        .collect();

    // per base cell: inserted (x, f) points and abscissae that failed
    type Cell = (Vec<(f64, f64)>, Vec<f64>);
    let refined: Vec<Cell> = (0..points - 1)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            let mut failed = Vec::new();
            inv.refine(
                (base[i], f_base[i], &pairs[i]),
                (base[i + 1], f_base[i + 1]),
                0,
                &mut out,
                &mut failed,
            );
            (out, failed)
        })
        .collect();

    let mut grid = Vec::with_capacity(points * 2);
    let mut f = Vec::with_capacity(points * 2);
    let mut failed = Vec::new();
    for i in 0..points {
        grid.push(base[i]);
        f.push(f_base[i]);
        if i + 1 < points {
            let (pts, bad) = &refined[i];
            for &(x, y) in pts {
                grid.push(x);
                f.push(y);
            }
            failed.extend_from_slice(bad);
        }
    }
    if !failed.is_empty() {
        return Err(Error::GridFailure(failed));
    }

    for (x, y) in grid.iter().zip(f.iter_mut()) {
        if *y < CLIP_LEVEL {
            return Err(Error::Density(format!(
                "density {y:.3e} at x = {x} is negative beyond noise level"
            )));
        }
        if *y < 0.0 {
            *y = 0.0;
        }
    }

    let atoms = if atom > 0.0 {
        vec![PointMass {
            location: 0.0,
            mass: atom,
        }]
    } else {
        Vec::new()
    };
    let curve = DensityCurve {
        grid,
        f,
        atoms,
        v_used: v_target,
    };
    if let Err(e) = curve.check_mass() {
        log::warn!("{e}");
    }
    Ok(curve)
}

fn extend_window(inv: &Inverter<'_>, mut lo: f64, mut hi: f64) -> Result<(f64, f64)> {
    let at = |x: f64| -> Result<f64> {
        inv.solve(x, None)
            .map(|p| inv.density(x, &p))
            .ok_or_else(|| Error::GridFailure(vec![x]))
    };
    for _ in 0..MAX_EXTENSIONS {
        let span = hi - lo;
        let mut moved = false;
        if at(hi)? >= TAIL_LEVEL {
            hi += span;
            moved = true;
        }
        if lo > 0.0 && at(lo)? >= TAIL_LEVEL {
            lo = (lo - span).max(0.0);
            moved = true;
        }
        if !moved {
            break;
        }
    }
    Ok((lo, hi))
}

/// Heuristic window `[0, x_hi]` containing the support:
/// `‖C_n‖ ≤ ‖T‖ (‖R/√N‖ + ‖X/√N‖)² ≈ t_max (√s_max + 1 + √c)²`.
pub fn support_bound(h: &SpectralPairMeasure, c: AspectRatio) -> f64 {
    let edge = h.t_max() * (h.s_max().sqrt() + 1.0 + c.get().sqrt()).powi(2);
    1.1 * edge + 0.1
}

/// Finds a window `[lo, hi]` outside which `f < 1e-6`, by a coarse scan over
/// `[0, support_bound]`.
pub fn auto_window(
    h: &SpectralPairMeasure,
    c: AspectRatio,
    v_target: f64,
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    const SCAN_POINTS: usize = 401;
    let upper = support_bound(h, c);
    let atom = zero_atom(h, c, cfg)?;
    let zero_mass = if atom > 0.0 {
        let p = solver::solve_at(UpperHalfPoint::new(0.0, v_target)?, h, c, cfg, None)?;
        v_target * p.m.im
    } else {
        0.0
    };
    let inv = Inverter {
        h,
        c,
        cfg,
        v: v_target,
        zero_mass,
    };
    let xs: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| upper * i as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let pairs = solver::solve_grid(&xs, v_target, h, c, cfg)?;
    let failed: Vec<f64> = pairs
        .iter()
        .zip(&xs)
        .filter(|(p, _)| !p.converged)
        .map(|(_, &x)| x)
        .collect();
    if !failed.is_empty() {
        return Err(Error::GridFailure(failed));
    }
    let above: Vec<usize> = pairs
        .iter()
        .zip(&xs)
        .enumerate()
        .filter(|(_, (p, &x))| inv.density(x, p) >= TAIL_LEVEL)
        .map(|(i, _)| i)
        .collect();
    let (Some(&first), Some(&last)) = (above.first(), above.last()) else {
        return Ok((0.0, upper));
    };
    let lo = if first == 0 { 0.0 } else { xs[first - 1] };
    let hi = if last + 1 < xs.len() {
        xs[last + 1]
    } else {
        upper
    };
    Ok((lo, hi))
}

/// Density curve on an automatically chosen window.
pub fn density_curve_auto(
    h: &SpectralPairMeasure,
    c: AspectRatio,
    points: usize,
    v_target: f64,
    cfg: &SolverConfig,
) -> Result<DensityCurve> {
    let (lo, hi) = auto_window(h, c, v_target, cfg)?;
    density_curve(h, c, lo, hi, points, v_target, cfg)
}

/// `F(b) − F(a) ≈ (1/π) ∫_a^b Im m(u + i·v_target) du` by adaptive Simpson
/// quadrature (relative tolerance 1e-6), clipped to `[0, 1]`.
pub fn cdf_interval(
    a: f64,
    b: f64,
    h: &SpectralPairMeasure,
    c: AspectRatio,
    v_target: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    const REL_TOL: f64 = 1e-6;
    const MAX_DEPTH: u32 = 50;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::InvalidArgument(format!(
            "interval [{a}, {b}] is empty"
        )));
    }
    cfg.validate()?;
    let eval = |u: f64| -> Result<f64> {
        let p = solver::solve_at(UpperHalfPoint::new(u, v_target)?, h, c, cfg, None)?;
        Ok(p.m.im / PI)
    };

    let fa = eval(a)?;
    let fb = eval(b)?;
    let mid = 0.5 * (a + b);
    let fm = eval(mid)?;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // a coarse pass fixes the absolute scale of the tolerance
    let scale = whole.abs().max(1e-3);
    let value = simpson(
        &eval,
        (a, fa),
        (mid, fm),
        (b, fb),
        whole,
        REL_TOL * scale,
        MAX_DEPTH,
    )?;
    Ok(value.clamp(0.0, 1.0))
}

fn simpson<F>(
    eval: &F,
    (a, fa): (f64, f64),
    (m, fm): (f64, f64),
    (b, fb): (f64, f64),
    whole: f64,
    eps: f64,
    depth: u32,
) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval(lm)?;
    let frm = eval(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson(
        eval,
        (a, fa),
        (lm, flm),
        (m, fm),
        left,
        0.5 * eps,
        depth - 1,
    )? + simpson(
        eval,
        (m, fm),
        (rm, frm),
        (b, fb),
        right,
        0.5 * eps,
        depth - 1,
    )?)
}

/// Point mass of the limiting distribution at `a`, from
/// `mass = lim_{v→0} v·Im m(a + iv)` probed at `v = 1e-4` and `v = 1e-5`
/// and extrapolated linearly in `v`.
pub fn estimate_atom(
    a: f64,
    h: &SpectralPairMeasure,
    c: AspectRatio,
    cfg: &SolverConfig,
) -> Result<f64> {
    if !(a.is_finite() && a >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "atom location {a} must be nonnegative"
        )));
    }
    let (coarse, fine) = atom_probes(a, h, c, cfg)?;
    check_ambiguity(a, coarse, fine)?;
    Ok(extrapolate(coarse, fine))
}

fn check_ambiguity(location: f64, coarse: f64, fine: f64) -> Result<()> {
    if coarse > 1e-3 && fine > 1e-3 && (coarse - fine).abs() > 0.1 * coarse.max(fine) {
        return Err(Error::AmbiguousAtom {
            location,
            coarse,
            fine,
        });
    }
    Ok(())
}

fn atom_probes(
    a: f64,
    h: &SpectralPairMeasure,
    c: AspectRatio,
    cfg: &SolverConfig,
) -> Result<(f64, f64)> {
    let probe = |v: f64| -> Result<f64> {
        let p = solver::solve_at(UpperHalfPoint::new(a, v)?, h, c, cfg, None)?;
        Ok(v * p.m.im)
    };
    Ok((probe(ATOM_PROBES.0)?, probe(ATOM_PROBES.1)?))
}

fn extrapolate(coarse: f64, fine: f64) -> f64 {
    let (v1, v2) = ATOM_PROBES;
    let mass = fine + (fine - coarse) * v2 / (v1 - v2);
    if mass < ATOM_FLOOR {
        0.0
    } else {
        mass
    }
}

/// Atom at zero as used by the density reconstruction. A probe sequence that
/// shrinks by more than half over one decade of `v` is an integrable
/// singularity of the density (mass `~ √v`), not a point mass.
fn zero_atom(h: &SpectralPairMeasure, c: AspectRatio, cfg: &SolverConfig) -> Result<f64> {
    let (coarse, fine) = atom_probes(0.0, h, c, cfg)?;
    if fine < 0.5 * coarse {
        log::debug!("density diverges at 0 (probes {coarse:.3e}, {fine:.3e}); no atom");
        return Ok(0.0);
    }
    check_ambiguity(0.0, coarse, fine)?;
    Ok(extrapolate(coarse, fine))
}
