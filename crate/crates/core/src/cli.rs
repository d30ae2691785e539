//! Experiment configuration and the subcommands behind the `spectral-ipn`
//! binary. Every command writes plot-ready CSV into `output_dir` together
//! with a `manifest.toml` holding the fully resolved configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::density::{self, DensityCurve};
use crate::ensemble::{self, derive_seed, Basis, EigenSample, EnsembleSpec, NoiseKind};
use crate::error::{Error, Result};
use crate::measure::{AspectRatio, SpectralPairMeasure};
use crate::solver::{self, SolverConfig, TransformPair, UpperHalfPoint};
use crate::stats::{self, EmpiricalCDF};

pub const THREADS_ENV: &str = "SPECTRAL_IPN_THREADS";
pub const DEFAULT_V_TARGET: f64 = 1e-6;
pub const DEFAULT_GRID_POINTS: usize = 400;
pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    #[serde(default = "default_noise")]
    pub noise: NoiseKind,
    #[serde(default = "default_basis")]
    pub basis: Basis,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_entries")]
    pub max_entries: usize,
}

fn default_noise() -> NoiseKind {
    NoiseKind::ComplexGaussian
}

fn default_basis() -> Basis {
    Basis::Identity
}

fn default_replicates() -> usize {
    1
}

fn default_max_entries() -> usize {
    ensemble::DEFAULT_MAX_ENTRIES
}

fn default_v_target() -> f64 {
    DEFAULT_V_TARGET
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Contents of an experiment TOML file.
///
/// ```toml
/// c = 0.5
/// H = [[1.0, 1.0, 1.0]]
/// output_dir = "out/figure1"
///
/// [grid]
/// x_min = 0.0
/// x_max = 8.0
/// points = 400
///
/// [sim]
/// n = 800
/// N = 1600
/// noise = "complex_gaussian"
/// replicates = 5
/// seed = 1
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub c: AspectRatio,
    #[serde(rename = "H")]
    pub h: SpectralPairMeasure,
    #[serde(default = "default_v_target")]
    pub v_target: f64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
}

impl ExperimentConfig {
    pub fn new(h: SpectralPairMeasure, c: AspectRatio) -> Self {
        Self {
            c,
            h,
            v_target: DEFAULT_V_TARGET,
            output_dir: default_output_dir(),
            grid: None,
            solver: SolverConfig::default(),
            sim: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        self.solver
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.v_target.is_finite() && self.v_target > 0.0) {
            return bad(format!("v_target = {} must be positive", self.v_target));
        }
        if self.v_target < self.solver.v_floor {
            return bad(format!(
                "v_target = {} is below solver.v_floor = {}",
                self.v_target, self.solver.v_floor
            ));
        }
        if let Some(g) = &self.grid {
            if !(g.x_min.is_finite() && g.x_max.is_finite() && g.x_min < g.x_max) {
                return bad(format!("grid window [{}, {}] is empty", g.x_min, g.x_max));
            }
            if g.points < 2 {
                return bad("grid.points must be at least 2".into());
            }
        }
        if let Some(s) = &self.sim {
            if s.replicates == 0 {
                return bad("sim.replicates must be at least 1".into());
            }
            self.ensemble_spec(s)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    fn ensemble_spec(&self, s: &SimConfig) -> Result<EnsembleSpec> {
        Ok(
            EnsembleSpec::from_measure(&self.h, self.c, s.n, s.big_n, s.noise, s.basis, s.seed)?
                .with_max_entries(s.max_entries),
        )
    }

    fn sim(&self) -> Result<&SimConfig> {
        self.sim
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs a [sim] table".into()))
    }

    /// Grid actually used: the configured one, or an automatically found
    /// window with the default number of points.
    pub fn resolve_grid(&self) -> Result<GridConfig> {
        if let Some(g) = &self.grid {
            return Ok(g.clone());
        }
        let (x_min, x_max) = density::auto_window(&self.h, self.c, self.v_target, &self.solver)?;
        Ok(GridConfig {
            x_min,
            x_max,
            points: DEFAULT_GRID_POINTS,
        })
    }
}

/// Sizes the global rayon pool from `SPECTRAL_IPN_THREADS` (all cores when
/// unset). Safe to call more than once; only the first call takes effect.
pub fn init_thread_pool() -> Result<()> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&t| t > 0)
            .ok_or_else(|| {
                Error::Config(format!("{THREADS_ENV} = {v:?} is not a positive integer"))
            })?,
        Err(_) => 0,
    };
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
    {
        log::debug!("thread pool already initialized: {e}");
    }
    Ok(())
}

/// Parses `RE,IM[;RE,IM…]`.
pub fn parse_z_list(text: &str) -> Result<Vec<UpperHalfPoint>> {
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("{s:?} is not a number")))
    };
    text.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (re, im) = p
                .split_once(',')
                .ok_or_else(|| Error::InvalidArgument(format!("{p:?} is not RE,IM")))?;
            UpperHalfPoint::new(parse(re)?, parse(im)?)
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|zs| {
            if zs.is_empty() {
                Err(Error::InvalidArgument("no evaluation points given".into()))
            } else {
                Ok(zs)
            }
        })
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

pub fn solve_csv(pairs: &[TransformPair]) -> String {
    let mut out = String::from("re_z,im_z,re_m,im_m,re_g,im_g,res_m,res_g,iters\n");
    for p in pairs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            num(p.z.re),
            num(p.z.im),
            num(p.m.re),
            num(p.m.im),
            num(p.g.re),
            num(p.g.im),
            num(p.residual_m),
            num(p.residual_g),
            p.iterations
        );
    }
    out
}

pub fn density_csv(curve: &DensityCurve) -> String {
    let mut out = String::from("x,f\n");
    for (x, f) in curve.grid.iter().zip(&curve.f) {
        let _ = writeln!(out, "{},{}", num(*x), num(*f));
    }
    out
}

pub fn atoms_csv(curve: &DensityCurve) -> String {
    let mut out = String::from("location,mass\n");
    for a in &curve.atoms {
        let _ = writeln!(out, "{},{}", num(a.location), num(a.mass));
    }
    out
}

pub fn histogram_csv(bars: &[(f64, f64)]) -> String {
    let mut out = String::from("bin_center,density\n");
    for (x, d) in bars {
        let _ = writeln!(out, "{},{}", num(*x), num(*d));
    }
    out
}

/// Solves at every `z` and writes `solve.csv`.
pub fn cmd_solve(cfg: &ExperimentConfig, zs: &[UpperHalfPoint]) -> Result<Vec<TransformPair>> {
    use rayon::prelude::*;
    let pairs = zs
        .par_iter()
        .map(|&z| solver::solve_at(z, &cfg.h, cfg.c, &cfg.solver, None))
        .collect::<Result<Vec<_>>>()?;
    write_file(&cfg.output_dir, "solve.csv", &solve_csv(&pairs))?;
    Ok(pairs)
}

#[derive(Debug, Clone)]
pub struct DensityRun {
    pub curve: DensityCurve,
    pub manifest: ExperimentConfig,
}

fn compute_density(cfg: &ExperimentConfig) -> Result<DensityRun> {
    let grid = cfg.resolve_grid()?;
    let curve = density::density_curve(
        &cfg.h,
        cfg.c,
        grid.x_min,
        grid.x_max,
        grid.points,
        cfg.v_target,
        &cfg.solver,
    )?;
    let manifest = ExperimentConfig {
        grid: Some(grid),
        ..cfg.clone()
    };
    Ok(DensityRun { curve, manifest })
}

fn write_density(dir: &Path, curve: &DensityCurve) -> Result<()> {
    write_file(dir, "density.csv", &density_csv(curve))?;
    write_file(dir, "atoms.csv", &atoms_csv(curve))?;
    Ok(())
}

/// Writes `density.csv`, `atoms.csv` and the manifest.
pub fn cmd_density(cfg: &ExperimentConfig) -> Result<DensityRun> {
    let run = compute_density(cfg)?;
    write_density(&cfg.output_dir, &run.curve)?;
    write_file(&cfg.output_dir, MANIFEST, &run.manifest.to_toml()?)?;
    Ok(run)
}

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub samples: Vec<EigenSample>,
    pub histogram: Vec<(f64, f64)>,
}

impl SimulationRun {
    pub fn pooled(&self) -> Vec<f64> {
        self.samples
            .iter()
            .flat_map(|s| s.eigs.iter().copied())
            .collect()
    }
}

fn compute_simulation(cfg: &ExperimentConfig) -> Result<SimulationRun> {
    let sim = cfg.sim()?;
    let spec = cfg.ensemble_spec(sim)?;
    let samples = ensemble::batch_sample(&spec, sim.replicates)?;
    let pooled: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.eigs.iter().copied())
        .collect();
    let histogram = stats::histogram(&pooled, stats::freedman_diaconis_bins(&pooled), None)?;
    Ok(SimulationRun { samples, histogram })
}

fn write_simulation(dir: &Path, run: &SimulationRun) -> Result<()> {
    for (r, s) in run.samples.iter().enumerate() {
        write_file(dir, &format!("eigs_{r:03}.csv"), &s.to_csv())?;
        write_file(dir, &format!("eigs_{r:03}.json"), &s.to_json()?)?;
    }
    write_file(dir, "histogram.csv", &histogram_csv(&run.histogram))?;
    Ok(())
}

/// Writes one eigenvalue CSV and JSON per replicate, `histogram.csv` of the
/// pooled sample, and the manifest.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<SimulationRun> {
    let run = compute_simulation(cfg)?;
    write_simulation(&cfg.output_dir, &run)?;
    write_file(&cfg.output_dir, MANIFEST, &cfg.to_toml()?)?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub n: usize,
    pub seed: u64,
    pub ks: f64,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    /// KS distance of all replicates pooled into one sample.
    pub pooled_ks: f64,
    pub pooled_n: usize,
    pub density: DensityRun,
    pub simulation: SimulationRun,
}

impl CompareReport {
    /// `n,seed,ks` per replicate, then a `pooled` row over all eigenvalues.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,seed,ks\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{}", r.n, r.seed, num(r.ks));
        }
        let _ = writeln!(out, "{},pooled,{}", self.pooled_n, num(self.pooled_ks));
        out
    }
}

/// Density, simulation and KS comparison in one run; writes every artifact of
/// `density` and `simulate` plus `compare.csv`.
pub fn compare(cfg: &ExperimentConfig) -> Result<CompareReport> {
    let sim = cfg.sim()?;
    let density = compute_density(cfg)?;
    let theory = stats::theory_cdf_builder(&density.curve)?;
    let simulation = compute_simulation(cfg)?;

    let rows = simulation
        .samples
        .iter()
        .enumerate()
        .map(|(r, s)| {
            let ecdf = EmpiricalCDF::new(s.eigs.clone())?;
            Ok(CompareRow {
                n: s.eigs.len(),
                seed: derive_seed(sim.seed, r),
                ks: stats::ks_distance(&ecdf, |x| theory.eval(x)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pooled = EmpiricalCDF::new(simulation.pooled())?;
    let pooled_ks = stats::ks_distance(&pooled, |x| theory.eval(x));

    let report = CompareReport {
        rows,
        pooled_ks,
        pooled_n: pooled.len(),
        density,
        simulation,
    };
    let dir = &cfg.output_dir;
    write_density(dir, &report.density.curve)?;
    write_simulation(dir, &report.simulation)?;
    write_file(dir, "compare.csv", &report.to_csv())?;
    write_file(dir, MANIFEST, &report.density.manifest.to_toml()?)?;
    Ok(report)
}

/// [`compare`], failing with [`Error::ThresholdBreach`] when the pooled KS
/// exceeds `threshold`. The report is written either way.
pub fn cmd_compare(cfg: &ExperimentConfig, threshold: f64) -> Result<CompareReport> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "KS threshold {threshold} must be nonnegative"
        )));
    }
    let report = compare(cfg)?;
    if report.pooled_ks > threshold {
        return Err(Error::ThresholdBreach {
            ks: report.pooled_ks,
            threshold,
        });
    }
    Ok(report)
}
