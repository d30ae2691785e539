mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use num_complex::Complex64;
use spectral_ipn::stats::{ks_distance, EmpiricalCDF};
use tempfile::TempDir;

use common::{mp_cdf, mp_ratio_one};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spectral-ipn"));
    cmd.env_remove("SPECTRAL_IPN_THREADS");
    cmd
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn solve_rows(stdout: &[u8]) -> Vec<Vec<f64>> {
    let text = String::from_utf8(stdout.to_vec()).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("re_z,im_z,re_m,im_m,re_g,im_g,res_m,res_g,iters")
    );
    lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn solve_prints_one_row_per_point() {
    let dir = TempDir::new().unwrap();
    let origin = write_config(
        dir.path(),
        "origin.toml",
        "c = 1.0\nH = [[0.0, 0.0, 1.0]]\n",
    );
    let out = run(bin()
        .args(["solve", "--config"])
        .arg(&origin)
        .args(["--z", "0,1"]));
    assert!(out.status.success());
    let rows = solve_rows(&out.stdout);
    assert_eq!(rows.len(), 1);
    assert!((rows[0][2]).abs() < 1e-12 && (rows[0][3] - 1.0).abs() < 1e-12);
    assert!(rows[0][4].abs() < 1e-12 && rows[0][5].abs() < 1e-12);

    let mp = write_config(dir.path(), "mp.toml", "c = 1.0\nH = [[0.0, 1.0, 1.0]]\n");
    let out = run(bin()
        .args(["solve", "--config"])
        .arg(&mp)
        .args(["--z", "0,1;2.5,0.25"]));
    assert!(out.status.success());
    for row in solve_rows(&out.stdout) {
        let oracle = mp_ratio_one(Complex64::new(row[0], row[1]));
        assert!((Complex64::new(row[2], row[3]) - oracle).norm() < 1e-9);
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = write_config(
        dir.path(),
        "bad.toml",
        "c = 0.5\nH = [[1.0, 1.0, 1.0]]\ncolour = 3\n",
    );
    let out = bin()
        .args(["density", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let missing = dir.path().join("missing.toml");
    let out = bin()
        .args(["density", "--config"])
        .arg(&missing)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let negative = write_config(dir.path(), "neg.toml", "c = 0.5\nH = [[-1.0, 1.0, 1.0]]\n");
    let out = bin()
        .args(["solve", "--config"])
        .arg(&negative)
        .args(["--z", "1,1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let stiff = write_config(
        dir.path(),
        "stiff.toml",
        "c = 0.5\nH = [[1.0, 1.0, 1.0]]\n[solver]\nmax_iter = 1\naccelerate = false\n",
    );
    let out = bin()
        .args(["solve", "--config"])
        .arg(&stiff)
        .args(["--z", "1,0.01"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let sim = write_config(
        dir.path(),
        "sim.toml",
        &format!(
            "c = 0.5\nH = [[1.0, 1.0, 1.0]]\noutput_dir = {:?}\n[sim]\nn = 100\nN = 200\nreplicates = 2\n",
            dir.path().join("cmp")
        ),
    );
    let out = bin()
        .args(["compare", "--config"])
        .arg(&sim)
        .args(["--ks-threshold", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    // the report is written before the breach is reported
    let report = fs::read_to_string(dir.path().join("cmp/compare.csv")).unwrap();
    assert!(report.starts_with("n,seed,ks\n"));
    assert_eq!(report.lines().count(), 4);

    let out = run(bin()
        .args(["compare", "--config"])
        .arg(&sim)
        .args(["--ks-threshold", "1"]));
    assert_eq!(out.status.code(), Some(0));
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv" || e == "json"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "fig2.toml",
        "c = 0.5\nH = [[0.5, 1.0, 0.5], [2.8, 1.0, 0.5]]\n\
         [grid]\nx_min = 0.0\nx_max = 7.0\npoints = 150\n\
         [sim]\nn = 120\nN = 240\nbasis = \"random\"\nreplicates = 3\nseed = 9\n",
    );
    let mut snaps = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = dir.path().join(format!("t{threads}"));
        let out = run(bin()
            .env("SPECTRAL_IPN_THREADS", threads)
            .args(["compare", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out_dir)
            .args(["--ks-threshold", "1"]));
        assert!(out.status.success());
        snaps.push(snapshot(&out_dir));
    }
    assert!(snaps[0].len() >= 10);
    assert_eq!(snaps[0], snaps[1]);
}

#[test]
fn manifest_reproduces_density() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("first");
    let cfg = write_config(dir.path(), "fig1.toml", "c = 0.5\nH = [[1.0, 1.0, 1.0]]\n");
    assert!(run(bin()
        .args(["density", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&first))
    .status
    .success());

    let manifest = fs::read_to_string(first.join("manifest.toml")).unwrap();
    for key in ["x_min", "x_max", "points", "v_target", "damping", "tol"] {
        assert!(manifest.contains(key), "manifest lacks {key}:\n{manifest}");
    }
    let second = dir.path().join("second");
    assert!(run(bin()
        .args(["density", "--config"])
        .arg(first.join("manifest.toml"))
        .arg("--out")
        .arg(&second))
    .status
    .success());
    assert_eq!(snapshot(&first), snapshot(&second));
}

#[test]
fn simulate_writes_replicates_and_histogram() {
    let dir = TempDir::new().unwrap();
    let zero = write_config(
        dir.path(),
        "zero.toml",
        "c = 1.0\nH = [[0.0, 0.0, 1.0]]\n[sim]\nn = 1\nN = 1\n",
    );
    let out_dir = dir.path().join("zero");
    assert!(run(bin()
        .args(["simulate", "--config"])
        .arg(&zero)
        .arg("--out")
        .arg(&out_dir))
    .status
    .success());
    let eigs = fs::read_to_string(out_dir.join("eigs_000.csv")).unwrap();
    let values: Vec<f64> = eigs.lines().skip(1).map(|l| l.parse().unwrap()).collect();
    assert_eq!(values, vec![0.0]);
    assert!(out_dir.join("histogram.csv").exists());

    let mp = write_config(
        dir.path(),
        "mp.toml",
        "c = 0.5\nH = [[0.0, 1.0, 1.0]]\n[sim]\nn = 400\nN = 800\nseed = 4\n",
    );
    let out_dir = dir.path().join("mp");
    assert!(run(bin()
        .args(["simulate", "--config"])
        .arg(&mp)
        .arg("--out")
        .arg(&out_dir))
    .status
    .success());
    let eigs: Vec<f64> = fs::read_to_string(out_dir.join("eigs_000.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(eigs.len(), 400);
    let d = ks_distance(&EmpiricalCDF::new(eigs).unwrap(), mp_cdf(0.5));
    assert!(d <= 0.08, "KS = {d}");
    let histogram = fs::read_to_string(out_dir.join("histogram.csv")).unwrap();
    assert!(histogram.starts_with("bin_center,density\n"));
}
