use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sketchsolve::cli::BenchSummary;
use sketchsolve::io::{write_matrix_market, write_vector, MtxSymmetry};
use sketchsolve::linalg::{DenseMatrix, Matrix};
use sketchsolve::rates::RateReport;
use tempfile::TempDir;

fn sketchsolve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sketchsolve"))
        .args(args)
        .env("SKETCHSOLVE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn iterations(o: &Output) -> usize {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix("iterations: "))
        .expect("iteration line")
        .trim()
        .parse()
        .unwrap()
}

fn write_mtx(dir: &Path, name: &str, m: DenseMatrix) -> PathBuf {
    let path = dir.join(name);
    write_matrix_market(&path, &Matrix::Dense(m), MtxSymmetry::General).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn rk_on_identity() {
    let dir = TempDir::new().unwrap();
    let id3 = write_mtx(dir.path(), "id3.mtx", DenseMatrix::identity(3));
    let o = sketchsolve(&["solve", "--method", "rk", "--matrix", p(&id3), "--consistent-random", "--tol", "1e-12", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(iterations(&o) <= 200);
}

#[test]
fn newton_full_block_is_one_step() {
    let o = sketchsolve(&[
        "solve", "--method", "newton", "--block", "full", "--generate", "sprandsym:40:0.2:0.1", "--tol", "1e-10",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(iterations(&o), 1);
}

#[test]
fn cd_pd_rejects_nonsymmetric() {
    let dir = TempDir::new().unwrap();
    let a = write_mtx(
        dir.path(),
        "nonsymmetric.mtx",
        DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![0.0, 3.0]]),
    );
    let o = sketchsolve(&["solve", "--method", "cd-pd", "--matrix", p(&a), "--consistent-random"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("symmetric"), "{}", stderr(&o));
}

#[test]
fn input_errors_exit_one() {
    let missing = sketchsolve(&["solve", "--method", "rk", "--matrix", "/nonexistent/a.mtx", "--consistent-random"]);
    assert_eq!(missing.status.code(), Some(1));
    let unknown = sketchsolve(&["solve", "--method", "rk", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(1));
    let no_rhs = sketchsolve(&["solve", "--method", "rk", "--matrix", "x.mtx"]);
    assert_eq!(no_rhs.status.code(), Some(1));
}

#[test]
fn explicit_rhs_and_solution_file() {
    let dir = TempDir::new().unwrap();
    let a = write_mtx(dir.path(), "a.mtx", DenseMatrix::from_rows(&[vec![4.0, 1.0], vec![1.0, 3.0]]));
    let rhs = dir.path().join("b.mtx");
    write_vector(&rhs, &[1.0, 2.0]).unwrap();
    let sol = dir.path().join("x.mtx");
    let o = sketchsolve(&[
        "solve", "--method", "cd-pd", "--matrix", p(&a), "--rhs", p(&rhs), "--tol", "1e-12", "--solution", p(&sol),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let x = sketchsolve::io::read_vector(&sol).unwrap();
    assert!((x[0] - 1.0 / 11.0).abs() < 1e-10 && (x[1] - 7.0 / 11.0).abs() < 1e-10);
}

#[test]
fn budget_exhaustion_exits_two() {
    let o = sketchsolve(&["solve", "--method", "rk", "--generate", "gaussian:40x10", "--tol", "1e-14", "--max-iters", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("max-iterations"));
}

#[test]
fn logs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = sketchsolve(&[
            "solve", "--method", "block-rk", "--generate", "sprandn:60x20:0.3:0.2", "--seed", "11", "--no-timing", "--out",
            p(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read(out).unwrap()
    };
    let first = run("a.csv");
    assert_eq!(first, run("b.csv"));
    assert!(String::from_utf8(first).unwrap().starts_with("iter,rel_residual"));
}

#[test]
fn rate_of_uniform_rows_on_identity() {
    let dir = TempDir::new().unwrap();
    let id = write_mtx(dir.path(), "id5.mtx", DenseMatrix::identity(5));
    let o = sketchsolve(&["rate", "--method", "rk", "--matrix", p(&id), "--consistent-random", "--probs", "uniform"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: RateReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((r.rho - 0.8).abs() < 1e-12);
    assert!((r.rho_convenient.unwrap() - 0.8).abs() < 1e-12);
}

#[test]
fn rate_of_cd_pd_matches_trace_formula() {
    let dir = TempDir::new().unwrap();
    let a = DenseMatrix::from_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 2.0]]);
    let lmin = sketchsolve::linalg::symmetric_eigen(&a).unwrap().eigenvalues[0];
    let path = write_mtx(dir.path(), "spd.mtx", a);
    let out = dir.path().join("rate.json");
    let o = sketchsolve(&["rate", "--method", "cd-pd", "--matrix", p(&path), "--consistent-random", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: RateReport = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!((r.rho_convenient.unwrap() - (1.0 - lmin / 9.0)).abs() < 1e-12);
    assert!(r.rho_lower_bound <= r.rho);
}

#[test]
fn rate_needs_samples_for_gaussian() {
    let o = sketchsolve(&["rate", "--method", "gk", "--generate", "gaussian:20x4"]);
    assert_eq!(o.status.code(), Some(1));
    let o = sketchsolve(&["rate", "--method", "gk", "--generate", "gaussian:20x4", "--mc-samples", "4000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r: RateReport = serde_json::from_str(&stdout(&o)).unwrap();
    let (lo, hi) = r.gaussian_bracket.unwrap();
    assert!(lo <= hi && r.monte_carlo.is_some());
}

#[test]
fn optimized_probabilities_beat_defaults() {
    let o = sketchsolve(&["optimize-probs", "--method", "rk", "--generate", "gaussian:10x4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let star = v["rho_star"].as_f64().unwrap();
    assert!(star <= v["rho_convenient"].as_f64().unwrap() + 1e-12);
    assert!(star <= v["rho_uniform"].as_f64().unwrap() + 1e-12);
    let p: Vec<f64> = serde_json::from_value(v["p_star"].clone()).unwrap();
    assert_eq!(p.len(), 10);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for key in ["iterations", "gap"] {
        assert!(v.get(key).is_some());
    }
}

#[test]
fn probability_file_feeds_solve() {
    let dir = TempDir::new().unwrap();
    let probs = dir.path().join("p.mtx");
    let o = sketchsolve(&["optimize-probs", "--method", "rk", "--generate", "gaussian:10x4", "--probs-out", p(&probs)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let o = sketchsolve(&["solve", "--method", "rk", "--generate", "gaussian:10x4", "--probs", p(&probs)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

fn bench_config(dir: &Path, trials: usize) -> PathBuf {
    let cfg = serde_json::json!({
        "problem": {"source": "generate", "generator": {"kind": "gaussian", "m": 200, "n": 50}},
        "methods": [{"method": "rk"}, {"method": "cd-ls"}],
        "trials": trials,
        "seed": 3
    });
    let path = dir.join("bench.json");
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn bench_rk_and_cd_ls() {
    let dir = TempDir::new().unwrap();
    let cfg = bench_config(dir.path(), 8);
    let out = dir.path().join("out");
    let o = sketchsolve(&["bench", "--config", p(&cfg), "--out", p(&out), "--overlay-theory"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: BenchSummary = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.methods.len(), 2);
    for m in &summary.methods {
        assert_eq!(m.converged, m.trials, "{}", m.label);
        let rho = m.rho_theory.unwrap();
        let csv = std::fs::read_to_string(out.join(&m.bands_file)).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "iter,q05,median,q95,mean,theory");
        for line in lines.take(50) {
            let cells: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            let expect = rho.powi(cells[0] as i32) * 100.0;
            assert!((cells[5] - expect).abs() <= 1e-12 * expect.max(1.0));
        }
    }
    let rk = &summary.methods[0];
    let predicted = rk.predicted_iterations.unwrap() as f64;
    let median = rk.iterations_median.unwrap();
    assert!(median <= 4.0 * predicted && median >= predicted / 4.0, "{median} vs {predicted}");
}

#[test]
fn bench_bands_have_five_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = serde_json::json!({
        "problem": {"source": "generate", "generator": {"kind": "gaussian", "m": 30, "n": 5}},
        "methods": [{"method": "rk"}],
        "trials": 100,
        "quantiles": [0.05, 0.95],
        "tolerance": 1e-3
    });
    let path = dir.path().join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = dir.path().join("out");
    let o = sketchsolve(&["bench", "--config", p(&path), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("rk.bands.csv")).unwrap();
    assert!(csv.lines().all(|l| l.split(',').count() == 5));
}

#[test]
fn bench_is_reproducible_and_reports_trials() {
    let dir = TempDir::new().unwrap();
    let cfg = bench_config(dir.path(), 3);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = sketchsolve(&["bench", "--config", p(&cfg), "--out", p(&out), "--no-timing", "--keep-logs"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["rk.bands.csv", "cd-ls.bands.csv", "summary.json", "rk/trial-0002.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn bench_trial_errors_name_the_method() {
    let dir = TempDir::new().unwrap();
    let cfg = serde_json::json!({
        "problem": {"source": "generate", "generator": {"kind": "gaussian", "m": 20, "n": 5}},
        "methods": [{"method": "cd-pd"}],
        "trials": 2
    });
    let path = dir.path().join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let o = sketchsolve(&["bench", "--config", p(&path), "--out", p(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("method cd-pd"), "{}", stderr(&o));
}

#[test]
fn verify_suites() {
    let o = sketchsolve(&["verify", "--suite", "equivalence", "--suite", "projection", "--instances", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("equivalence") && text.contains("projection") && text.contains("PASS"));
    let bad = sketchsolve(&["verify", "--suite", "no-such-suite"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn verify_default_run_passes() {
    let o = sketchsolve(&["verify", "--instances", "200", "--samples", "20000"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).matches("PASS").count(), 7);
}
