//! End-to-end runs of the `condstein` binary.
//!
//! Golden files live in `tests/golden/`; set `CONDSTEIN_BLESS=1` to rewrite
//! them after an intended change.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_condstein");

const FINITE_MODEL: &str = r#"{
  "y_values": [0, 1],
  "y_weights": [0.4, 0.6],
  "families": [
    {"tag": "FiniteDiscrete", "params": {"support": [0, 1, 2], "weights": [0.2, 0.5, 0.3]}},
    {"tag": "FiniteDiscrete", "params": {"support": [0, 1, 2], "weights": [0.6, 0.1, 0.3]}}
  ]
}"#;

const MIXED_MODEL: &str = r#"{
  "y_values": [0, 1],
  "y_weights": [0.4, 0.6],
  "families": [
    {"tag": "FiniteDiscrete", "params": {"support": [0, 1, 2], "weights": [0.2, 0.5, 0.3]}},
    {"tag": "Poisson", "params": {"lambda": 2.0}}
  ]
}"#;

const GAUSSIAN_MODEL: &str = r#"{
  "y_values": [0],
  "y_weights": [1],
  "families": [{"tag": "Gaussian", "params": {"mean": 0, "variance": 1}}]
}"#;

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("condstein-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("CONDSTEIN_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Parses a `y,x,h,f,residual` table into rows of numbers.
fn solve_rows(text: &str) -> Vec<[f64; 5]> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("y,x,h,f,residual"));
    lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
            [v[0], v[1], v[2], v[3], v[4]]
        })
        .collect()
}

/// Canonical golden rendering: one row per line, 17 significant digits.
fn render(rows: &[[f64; 5]]) -> String {
    let mut out = String::from("y,x,h,f\n");
    for r in rows {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e}\n", r[0], r[1], r[2], r[3]));
    }
    out
}

fn golden(name: &str, actual: &str) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("CONDSTEIN_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    // compare numerically so the last ulp of a transcendental may differ
    for (line, (a, b)) in actual.lines().zip(expected.lines()).enumerate() {
        if line == 0 {
            assert_eq!(a, b);
            continue;
        }
        for (x, y) in a.split(',').zip(b.split(',')) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0), "{name} line {line}: {x} vs {y}");
        }
    }
    assert_eq!(actual.lines().count(), expected.lines().count(), "{name}: row count");
}

#[test]
fn solve_gaussian_step_matches_closed_form_and_golden() {
    let dir = workdir("solve-gauss");
    let model = write(&dir, "m.json", GAUSSIAN_MODEL);
    let out = dir.join("f.csv");
    let o = run(&["solve", "--model", s(&model), "--h", "step:0", "--grid", "-2:2:9", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = solve_rows(&std::fs::read_to_string(&out).unwrap());
    assert_eq!(rows.len(), 9);
    let at0 = rows.iter().find(|r| r[1] == 0.0).unwrap();
    assert!((at0[3] - (2.0 * std::f64::consts::PI).sqrt() / 4.0).abs() < 1e-12);
    assert!(rows.iter().all(|r| r[4] <= 1e-8));
    golden("solve_gaussian_step.csv", &render(&rows));
}

#[test]
fn solve_finite_support_matches_golden() {
    let dir = workdir("solve-finite");
    let model = write(&dir, "m.json", MIXED_MODEL);
    let out = dir.join("f.csv");
    let o = run(&["solve", "--model", s(&model), "--h", "interval:0.5:1.5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = solve_rows(&std::fs::read_to_string(&out).unwrap());
    // f vanishes at the left endpoint of every section
    for y in [0.0, 1.0] {
        assert_eq!(rows.iter().find(|r| r[0] == y && r[1] == 0.0).unwrap()[3], 0.0);
    }
    golden("solve_mixed_interval.csv", &render(&rows));
}

#[test]
fn solve_skips_points_outside_the_domain() {
    let dir = workdir("solve-domain");
    let model = write(&dir, "m.json", MIXED_MODEL);
    let out = dir.join("f.csv");
    let o = run(&["solve", "--model", s(&model), "--h", "const:1", "--grid", "-4:4:9", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = solve_rows(&std::fs::read_to_string(&out).unwrap());
    assert!(rows.iter().all(|r| r[1] >= 0.0));
    // constant source: h − E h = 0, so f = 0 up to rounding in E h
    assert!(rows.iter().all(|r| r[3].abs() < 1e-12));
}

#[test]
fn residual_breach_exits_with_3() {
    let dir = workdir("solve-tol");
    let model = write(&dir, "m.json", GAUSSIAN_MODEL);
    let out = dir.join("f.csv");
    let o = run(&["solve", "--model", s(&model), "--h", "poly:0:1:1", "--grid", "-3:3:31", "--tol", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("residual"));
}

#[test]
fn invalid_input_exits_with_2() {
    let dir = workdir("invalid");
    let good = write(&dir, "m.json", FINITE_MODEL);
    let missing = write(&dir, "missing.json", r#"{"y_values": [0], "y_weights": [1]}"#);
    let negative = write(
        &dir,
        "neg.json",
        r#"{"y_values": [0], "y_weights": [1], "families": [{"tag": "Gaussian", "params": {"mean": 0, "variance": -1}}]}"#,
    );
    let samples = write(&dir, "s.csv", "x,y\n0,0\n1,oops\n");
    let out = dir.join("o.csv");

    let o = run(&["check", "--model", s(&missing), "--samples", s(&samples)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("families"), "{}", stderr(&o));

    let o = run(&["solve", "--model", s(&negative), "--h", "step:0", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("families[0]"), "{}", stderr(&o));

    let o = run(&["check", "--model", s(&good), "--samples", s(&samples)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let o = run(&["check", "--model", s(&dir.join("nope.json")), "--exact", s(&good)]);
    assert_eq!(code(&o), 2);

    assert_eq!(code(&run(&["solve", "--model", s(&good), "--h", "wave:1", "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["validate", "--suite", "everything"])), 2);
    assert_eq!(code(&run(&["simulate", "--model", s(&good), "--n", "10", "--swap", "0,7", "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert!(!out.exists(), "failed runs must not leave output behind");
}

#[test]
fn help_and_version_exit_cleanly() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn contaminated_exact_joint_is_rejected_with_tight_tv() {
    let dir = workdir("exact");
    let model = write(&dir, "m.json", FINITE_MODEL);
    // conditionals at y = 1 contaminated by a point mass at x = 2 with ε = 0.1:
    // (0.6, 0.1, 0.3) → (0.54, 0.09, 0.37), then scaled by μ_Y(1) = 0.6
    let joint = write(
        &dir,
        "j.json",
        r#"{"x_grid": [0, 1, 2], "y_grid": [0, 1],
            "mass": [[0.08, 0.324], [0.2, 0.054], [0.12, 0.222]]}"#,
    );
    let o = run(&["check", "--model", s(&model), "--exact", s(&joint)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["mode"], "exact");
    assert_eq!(r["characterization"], false);
    assert_eq!(r["y_marginal_matches"], true);
    // ½Σ|p − q| only differs in the y = 1 column: ½·0.6·(0.06 + 0.01 + 0.07)
    let expected_tv = 0.5 * 0.6 * (0.06 + 0.01 + 0.07);
    let oracle = r["oracle"]["tv"].as_f64().unwrap();
    assert!((oracle - expected_tv).abs() < 1e-12);
    assert!((r["tv"]["sup"].as_f64().unwrap() - oracle).abs() <= 1e-8);
    assert!(r["w"]["sup"].as_f64().unwrap() <= r["oracle"]["w"].as_f64().unwrap() + 1e-8);
    assert_eq!(r["model_digest"].as_str().unwrap().len(), 64);

    // the model's own table characterizes
    let own = write(&dir, "own.json", r#"{"x_grid": [0, 1, 2], "y_grid": [0, 1], "mass": [[0.08, 0.36], [0.2, 0.06], [0.12, 0.18]]}"#);
    let out = dir.join("r.json");
    let o = run(&["check", "--model", s(&model), "--exact", s(&own), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["characterization"], true);
    assert!(r["tv"]["sup"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn simulated_samples_check_inside_error_band() {
    let dir = workdir("selftest");
    let model = write(&dir, "m.json", MIXED_MODEL);
    let samples = dir.join("s.csv");
    let o = run(&["simulate", "--model", s(&model), "--n", "20000", "--seed", "3", "--out", s(&samples)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = run(&["check", "--model", s(&model), "--samples", s(&samples)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["mode"], "empirical");
    assert_eq!(r["n"], 20000);
    for member in r["w"]["per_function"].as_array().unwrap() {
        if member["label"] == "+x" || member["label"] == "-x" {
            let (v, se) = (member["value"].as_f64().unwrap(), member["std_error"].as_f64().unwrap());
            assert!(v.abs() <= 4.0 * se, "{member}");
        }
    }
    let tv = &r["tv"]["per_function"][0];
    assert!(tv["value"].as_f64().unwrap().abs() <= 4.0 * tv["std_error"].as_f64().unwrap());
}

#[test]
fn simulate_is_deterministic_and_perturbations_change_output() {
    let dir = workdir("simulate");
    let model = write(&dir, "m.json", FINITE_MODEL);
    let paths: Vec<PathBuf> = (0..4).map(|i| dir.join(format!("s{i}.csv"))).collect();
    let base = ["simulate", "--model", s(&model), "--n", "500", "--seed", "9", "--out"];
    let with = |extra: &[&str], out: &Path| {
        let mut a: Vec<&str> = base.to_vec();
        a.push(s(out));
        a.extend_from_slice(extra);
        assert_eq!(code(&run(&a)), 0);
        std::fs::read_to_string(out).unwrap()
    };
    let a = with(&[], &paths[0]);
    let b = with(&[], &paths[1]);
    let swapped = with(&["--swap", "0,1"], &paths[2]);
    let shifted = with(&["--mean-shift", "0.5"], &paths[3]);
    assert_eq!(a, b);
    assert_ne!(a, swapped);
    assert!(shifted.lines().skip(1).all(|l| l.starts_with("0.5,") || l.starts_with("1.5,") || l.starts_with("2.5,")));
    let contaminated = dir.join("c.csv");
    let o = run(&[
        "simulate", "--model", s(&model), "--n", "500", "--seed", "9", "--contaminate", "1", "--noise",
        r#"{"support": [7], "weights": [1]}"#, "--out", s(&contaminated),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(std::fs::read_to_string(&contaminated).unwrap().lines().skip(1).all(|l| l.starts_with("7,")));
}

#[test]
fn validate_identity_suite_passes() {
    let dir = workdir("validate");
    let out = dir.join("v.json");
    let o = run(&["validate", "--suite", "identity", "--seed", "7", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("identity"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["seed"], 7);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = workdir("threads");
    let model = write(&dir, "m.json", MIXED_MODEL);
    let samples = dir.join("s.csv");
    assert_eq!(code(&run(&["simulate", "--model", s(&model), "--n", "3000", "--out", s(&samples)])), 0);
    let args = ["check", "--model", s(&model), "--samples", s(&samples)];
    let one = run_env(&args, &[("CONDSTEIN_THREADS", "1")]);
    let four = run_env(&args, &[("CONDSTEIN_THREADS", "4")]);
    assert_eq!(code(&one), 0);
    assert_eq!(one.stdout, four.stdout);
    let bad = run_env(&args, &[("CONDSTEIN_THREADS", "zero")]);
    assert_eq!(code(&bad), 2);
    assert!(stderr(&bad).contains("CONDSTEIN_THREADS"));
}
