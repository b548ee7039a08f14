use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pblab::model::{make_lasso, Problem};
use pblab::linalg::Matrix;
use pblab::tuning::lambda_max;

fn pblab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pblab"))
        .args(args)
        .current_dir(dir)
        .env_remove("PBLAB_LOG")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const TOY: &str = r#"{"x": [[1, 0], [0, 1], [1, 1]], "y": [1.5, -0.5, 1.0]}"#;

#[test]
fn solve_writes_a_converged_solution() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "toy.json", TOY);
    let o = pblab(dir.path(), &["solve", "--estimator", "lasso", "--lambda", "2.0", "--data", "toy.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let sol = json(&dir.path().join("solution.json"));
    assert!(sol["kkt_residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(sol["converged"], true);
    let m = json(&dir.path().join("manifest.json"));
    assert_eq!(m["command"], "solve");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 1);
}

#[test]
fn solve_at_lambda_max_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "toy.json", TOY);
    let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let prob = Problem::new(x, vec![1.5, -0.5, 1.0]).unwrap();
    let m = lambda_max(&make_lasso(2, 1.0).unwrap(), &prob).unwrap()[0];
    let lam = format!("{m:?}");
    let o = pblab(dir.path(), &["solve", "--estimator", "lasso", "--lambda", &lam, "--data", "toy.json"]);
    assert_eq!(code(&o), 0);
    let sol = json(&dir.path().join("solution.json"));
    for b in sol["beta"].as_array().unwrap() {
        assert_eq!(b.as_f64().unwrap(), 0.0);
    }
}

#[test]
fn malformed_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.json", r#"{"estimator": {"label": "lasso"}, "lamda": [1.0]}"#);
    let o = pblab(dir.path(), &["solve", "--config", "bad.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));
    write(dir.path(), "broken.json", "{\"estimator\": ");
    assert_eq!(code(&pblab(dir.path(), &["solve", "--config", "broken.json"])), 2);
    assert_eq!(code(&pblab(dir.path(), &["solve", "--estimator", "ridge", "--n", "5", "--p", "3"])), 2);
    // The manifest is written even when the command fails.
    assert_eq!(json(&dir.path().join("manifest.json"))["exit_code"], 2);
}

#[test]
fn tune_square_root_lasso_certifies_the_fixed_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = pblab(
        dir.path(),
        &["tune", "--estimator", "sqrt-lasso", "--n", "100", "--p", "50", "--sparsity", "2", "--amplitude", "0.5"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = json(&dir.path().join("tuning.json"));
    assert!(t["fixed_point_residual"].as_f64().unwrap() <= 1e-7);
    let lam = t["lambda"][0].as_f64().unwrap();
    assert!(lam > 0.0);
}

#[test]
fn verify_special2_holds_on_gaussian_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = pblab(dir.path(), &["verify", "--estimator", "lasso", "--n", "50", "--p", "100", "--mode", "special2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("bounds.csv")).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let row = rdr.records().next().unwrap().unwrap();
    let get = |k: &str| row[headers.iter().position(|h| h == k).unwrap()].to_string();
    assert_eq!(get("kind"), "special2");
    assert_eq!(get("holds"), "true");
    assert_eq!(get("certified"), "true");
}

#[test]
fn catalog_lists_every_estimator() {
    let dir = tempfile::tempdir().unwrap();
    let o = pblab(dir.path(), &["catalog"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let labels: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["label"].as_str().unwrap()).collect();
    for l in ["lasso", "sqrt-lasso", "group-lasso", "group-sqrt-lasso", "elastic-net", "slope", "fused", "trend-filter"] {
        assert!(labels.contains(&l), "{l}");
    }
}

#[test]
fn exit_code_contract() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // 3: one iteration is not enough.
    write(
        d,
        "short.json",
        r#"{"estimator": {"label": "lasso"}, "generator": {"n": 30, "p": 60}, "lambda": [1.0],
            "solver": {"max_iter": 1, "restarts": 0}}"#,
    );
    assert_eq!(code(&pblab(d, &["solve", "--config", "short.json"])), 3);
    // 4: Y = 0.
    write(d, "zero.json", r#"{"x": [[1, 0], [0, 1]], "y": [0, 0]}"#);
    assert_eq!(code(&pblab(d, &["solve", "--estimator", "lasso", "--lambda", "1", "--data", "zero.json"])), 4);
    // 4: zero noise makes every dual term vanish.
    write(d, "noiseless.json", r#"{"x": [[1, 0], [0, 1], [1, 1]], "beta_star": [1, 0], "eps": [0, 0, 0]}"#);
    assert_eq!(code(&pblab(d, &["tune", "--estimator", "lasso", "--data", "noiseless.json"])), 4);
    // 5: a heavily undertuned fit overfits the noise and breaks the bound.
    let o = pblab(
        d,
        &[
            "verify", "--estimator", "lasso", "--n", "20", "--p", "40", "--sparsity", "1", "--amplitude", "0.01",
            "--sigma", "3", "--lambda", "1",
        ],
    );
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(d.join("bounds.csv")).unwrap();
    assert!(text.contains("tuning mismatch"));
    // 2: c ≤ 1 is not allowed for the L_a bound.
    let o = pblab(d, &["verify", "--estimator", "lasso", "--n", "20", "--p", "10", "--mode", "la", "--c", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn log_level_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pblab"))
        .args(["catalog"])
        .current_dir(dir.path())
        .env("PBLAB_LOG", "verbose")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    let o = Command::new(env!("CARGO_BIN_EXE_pblab"))
        .args(["catalog"])
        .current_dir(dir.path())
        .env("PBLAB_LOG", "debug")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
}

const CAMPAIGN: &str = r#"{"campaigns": [
    {"estimator": {"label": "lasso"}, "n": 20, "p": 30, "trials": 6, "seed": 4},
    {"estimator": {"label": "fused"}, "n": 20, "p": 30, "trials": 4, "seed": 4,
     "noise": {"kind": "student_t", "df": 3, "scale": 1}, "design": {"kind": "equicorrelated", "rho": 0.5}}
]}"#;

const CAMPAIGN_REORDERED: &str = r#"{"campaigns": [
    {"seed": 4, "trials": 6, "p": 30, "n": 20, "estimator": {"label": "lasso"}},
    {"design": {"rho": 0.5, "kind": "equicorrelated"}, "noise": {"scale": 1, "df": 3, "kind": "student_t"},
     "seed": 4, "trials": 4, "p": 30, "n": 20, "estimator": {"label": "fused"}}
]}"#;

#[test]
fn campaign_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "c.json", CAMPAIGN);
    write(d, "r.json", CAMPAIGN_REORDERED);
    let a = pblab(d, &["campaign", "--config", "c.json", "--out-dir", "a", "--jobs", "1", "--omit-timing"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    let b = pblab(d, &["campaign", "--config", "r.json", "--out-dir", "b", "--jobs", "3", "--omit-timing"]);
    assert_eq!(code(&b), 0);
    let ra = std::fs::read(d.join("a/records.csv")).unwrap();
    let rb = std::fs::read(d.join("b/records.csv")).unwrap();
    assert_eq!(ra, rb);
    let ha = json(&d.join("a/manifest.json"))["config_hash"].clone();
    let hb = json(&d.join("b/manifest.json"))["config_hash"].clone();
    assert_eq!(ha, hb);

    let text = String::from_utf8(ra).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "trial,estimator,n,p,rho,noise,sigma,lambda,lhs,rhs_special1,rhs_special2,rhs_theorem_u05,\
         holds_special2,kkt_residual,fp_residual,solve_ms"
    );
    assert_eq!(text.lines().count(), 1 + 6 + 4);
    let summary = json(&d.join("a/summary.json"));
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["campaigns"][1]["summary"]["estimator"], "fused");

    // Timing is recorded unless omitted.
    let c = pblab(d, &["campaign", "--config", "c.json", "--out-dir", "c"]);
    assert_eq!(code(&c), 0);
    let timed = std::fs::read_to_string(d.join("c/records.csv")).unwrap();
    let row = timed.lines().nth(1).unwrap();
    assert!(!row.ends_with(','), "{row}");
}
