//! CSV rows, JSON documents and the run manifest.

use std::path::{Path, PathBuf};

use pblab::bounds::BoundReport;
use pblab::experiments::TrialRecord;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const TRIAL_HEADER: [&str; 16] = [
    "trial",
    "estimator",
    "n",
    "p",
    "rho",
    "noise",
    "sigma",
    "lambda",
    "lhs",
    "rhs_special1",
    "rhs_special2",
    "rhs_theorem_u05",
    "holds_special2",
    "kkt_residual",
    "fp_residual",
    "solve_ms",
];

pub const BOUND_HEADER: [&str; 16] = [
    "kind",
    "u",
    "candidate",
    "lhs",
    "rhs",
    "approximation",
    "kernel_term",
    "factor",
    "slack",
    "allowance",
    "holds",
    "certified",
    "dual",
    "penalty",
    "credit",
    "note",
];

/// Shortest decimal that parses back to the same `f64`; empty for NaN.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:?}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(fmt_f64).collect::<Vec<_>>().join(";")
}

pub fn trial_row(r: &TrialRecord, timing: bool) -> Vec<String> {
    vec![
        r.trial.to_string(),
        r.estimator.clone(),
        r.n.to_string(),
        r.p.to_string(),
        fmt_opt(r.rho),
        r.noise.clone(),
        fmt_f64(r.sigma),
        join(r.lambda.iter().copied()),
        fmt_f64(r.lhs),
        fmt_opt(r.rhs_special1),
        fmt_opt(r.rhs_special2),
        fmt_f64(r.rhs_theorem_u05),
        r.holds_special2.map(|b| b.to_string()).unwrap_or_default(),
        fmt_f64(r.kkt_residual),
        fmt_f64(r.fp_residual),
        if timing { fmt_f64(r.solve_ms) } else { String::new() },
    ]
}

pub fn bound_row(r: &BoundReport<f64>) -> Vec<String> {
    vec![
        serde_json::to_value(r.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        r.u.map(fmt_f64).unwrap_or_else(|| "0+".into()),
        r.candidate.clone(),
        fmt_f64(r.lhs),
        fmt_f64(r.rhs),
        fmt_f64(r.approximation),
        fmt_f64(r.kernel_term),
        fmt_f64(r.factor),
        fmt_f64(r.slack),
        fmt_f64(r.allowance),
        r.holds.to_string(),
        r.certified.to_string(),
        join(r.per_term.iter().map(|t| t.dual)),
        join(r.per_term.iter().map(|t| t.penalty)),
        join(r.per_term.iter().map(|t| t.credit)),
        r.note.clone().unwrap_or_default(),
    ]
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// SHA-256 of the configuration's canonical JSON (object keys sorted).
pub fn config_hash<T: Serialize>(config: &T) -> String {
    // serde_json's map is ordered by key, so this form does not depend on
    // the key order of the input file.
    let value = serde_json::to_value(config).expect("configuration serializes");
    let canonical = serde_json::to_string(&value).expect("json value serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub exit_code: i32,
    pub outputs: Vec<PathBuf>,
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0, 1e-300, 123456789.125, -2.5e17, f64::MIN_POSITIVE] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(f64::NAN), "");
    }

    #[test]
    fn hash_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"b": 1, "a": [1, 2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"a": [1, 2], "b": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        let c: serde_json::Value = serde_json::from_str(r#"{"a": [2, 1], "b": 1}"#).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }
}
