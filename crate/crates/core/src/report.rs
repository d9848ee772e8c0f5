//! Residual reports, the JSON envelope written by the CLI, and CSV export.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The premise of the identity does not hold; the residual is reported anyway.
    HypothesisViolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsResidual {
    pub epsilon: f64,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub terms_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tail_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub identity: String,
    pub per_epsilon: Vec<EpsResidual>,
    pub max_residual: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

impl ResidualReport {
    /// Verdict is `Pass` iff every residual is finite and at most `tolerance`.
    pub fn new(identity: impl Into<String>, per_epsilon: Vec<EpsResidual>, tolerance: f64) -> Self {
        let max_residual = per_epsilon.iter().map(|r| r.residual).fold(0.0, |a: f64, b| if b.is_nan() { f64::NAN } else { a.max(b) });
        let ok = max_residual.is_finite() && max_residual <= tolerance;
        ResidualReport {
            identity: identity.into(),
            per_epsilon,
            max_residual,
            tolerance,
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("identity,epsilon,residual,terms_used,tail_bound\n");
        for r in &self.per_epsilon {
            let opt = |v: Option<String>| v.unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                self.identity,
                fmt_f64(r.epsilon),
                fmt_f64(r.residual),
                opt(r.terms_used.map(|n| n.to_string())),
                opt(r.tail_bound.map(fmt_f64))
            );
        }
        s
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Rows of `(label, values...)` as CSV with a header.
pub fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s += &r.join(",");
        s.push('\n');
    }
    s
}

/// The JSON document written for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub task: String,
    pub op: String,
    pub pass: bool,
    pub result: Value,
}

impl Envelope {
    pub fn new(config_hash: &str, task: &str, op: &str, pass: bool, result: Value) -> Self {
        Envelope {
            tool: "genkernel".into(),
            version: TOOL_VERSION.into(),
            config_hash: config_hash.into(),
            task: task.into(),
            op: op.into(),
            pass,
            result,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| crate::Error::Io(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| crate::Error::Config(format!("{}: {e}", path.display())))
    }
}

/// One line per report: task, op, verdict and the largest residual found anywhere in the result.
pub fn summary_table(reports: &[Envelope]) -> String {
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.task.clone(),
                r.op.clone(),
                if r.pass { "pass" } else { "fail" }.to_string(),
                max_residual(&r.result).map(fmt_f64).unwrap_or_default(),
                r.config_hash.clone(),
            ]
        })
        .collect();
    csv_table(&["task", "op", "verdict", "max_residual", "config_hash"], &rows)
}

fn max_residual(v: &Value) -> Option<f64> {
    match v {
        Value::Object(m) => {
            let own = m.get("max_residual").and_then(Value::as_f64);
            m.values().filter_map(max_residual).chain(own).reduce(f64::max)
        }
        Value::Array(a) => a.iter().filter_map(max_residual).reduce(f64::max),
        _ => None,
    }
}
