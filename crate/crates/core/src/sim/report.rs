//! Tabular and JSON renderings of simulation summaries.

use std::fmt::Write as _;

use super::runner::{CellSummary, SimReport};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "estimand,estimator,n,p,R,rate,bias,emp_sd,est_sd,truth,failures";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per cell; absent metrics are empty fields. Floats use shortest round-trip form.
pub fn to_csv(cells: &[CellSummary]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            quote(&c.estimand),
            quote(&c.estimator),
            c.n,
            c.p,
            c.replications,
            opt(c.rate),
            opt(c.bias),
            opt(c.emp_sd),
            opt(c.est_sd),
            c.truth,
            c.failures
        );
    }
    out
}

/// Fixed-width console table.
pub fn to_table(cells: &[CellSummary]) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
    let mut out = format!(
        "{:<10} {:<8} {:>6} {:>3} {:>4} {:>6} {:>6} {:>7} {:>7} {:>7} {:>5}\n",
        "estimand", "method", "n", "p", "R", "rate", "bias", "emp_sd", "est_sd", "truth", "fail"
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{:<10} {:<8} {:>6} {:>3} {:>4} {:>6} {:>6} {:>7} {:>7} {:>7.3} {:>5}{}",
            c.estimand,
            c.estimator,
            c.n,
            c.p,
            c.replications,
            f(c.rate),
            f(c.bias),
            f(c.emp_sd),
            f(c.est_sd),
            c.truth,
            c.failures,
            if c.valid { "" } else { "  INVALID" }
        );
    }
    out
}

pub fn to_json(report: &SimReport) -> Result<String> {
    serde_json::to_string_pretty(report).map_err(|e| Error::InvalidConfig(format!("report serialization: {e}")))
}

pub fn from_json(text: &str) -> Result<SimReport> {
    serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("report parse: {e}")))
}
