//! `teffect report`: merge simulation CSVs into one table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use teffect_core::sim::report::{to_csv, CSV_HEADER};
use teffect_core::sim::runner::MAX_FAILURE_FRACTION;
use teffect_core::sim::CellSummary;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub estimand: String,
    pub estimator: String,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "R")]
    pub replications: usize,
    pub rate: Option<f64>,
    pub bias: Option<f64>,
    pub emp_sd: Option<f64>,
    pub est_sd: Option<f64>,
    pub truth: f64,
    pub failures: usize,
}

impl ReportRow {
    fn key(&self) -> (usize, usize, &str, &str) {
        (self.n, self.p, &self.estimand, &self.estimator)
    }

    fn to_cell(&self) -> CellSummary {
        CellSummary {
            estimand: self.estimand.clone(),
            estimator: self.estimator.clone(),
            n: self.n,
            p: self.p,
            replications: self.replications,
            rate: self.rate,
            bias: self.bias,
            emp_sd: self.emp_sd,
            est_sd: self.est_sd,
            truth: self.truth,
            truth_mc_se: f64::NAN,
            failures: self.failures,
            valid: self.failures as f64 <= MAX_FAILURE_FRACTION * self.replications as f64,
            mean_trimmed: None,
        }
    }
}

pub fn parse_report<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<ReportRow>, CliError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let found: Vec<&str> = headers.iter().collect();
    if found.join(",") != CSV_HEADER {
        return Err(CliError::SchemaMismatch(format!(
            "{}: header {:?}, expected {CSV_HEADER:?}",
            path.display(),
            found.join(",")
        )));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| CliError::SchemaMismatch(format!("{} row {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>, CliError> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_report(std::io::BufReader::new(file), path)
}

/// Concatenates reports in input order. Repeated cells must agree exactly and every
/// `(n, p, estimand)` must carry a single truth.
pub fn merge(reports: Vec<Vec<ReportRow>>) -> Result<Vec<ReportRow>, CliError> {
    let mut out: Vec<ReportRow> = Vec::new();
    let mut truths: BTreeMap<(usize, usize, String), f64> = BTreeMap::new();
    for row in reports.into_iter().flatten() {
        let tk = (row.n, row.p, row.estimand.clone());
        match truths.get(&tk) {
            Some(&t) if t.to_bits() != row.truth.to_bits() => {
                return Err(CliError::SchemaMismatch(format!(
                    "conflicting truths for {} at n = {}, p = {}: {t} vs {}",
                    row.estimand, row.n, row.p, row.truth
                )));
            }
            Some(_) => {}
            None => {
                truths.insert(tk, row.truth);
            }
        }
        match out.iter().find(|r| r.key() == row.key()) {
            Some(prev) if *prev != row => {
                return Err(CliError::SchemaMismatch(format!(
                    "{} {} at n = {}, p = {} appears with different values",
                    row.estimand, row.estimator, row.n, row.p
                )));
            }
            Some(_) => {}
            None => out.push(row),
        }
    }
    Ok(out)
}

pub fn cmd_report(paths: &[PathBuf]) -> Result<Vec<ReportRow>, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("report needs at least one CSV".into()));
    }
    merge(paths.iter().map(|p| read_report(p)).collect::<Result<Vec<_>, _>>()?)
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    to_csv(&rows.iter().map(ReportRow::to_cell).collect::<Vec<_>>())
}

/// `ANN-IPW` is method ANN with IPW weighting; labels without a dash apply to every
/// weighting.
fn split_label(label: &str) -> (&str, Option<&str>) {
    match label.split_once('-') {
        Some((m, w)) => (m, Some(w)),
        None => (label, None),
    }
}

fn push_unique<T: PartialEq>(v: &mut Vec<T>, x: T) {
    if !v.contains(&x) {
        v.push(x);
    }
}

/// Published-table layout per `p`: rows are estimand x weighting x metric, columns are
/// `n` x method.
pub fn report_table(rows: &[ReportRow]) -> String {
    const METRICS: [&str; 4] = ["rate", "bias", "emp_sd", "est_sd"];
    let mut ps = Vec::new();
    for r in rows {
        push_unique(&mut ps, r.p);
    }
    let mut s = String::new();
    for p in ps {
        let block: Vec<&ReportRow> = rows.iter().filter(|r| r.p == p).collect();
        let (mut ns, mut methods, mut estimands) = (Vec::new(), Vec::new(), Vec::new());
        for r in &block {
            push_unique(&mut ns, r.n);
            push_unique(&mut methods, split_label(&r.estimator).0);
            push_unique(&mut estimands, r.estimand.as_str());
        }
        let cols: Vec<(usize, &str)> = ns.iter().flat_map(|&n| methods.iter().map(move |&m| (n, m))).collect();
        let _ = writeln!(s, "p = {p}");
        let _ = write!(s, "{:<12} {:<6} {:<7}", "", "", "");
        for (n, m) in &cols {
            let _ = write!(s, " {:>14}", format!("{m} n={n}"));
        }
        s.push('\n');
        for est in estimands {
            let mut weightings = Vec::new();
            for r in block.iter().filter(|r| r.estimand == est) {
                if let Some(w) = split_label(&r.estimator).1 {
                    push_unique(&mut weightings, w);
                }
            }
            if weightings.is_empty() {
                weightings.push("-");
            }
            for w in &weightings {
                for metric in METRICS {
                    let _ = write!(s, "{:<12} {:<6} {:<7}", est, w, metric);
                    for (n, m) in &cols {
                        let cell = block.iter().find(|r| {
                            let (rm, rw) = split_label(&r.estimator);
                            r.estimand == est && r.n == *n && rm == *m && rw.is_none_or(|x| x == *w)
                        });
                        let v = cell.and_then(|r| match metric {
                            "rate" => r.rate,
                            "bias" => r.bias,
                            "emp_sd" => r.emp_sd,
                            _ => r.est_sd,
                        });
                        let text = v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into());
                        let _ = write!(s, " {text:>14}");
                    }
                    s.push('\n');
                }
            }
        }
        s.push('\n');
    }
    s
}
