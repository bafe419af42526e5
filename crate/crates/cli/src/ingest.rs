//! CSV to [`Sample`].

use std::path::Path;

use teffect_core::sample::ensure_valid;
use teffect_core::Sample;

use crate::config::ColumnRoles;
use crate::error::CliError;

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, CliError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| CliError::MissingColumn(name.to_string()))
}

fn number(record: &csv::StringRecord, idx: usize, row: usize, name: &str) -> Result<f64, CliError> {
    let raw = record.get(idx).unwrap_or("").trim();
    raw.parse::<f64>().map_err(|_| CliError::ParseError {
        row,
        col: name.to_string(),
        value: raw.to_string(),
    })
}

/// Reads outcome, treatment and covariate columns from any CSV reader and validates the
/// resulting sample. Treatments must be non-negative integers; every level from 0 up to
/// the largest must occur.
pub fn read_sample<R: std::io::Read>(reader: R, roles: &ColumnRoles, path: &Path) -> anyhow::Result<Sample> {
    let csv_err = |e: csv::Error| CliError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let y_col = column(&headers, &roles.outcome)?;
    let d_col = column(&headers, &roles.treatment)?;
    let covariates: Vec<String> = match &roles.covariates {
        Some(c) => c.clone(),
        None => headers
            .iter()
            .map(|h| h.trim().to_string())
            .filter(|h| *h != roles.outcome && *h != roles.treatment)
            .collect(),
    };
    if covariates.is_empty() {
        return Err(CliError::Config("no covariate columns".into()).into());
    }
    let x_cols = covariates.iter().map(|c| column(&headers, c)).collect::<Result<Vec<_>, _>>()?;

    let (mut y, mut d, mut x) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = i + 1;
        y.push(number(&rec, y_col, row, &roles.outcome)?);
        let t = number(&rec, d_col, row, &roles.treatment)?;
        if !(t >= 0.0 && t.fract() == 0.0) {
            return Err(CliError::ParseError {
                row,
                col: roles.treatment.clone(),
                value: rec.get(d_col).unwrap_or("").trim().to_string(),
            }
            .into());
        }
        d.push(t as usize);
        for (&c, name) in x_cols.iter().zip(&covariates) {
            x.push(number(&rec, c, row, name)?);
        }
    }
    if y.is_empty() {
        return Err(CliError::Config(format!("{} has no data rows", path.display())).into());
    }
    let sample = Sample::new(y, d, x, covariates.len())?;
    ensure_valid(&sample)?;
    Ok(sample)
}

/// [`read_sample`] on a file.
pub fn ingest_csv(path: &Path, roles: &ColumnRoles) -> anyhow::Result<Sample> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    read_sample(std::io::BufReader::new(file), roles, path)
}
