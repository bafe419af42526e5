use std::path::PathBuf;

use thiserror::Error;

/// Input and configuration failures. All of these map to exit code 1.
#[derive(Debug, Error)]
pub enum CliError {
    /// `row` counts data rows from 1; the header is not a row.
    #[error("parse error at row {row}, column {col}: {value:?} is not a number")]
    ParseError { row: usize, col: String, value: String },

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed csv {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("usage: {0}")]
    Usage(String),
}

/// Exit status for a failed command: 1 for bad input or configuration, 2 otherwise.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<CliError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<teffect_core::Error>() {
            use teffect_core::Error as E;
            return match e {
                E::ValidationFailed(_) | E::InvalidConfig(_) | E::DimensionMismatch { .. } | E::ShapeMismatch(_) => 1,
                _ => 2,
            };
        }
    }
    2
}
