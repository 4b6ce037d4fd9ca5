use std::io;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("{0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("unsupported schema version `{found}` (expected `{expected}`)")]
    SchemaVersion { found: String, expected: &'static str },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("convex solver stopped after {iterations} Newton iterations (residual {residual:.3e})")]
    MaxIter { iterations: usize, residual: f64 },

    #[error("no strictly feasible starting point: {0}")]
    NoInterior(String),

    #[error("{0}")]
    Parse(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
