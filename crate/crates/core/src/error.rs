use std::path::PathBuf;

use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}", fmt_violations(.0))]
    Validation(Vec<Violation>),

    #[error("derivation failed for sample {sample_id}: {rule}")]
    Derivation { sample_id: String, rule: String },

    #[error("pairing failed for category {category:?}: {reason}")]
    Pairing { category: String, reason: String },

    #[error("join failed: {0}")]
    Join(String),

    #[error(transparent)]
    Metric(#[from] MetricError),

    #[error("aggregation failed: {0}")]
    Aggregate(String),

    #[error(transparent)]
    Correlation(#[from] CorrelationError),

    #[error("csv output")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("choice index {index} out of range for {len} choices")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("probability {value} outside [0, 1] in {field}")]
    OutOfRange { field: &'static str, value: f64 },

    #[error("probability vectors have mismatched lengths ({mc} vs {yn})")]
    LengthMismatch { mc: usize, yn: usize },

    #[error("at least 2 choices required, got {0}")]
    TooFewChoices(usize),

    #[error("ground truth required but absent")]
    MissingGroundTruth,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrelationError {
    #[error("input lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("at least 3 observations required, got {0}")]
    TooFewObservations(usize),

    #[error("undefined correlation: zero variance")]
    Undefined,

    #[error("summary for model {0:?} lacks ground-truth metrics")]
    MissingMetric(String),

    #[error("summaries span multiple datasets ({0:?} and {1:?})")]
    MixedDatasets(String, String),
}

fn fmt_violations(v: &[Violation]) -> String {
    let mut out = format!("{} validation violation(s)", v.len());
    for violation in v {
        out.push_str("\n  ");
        out.push_str(&violation.to_string());
    }
    out
}
