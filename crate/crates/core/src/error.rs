use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad parameter ranges, unknown enum values, inconsistent dimensions.
    #[error("configuration error: {0}")]
    Config(String),

    /// A scenario or unit violates one of its invariants.
    #[error("invalid {what}: {reason}")]
    Invalid { what: String, reason: String },

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// Tightened comfort band collapsed.
    #[error(
        "unit {unit_id}: robust comfort band is empty at period {period} \
         (lo {lo:.4} > hi {hi:.4}); reduce epsilon by at least {epsilon_reduction:.4}"
    )]
    EmptyComfortBand {
        unit_id: u64,
        period: usize,
        lo: f64,
        hi: f64,
        epsilon_reduction: f64,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("logistic fit is not identifiable: {0}")]
    NonIdentifiable(String),

    #[error("schedule fails validation: {}", .0.join("; "))]
    ScheduleValidation(Vec<String>),

    #[error("LP format error at line {line}: {reason}")]
    LpFormat { line: usize, reason: String },

    #[error("external solver: {0}")]
    ExternalSolver(String),
}

impl Error {
    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what: what.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
