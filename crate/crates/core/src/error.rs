//! Crate-wide error type.

use crate::nn::NetRole;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("validation: {0}")]
    Validation(String),

    #[error("equality constraint matrix rank deficient after {attempts} attempts")]
    RankDeficient { attempts: usize },

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("complementarity partials singular: eps = 0 and lambda = g = 0")]
    FbSingularPoint,

    #[error("optimizer step rejected: non-finite gradient")]
    NonFiniteGradient,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("weight file role mismatch: expected {expected}, found {found}")]
    RoleMismatch { expected: NetRole, found: NetRole },

    #[error("unsupported format version {found}, expected {expected}")]
    FormatVersion { expected: u32, found: u32 },

    #[error("oracle cache: {0}")]
    Cache(String),

    #[error("optimality gap undefined: reference objective within 1e-12 of zero")]
    GapUndefined,

    #[error("experiment stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad inputs or malformed files, as opposed to
    /// numerical breakdown at run time. Drives the process exit code.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::DimMismatch { .. }
            | Error::Validation(_)
            | Error::RoleMismatch { .. }
            | Error::FormatVersion { .. }
            | Error::Cache(_)
            | Error::GapUndefined
            | Error::Io(_)
            | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
