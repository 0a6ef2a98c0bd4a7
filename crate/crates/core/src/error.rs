use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("trait constraint violated for species {species_id}: category `{category}` needs exactly one active trait, found {active}")]
    TraitConstraint {
        species_id: String,
        category: &'static str,
        active: usize,
    },

    #[error("duplicate species id `{0}`")]
    DuplicateId(String),

    #[error("inconsistent taxonomy: {0}")]
    Taxonomy(String),

    #[error("unknown species `{0}`")]
    UnknownSpecies(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("clip too short: {len} samples, need at least {needed}")]
    ClipTooShort { len: usize, needed: usize },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("empty training split: {0}")]
    EmptyTraining(String),

    #[error("infeasible scenario {scenario}: {reason}")]
    Infeasible { scenario: String, reason: String },

    #[error("no ranking for {0}")]
    MissingRanking(String),

    #[error("missing checkpoint {0}")]
    MissingCheckpoint(PathBuf),

    #[error("stage order violation: {0}")]
    StageOrder(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::MissingCheckpoint(_) => 2,
            Error::Infeasible { .. } | Error::EmptyTraining(_) => 3,
            _ => 1,
        }
    }
}
