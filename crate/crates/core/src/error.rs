use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the reform library.
#[derive(Debug, Error)]
pub enum ReformError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("group `{0}` has no faces")]
    EmptyGroup(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("material {0} has no similarity defined; resolve it to wood or metal first")]
    UnresolvedMaterial(String),

    #[error("model `{model}` part `{part}` has no material tag")]
    UntaggedPart { model: String, part: String },

    #[error("part {part}: no candidate with target material {material}")]
    EmptyDomain { part: usize, material: String },

    #[error("factor graph: {0}")]
    FactorGraph(String),

    #[error("label space of {0} assignments exceeds the brute-force limit")]
    LabelSpaceTooLarge(u128),

    #[error("database is empty: {0}")]
    EmptyDatabase(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("no tagged exemplar contacts for joint category {0}")]
    NoJointExemplars(String),

    #[error("joint ({i},{j}): {message}")]
    Joint { i: usize, j: usize, message: String },

    #[error("infeasible refinement constraints at joint ({i},{j})")]
    InfeasibleRefinement { i: usize, j: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ReformError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ReformError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, ReformError>;
