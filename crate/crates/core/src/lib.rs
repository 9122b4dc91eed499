//! Trace-driven simulator of proactive content caching at small-cell base
//! stations.
//!
//! The pipeline: ingest (or synthesize) a request trace, assign requests to
//! cells, build a sparse cell×content popularity matrix, estimate missing
//! entries with regularized-SVD collaborative filtering, place contents
//! greedily under per-cell storage budgets, and replay the trace against the
//! placement under finite backhaul and wireless capacities.
//!
//! Modules map onto pipeline stages:
//! - [`trace`]: parsing, synthesis, cell assignment, descriptive stats
//! - [`popularity`]: rating matrices, train/test splits, SGD factorization
//! - [`placement`]: greedy caching decisions plus brute-force oracles
//! - [`simcore`]: fluid processor-sharing replay and the two metrics
//! - [`experiments`]: sweep drivers, config files, CSV emission

pub mod experiments;
pub mod placement;
pub mod popularity;
pub mod simcore;
pub mod trace;

use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged { epoch: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
