use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A malformed row found while reading an input file.
#[derive(Debug, Clone, PartialEq)]
pub struct BadLine {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for BadLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Calibration pipeline stage, carried by [`Error::Stage`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Response,
    ConditionalResponse,
    VolumeImpact,
    Correlator,
    Solve,
    KernelFit,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Response => "response",
            Stage::ConditionalResponse => "conditional response",
            Stage::VolumeImpact => "volume impact fit",
            Stage::Correlator => "sign correlator",
            Stage::Solve => "kernel extraction",
            Stage::KernelFit => "kernel fit",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("no feasible cell to minimize over")]
    EmptyDomain,

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("{path}: {} malformed row(s); first: {}", .lines.len(), .lines.first().map(|l| l.to_string()).unwrap_or_default())]
    Ingest { path: PathBuf, lines: Vec<BadLine> },

    #[error("{stage} ({direction}): {source}")]
    Stage {
        stage: Stage,
        direction: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, stage: Stage, direction: &str) -> Self {
        Error::Stage {
            stage,
            direction: direction.to_string(),
            source: Box::new(self),
        }
    }

    /// The calibration stage that failed, if the error came out of the pipeline.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}
