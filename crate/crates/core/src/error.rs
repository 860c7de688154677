use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Where in an input file a parse error happened.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Line(usize),
    Byte(usize),
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Line(l) => write!(f, "line {l}"),
            Location::Byte(b) => write!(f, "byte {b}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {location}: {message}")]
    Parse {
        path: PathBuf,
        location: Location,
        message: String,
    },

    #[error("unsupported mesh format for {0} (expected .off or .ply)")]
    UnsupportedFormat(PathBuf),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("triangle {index} is degenerate (area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("mesh has zero total area")]
    ZeroArea,

    #[error("zero accumulated normal at vertex {0}")]
    ZeroNormal(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("{what} {value} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("sinkhorn kernel underflow at {axis} {index}; increase the entropy weight or use the log-domain solver")]
    Underflow { axis: &'static str, index: usize },

    #[error("linear system is rank deficient: {0}")]
    RankDeficient(String),

    #[error("no stored match for pair ({0}, {1})")]
    MissingPair(String, String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unreachable node {to} from {from} in shape graph")]
    Unreachable { from: usize, to: usize },

    #[error("cache file {path}: {message}")]
    Cache { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage} stage failed for {subject}: {source}")]
    Stage {
        stage: &'static str,
        subject: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad user input rather than an internal failure.
    pub fn is_validation(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_validation();
        }
        matches!(
            self,
            Error::Parse { .. }
                | Error::UnsupportedFormat(_)
                | Error::InvalidMesh(_)
                | Error::DegenerateTriangle { .. }
                | Error::ZeroArea
                | Error::DimensionMismatch(_)
                | Error::OutOfRange { .. }
                | Error::MissingPair(..)
                | Error::Precondition(_)
                | Error::Json(_)
        )
    }
}
