use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid degree sequence: {0}")]
    InvalidDegrees(String),
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
    #[error("total degree is zero")]
    ZeroTotalDegree,
    #[error("total degree {0} is odd")]
    OddTotalDegree(u64),
    #[error("vertex count must be positive")]
    EmptySequence,
    #[error("critical target infeasible: wanted nu_n = {target}, achievable range [{min}, {max}]")]
    InfeasibleTarget { target: f64, min: f64, max: f64 },
    #[error("retention probability {p} outside [0, 1]")]
    ProbabilityOutOfRange { p: f64 },
    #[error("nu_n = {0} must exceed 1")]
    NotSupercritical(f64),
    #[error("degenerate limit: eta = {0} must be positive")]
    DegenerateLimit(f64),
    #[error("graph is only partially matched ({0} open half-edges)")]
    PartialMatching(usize),
    #[error("exploration walk never reaches -2k for k = {0}")]
    CorruptTrace(usize),
    #[error("end time {end} precedes current time {start}")]
    TimeReversal { start: f64, end: f64 },
    #[error("coupled inputs misaligned: {0}")]
    Misaligned(String),
    #[error("sample must be non-empty")]
    EmptySample,
    #[error("metadata mismatch: {0}")]
    MetadataMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
