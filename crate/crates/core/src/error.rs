use std::path::PathBuf;

/// Errors raised anywhere in the design pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed voxel header: {0}")]
    MalformedHeader(String),

    #[error("payload size mismatch: expected {expected} bytes, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("unknown phase value {value} at voxel {index}")]
    UnknownPhase { value: u8, index: usize },

    #[error("grid dimensions differ: {left:?} vs {right:?}")]
    DimMismatch { left: [usize; 3], right: [usize; 3] },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("spectral density is identically zero for the given parameters")]
    DegenerateSdf,

    #[error("lattice Boltzmann run diverged at iteration {iteration} (max |u| = {max_velocity})")]
    Divergence { iteration: usize, max_velocity: f64 },

    #[error("covariance matrix is not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("degenerate dataset: {0}")]
    DegenerateData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("record error: {0}")]
    Record(String),
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
