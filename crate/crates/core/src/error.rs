use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: transmitter and receiver are {distance:.3e} m apart")]
    DegenerateGeometry { distance: f64 },

    #[error("pose ({x:.3}, {y:.3}, {z:.3}) lies outside the {length}x{width}x{height} m room")]
    OutsideRoom {
        x: f64,
        y: f64,
        z: f64,
        length: f64,
        width: f64,
        height: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(
        "channel matrix is rank deficient: {rank} of {rows} user rows are independent \
         (singular value ratio {ratio:.3e})"
    )]
    RankDeficient { rows: usize, rank: usize, ratio: f64 },

    #[error("problem is infeasible: {0}")]
    Infeasible(String),

    #[error("convex subproblem did not converge after {iterations} Newton steps (objective trace {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
