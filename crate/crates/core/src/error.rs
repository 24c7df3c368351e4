use std::path::PathBuf;

use thiserror::Error;

use crate::cell::Electrode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{electrode} surface stoichiometry {theta:.6} left (0, 1)")]
    SurfaceSaturation { electrode: Electrode, theta: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no current root bracketed for target voltage {v_target:.4} V")]
    NoRoot { v_target: f64 },

    #[error("simulation failed at t = {time:.1} s: {source}")]
    Simulation {
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("objective returned a non-finite value for particle {particle}")]
    ObjectiveFailure { particle: usize },

    #[error("fit did not converge: rmse {rmse_mv:.2} mV exceeds {limit_mv:.1} mV")]
    NonConvergence { rmse_mv: f64, limit_mv: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training diverged at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("checksum mismatch in {0}")]
    Checksum(PathBuf),

    #[error("validation: {0}")]
    Validation(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
