use std::path::{Path, PathBuf};

use latent_glider_core::flightsim::FlightError;
use latent_glider_core::learner::LearnerError;
use latent_glider_core::mesh::MeshError;
use latent_glider_core::optimizer::GaError;
use latent_glider_core::sdf::SdfError;

/// Process exit status of the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Divergence = 3,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{0}")]
    Data(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sdf(#[from] SdfError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Flight(#[from] FlightError),
    #[error(transparent)]
    Ga(#[from] GaError),
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Error::Format { path: path.to_path_buf(), message: message.into() }
    }

    pub fn kind(&self) -> ExitKind {
        match self {
            Error::Usage(_) => ExitKind::Usage,
            Error::Divergence(_)
            | Error::Learner(LearnerError::Divergence { .. })
            | Error::Flight(FlightError::Divergence { .. })
            | Error::Ga(GaError::NonFinite(_)) => ExitKind::Divergence,
            Error::Learner(LearnerError::Config(_)) | Error::Ga(GaError::Config(_)) => ExitKind::Usage,
            _ => ExitKind::Data,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind() as i32
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
