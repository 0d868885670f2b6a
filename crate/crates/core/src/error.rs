use thiserror::Error;

use crate::bounds::BoundsError;
use crate::calibration::CalibrationError;
use crate::dataset::DataError;
use crate::glm::GlmError;
use crate::inference::InferenceError;
use crate::lpcore::LpError;
use crate::propensity::PropensityError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error. Each variant wraps the error of one module.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Propensity(#[from] PropensityError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("configuration error: {0}")]
    Config(String),
}

/// Coarse failure classes used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Data(_) => ErrorClass::Data,
            Error::Calibration(CalibrationError::InvalidSource { .. })
            | Error::Calibration(CalibrationError::RankOutOfRange { .. })
            | Error::Calibration(CalibrationError::InvalidFixedEpsilon(_)) => ErrorClass::Config,
            _ => ErrorClass::Numerical,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Data(_) => "data",
            Error::Glm(_) => "glm",
            Error::Propensity(_) => "propensity",
            Error::Calibration(_) => "calibration",
            Error::Lp(_) => "lp",
            Error::Bounds(_) => "bounds",
            Error::Inference(_) => "inference",
            Error::Config(_) => "config",
        }
    }
}
