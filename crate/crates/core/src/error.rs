use alloc::string::String;
use alloc::vec::Vec;

use crate::fusion::TraceEvent;

/// Errors produced by the core operations.
///
/// Each variant maps onto one named failure of the design flow; [`Error::name`]
/// returns that name, which the CLI prints on standard error.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid replacement: {0}")]
    InvalidReplacement(String),
    #[error("unsupported configuration: {0}")]
    UnsupportedConfig(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("port widths do not match between layers: {0}")]
    PortMismatch(String),
    #[error("inefficient buffer configuration: {0}")]
    InefficientConfig(String),
    #[error("simulation deadlocked at cycle {time}")]
    SimDeadlock { time: u64, trace: Vec<TraceEvent> },
    #[error("invalid tiling: {0}")]
    InvalidTiling(String),
    #[error("missing calibration coefficient for {0}")]
    CalibrationError(String),
    #[error("no candidate design fits the platform")]
    Infeasible,
    #[error("no model satisfies the requirements")]
    NoSolution,
    #[error("accuracy oracle failed: {0}")]
    Oracle(String),
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::UnknownModel(_) => "UnknownModel",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::InvalidReplacement(_) => "InvalidReplacement",
            Error::UnsupportedConfig(_) => "UnsupportedConfig",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::PortMismatch(_) => "PortMismatch",
            Error::InefficientConfig(_) => "InefficientConfig",
            Error::SimDeadlock { .. } => "SimDeadlock",
            Error::InvalidTiling(_) => "InvalidTiling",
            Error::CalibrationError(_) => "CalibrationError",
            Error::Infeasible => "Infeasible",
            Error::NoSolution => "NoSolution",
            Error::Oracle(_) => "OracleError",
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
