use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or precondition check failed.
    #[error("validation failed: {0}")]
    Validation(String),

    /// A field value became non-finite during time stepping.
    #[error("numerical instability at step {step}: non-finite {component} at cell ({i}, {j}, {k})")]
    Instability {
        step: u64,
        component: &'static str,
        i: usize,
        j: usize,
        k: usize,
    },

    /// The steady-state criterion was not met within the step budget.
    #[error("no steady state after {steps} steps (last residual {residual:.3e})")]
    NotConverged { steps: u64, residual: f64 },

    /// A root finder or fit failed to produce a result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Parse { .. } => 2,
            Error::Instability { .. } => 3,
            Error::NotConverged { .. } => 4,
            Error::Numerical(_) | Error::Io { .. } => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
