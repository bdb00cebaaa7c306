use std::io;
use std::path::PathBuf;

use sbdf_core::SbdfError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {key}: {message}")]
    Config { key: String, message: String },

    #[error("solver error {at}: {source}")]
    Solver {
        /// `at step N` or a phase such as `during bootstrap`.
        at: String,
        #[source]
        source: SbdfError,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 2,
            HarnessError::Solver { .. } => 3,
            HarnessError::Io { .. } => 1,
        }
    }

    pub(crate) fn at_step(step: usize) -> impl FnOnce(SbdfError) -> Self {
        move |source| HarnessError::Solver {
            at: format!("at step {step}"),
            source,
        }
    }

    pub(crate) fn during(phase: &str) -> impl FnOnce(SbdfError) -> Self + '_ {
        move |source| HarnessError::Solver {
            at: format!("during {phase}"),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
