//! Scenario runs, parameter sweeps and summary reports on top of
//! `monokin-core`, plus the file formats they write.

pub mod config;
pub mod io;
pub mod report;
pub mod run;
pub mod sweep;

use monokin_core::Error as CoreError;

pub use config::{load_config, parse_config, ConfigError, RunConfig, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("{context}: {source}")]
    Solver {
        context: &'static str,
        #[source]
        source: CoreError,
    },

    #[error(transparent)]
    Write(#[from] io::WriteError),

    #[error("sweep point eps = {eps} failed: {source}")]
    SweepPoint {
        eps: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("nothing to report in {0}")]
    EmptyReport(std::path::PathBuf),

    #[error("missing files: {}", .0.join(", "))]
    MissingFiles(Vec<String>),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait Context<T> {
    fn context(self, context: &'static str) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, CoreError> {
    fn context(self, context: &'static str) -> Result<T> {
        self.map_err(|source| Error::Solver { context, source })
    }
}

pub mod exit {
    pub const OK: i32 = 0;
    pub const WRITE_FAILURE: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const RUNTIME_GUARD: i32 = 3;
    pub const SWEEP_MEMBER: i32 = 4;
}

impl Error {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::EmptyReport(_) | Error::MissingFiles(_) => exit::VALIDATION,
            Error::Solver { source, .. } => match source {
                CoreError::Cfl { .. }
                | CoreError::BlowUp { .. }
                | CoreError::BoundaryLeak { .. }
                | CoreError::NegativeMarginal { .. }
                | CoreError::NonFinite(_)
                | CoreError::LinearSolve(_) => exit::RUNTIME_GUARD,
                _ => exit::VALIDATION,
            },
            Error::Write(_) => exit::WRITE_FAILURE,
            Error::SweepPoint { .. } => exit::SWEEP_MEMBER,
        }
    }
}
