//! Command implementations behind the `sensorspace` binary.

use std::path::PathBuf;

pub mod commands;
pub mod config;
pub mod experiments;
pub mod svg;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] sensorspace_core::Error),

    #[error("io error on {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("acceptance check failed: {0}")]
    Acceptance(String),

    #[error("control did not converge: {0}")]
    NonConvergence(String),
}

impl CliError {
    /// 2 acceptance failure, 3 non-convergence, 4 IO or configuration,
    /// 1 anything else (numerical failures).
    pub fn exit_code(&self) -> u8 {
        use sensorspace_core::Error as E;
        match self {
            CliError::Acceptance(_) => 2,
            CliError::NonConvergence(_) => 3,
            CliError::Io(..) | CliError::Config(_) => 4,
            CliError::Core(E::Io { .. } | E::Parse { .. } | E::Config(_) | E::Version { .. } | E::Empty(_)) => 4,
            CliError::Core(_) => 1,
        }
    }
}

pub(crate) fn write_file(path: &std::path::Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}
