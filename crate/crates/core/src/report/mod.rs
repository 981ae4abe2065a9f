//! Run, analyze and report entry points behind the command-line tool.

mod analyze;
mod config;
mod render;
mod run;
mod table;

use std::path::PathBuf;

use thiserror::Error;

pub use analyze::{cmd_analyze, ANALYSIS_DIR, ANALYSIS_META};
pub use config::{load_profiles, simulated_variants, Mode, ProfileSpec, RunConfig};
pub use render::{cmd_report, REPORT_FILE};
pub use run::{cmd_run, RunOutcome};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{}: {message}", .path.display())]
    Config { path: PathBuf, message: String },
    #[error("required input {} is missing", .0.display())]
    MissingInput(PathBuf),
    #[error("the archive holds no graded trials")]
    NoGradedTrials,
    #[error(transparent)]
    Archive(#[from] crate::archive::ArchiveError),
    #[error(transparent)]
    Protocol(#[from] crate::protocol::ProtocolError),
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", .path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl ReportError {
    /// Errors the user can fix by editing inputs rather than rerunning.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ReportError::Config { .. }
                | ReportError::MissingInput(_)
                | ReportError::Protocol(crate::protocol::ProtocolError::Config(_))
        )
    }
}
