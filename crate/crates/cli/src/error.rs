use std::path::{Path, PathBuf};

use thiserror::Error;

/// Error classes and their exit codes:
///
/// | kind             | code |
/// |------------------|------|
/// | `io`             | 1    |
/// | `usage`          | 2    |
/// | `pipeline_order` | 3    |
/// | `compatibility`  | 4    |
/// | `input`          | 5    |
/// | `training`       | 6    |
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("missing predecessor artifact {}", .0.display())]
    PipelineOrder(PathBuf),
    #[error("{0}")]
    Compatibility(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Training(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Usage(_) => "usage",
            CliError::PipelineOrder(_) => "pipeline_order",
            CliError::Compatibility(_) => "compatibility",
            CliError::Input(_) => "input",
            CliError::Training(_) => "training",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::PipelineOrder(_) => 3,
            CliError::Compatibility(_) => 4,
            CliError::Input(_) => 5,
            CliError::Training(_) => 6,
        }
    }

    /// `error kind=<kind> code=<n> message=<JSON string>` on a single line.
    pub fn line(&self) -> String {
        let message = serde_json::to_string(&self.to_string()).expect("string serializes");
        match self {
            CliError::PipelineOrder(p) => format!(
                "error kind={} code={} file={} message={message}",
                self.kind(),
                self.exit_code(),
                serde_json::to_string(&p.display().to_string()).expect("string serializes")
            ),
            _ => format!("error kind={} code={} message={message}", self.kind(), self.exit_code()),
        }
    }
}
