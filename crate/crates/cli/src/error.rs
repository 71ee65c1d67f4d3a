use std::path::{Path, PathBuf};

use gec_robust::ErrorClass;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gec_robust::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    #[error("annotation store: {0}")]
    Store(String),

    #[error("task {0} already has all of its variants")]
    TaskComplete(String),

    #[error("{failed} of {total} case(s) failed the audit")]
    AuditFailed { failed: usize, total: usize },

    #[error("server: {0}")]
    Server(String),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn class(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.class().as_str(),
            CliError::Io { .. } | CliError::Store(_) | CliError::Server(_) => ErrorClass::Io.as_str(),
            CliError::Usage(_) => ErrorClass::Config.as_str(),
            CliError::TaskComplete(_) => ErrorClass::Input.as_str(),
            CliError::AuditFailed { .. } => "audit",
        }
    }

    /// Process exit status. Clap uses 2 for bad arguments.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            "io" => 3,
            "schema" => 4,
            "invariant" => 5,
            "input" => 6,
            "config" => 7,
            "generation" => 8,
            "audit" => 9,
            _ => 1,
        }
    }

    /// The structured form printed on stderr.
    pub fn to_json(&self) -> String {
        json!({"error": {"class": self.class(), "code": self.exit_code(), "message": self.to_string()}}).to_string()
    }
}
