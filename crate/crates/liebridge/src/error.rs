use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}, key '{key}': {message}")]
    Config { line: usize, key: String, message: String },
    #[error(transparent)]
    Core(#[from] liebridge_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn config(line: usize, key: &str, message: String) -> Self {
        CliError::Config { line, key: key.to_string(), message }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn kind(&self) -> String {
        match self {
            CliError::Config { .. } => "config".into(),
            CliError::Io { .. } => "io".into(),
            CliError::Csv(_) => "csv".into(),
            CliError::Core(e) => {
                let dbg = format!("{e:?}");
                let name: String = dbg.chars().take_while(|c| c.is_alphanumeric()).collect();
                format!("core.{name}")
            }
        }
    }

    /// The JSON record written on failure.
    pub fn record(&self) -> serde_json::Value {
        let mut err = serde_json::json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Config { line, key, .. } = self {
            err["key"] = key.clone().into();
            err["line"] = (*line).into();
        }
        serde_json::json!({ "error": err })
    }
}
