use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", config_message(.line, .key, .message))]
    Config {
        line: Option<usize>,
        key: Option<String>,
        message: String,
    },

    #[error(transparent)]
    Core(#[from] ntsim_core::Error),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {message}", .path.display())]
    Csv { path: PathBuf, message: String },
}

fn config_message(line: &Option<usize>, key: &Option<String>, message: &str) -> String {
    let mut out = String::from("config");
    if let Some(l) = line {
        out += &format!(" line {l}");
    }
    if let Some(k) = key {
        out += &format!(" key `{k}`");
    }
    format!("{out}: {message}")
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad inputs, 2 for numerical failures, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Core(e) if e.is_configuration() => 1,
            CliError::Core(_) => 2,
            CliError::Io { .. } | CliError::Csv { .. } => 3,
        }
    }
}
