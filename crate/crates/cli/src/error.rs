use std::fmt;

use thiserror::Error;

/// Failure of a CLI run, mapped onto a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", parse_message(*.line, .message))]
    Parse {
        line: Option<usize>,
        message: String,
    },
    #[error("invalid `{key}`: {reason}")]
    Validation { key: String, reason: String },
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Runtime(String),
}

fn parse_message(line: Option<usize>, message: &str) -> String {
    match line {
        Some(l) => format!("line {l}: {message}"),
        None => message.to_string(),
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse { .. } => 2,
            CliError::Validation { .. } => 3,
            CliError::Divergence(_) => 4,
            CliError::Io(_) | CliError::Csv(_) | CliError::Runtime(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Parse { .. } => "parse",
            CliError::Validation { .. } => "validation",
            CliError::Divergence(_) => "divergence",
            CliError::Io(_) | CliError::Csv(_) => "io",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// One line, `error kind=<kind> [key=<key>] msg="<message>"`.
    pub fn machine_line(&self) -> MachineLine<'_> {
        MachineLine(self)
    }
}

pub struct MachineLine<'a>(&'a CliError);

impl fmt::Display for MachineLine<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error kind={}", self.0.kind())?;
        if let CliError::Validation { key, .. } = self.0 {
            write!(f, " key={key}")?;
        }
        let msg = self
            .0
            .to_string()
            .replace(['\n', '\r'], " ")
            .replace('"', "'");
        write!(f, " msg=\"{msg}\"")
    }
}

impl From<semidiscrete::Error> for CliError {
    fn from(e: semidiscrete::Error) -> Self {
        match e {
            semidiscrete::Error::InvalidParameter { name, reason } => CliError::Validation {
                key: name.to_string(),
                reason,
            },
            e @ semidiscrete::Error::ReferenceDiverged { .. } => {
                CliError::Divergence(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}
