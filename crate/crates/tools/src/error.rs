use std::path::PathBuf;

use thiserror::Error;

/// Success.
pub const EXIT_OK: i32 = 0;
/// The method ran but did not succeed: infeasible synthesis, failed
/// verification, cut locus, component mismatch.
pub const EXIT_FAILURE: i32 = 2;
/// Bad input: unreadable or malformed files, invalid configuration,
/// mismatched systems.
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Error)]
pub enum ToolError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Malformed or invalid file content, anchored at a line when known.
    #[error("{}{}: {message}", path.display(), line.map(|l| format!(":{l}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },
    #[error("certificate is for `{certificate}` but the configuration names `{config}`")]
    SystemMismatch { certificate: String, config: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Core(#[from] lieccm::Error),
}

impl ToolError {
    pub fn parse(path: impl Into<PathBuf>, line: Option<usize>, message: impl Into<String>) -> Self {
        ToolError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use lieccm::Error as E;
        match self {
            ToolError::Core(
                E::CutLocus { .. }
                | E::ComponentMismatch
                | E::CertificateViolation { .. }
                | E::Degenerate { .. }
                | E::RankDeficient { .. }
                | E::NotTangent { .. },
            ) => EXIT_FAILURE,
            _ => EXIT_INPUT,
        }
    }
}

pub type Result<T> = std::result::Result<T, ToolError>;

/// 1-based line of byte offset `pos` in `text`.
pub fn line_of(text: &str, pos: usize) -> usize {
    text[..pos.min(text.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

/// Joins a multi-line parser message into one line.
pub fn one_line(msg: &str) -> String {
    msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ")
}

pub fn read_file(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| ToolError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_file(path: &std::path::Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| ToolError::Io {
        path: path.to_path_buf(),
        source,
    })
}
