use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Location of a problem inside an input file. Line 0 means the whole file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePos {
    pub file: String,
    pub line: usize,
}

impl std::fmt::Display for SourcePos {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.line == 0 {
            f.write_str(&self.file)
        } else {
            write!(f, "{}:{}", self.file, self.line)
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{pos}: {msg}")]
    Parse { pos: SourcePos, msg: String },

    #[error("{file}: lines {first}-{last}: {msg}")]
    ParseRange {
        file: String,
        first: usize,
        last: usize,
        msg: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("config: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("numeric: {0}")]
    Numeric(String),

    #[error("did not converge: {0}")]
    Convergence(String),

    #[error("report failed schema validation: {0}")]
    Schema(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(file: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            pos: SourcePos {
                file: file.to_string(),
                line,
            },
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wrap an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric(_) | Error::Convergence(_) => true,
            Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    /// Line number of the first offending input line, when known.
    pub fn line(&self) -> Option<usize> {
        match self {
            Error::Parse { pos, .. } => Some(pos.line).filter(|&l| l > 0),
            Error::ParseRange { first, .. } => Some(*first),
            Error::Stage { source, .. } => source.line(),
            _ => None,
        }
    }
}
