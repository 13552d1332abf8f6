use std::fmt;
use std::io;
use std::path::PathBuf;

/// Which structural check a checkpoint failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorruptKind {
    /// Header JSON is missing, malformed, or internally inconsistent.
    Header,
    /// Manifest shapes disagree with the shapes implied by the model spec.
    ShapeMismatch,
    /// File ends before the declared payload does.
    Truncated,
    /// Extra bytes after the declared payload.
    TrailingBytes,
    /// CRC32 footer does not match the file contents.
    Crc,
}

impl fmt::Display for CorruptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CorruptKind::Header => "bad header",
            CorruptKind::ShapeMismatch => "shape mismatch",
            CorruptKind::Truncated => "truncated payload",
            CorruptKind::TrailingBytes => "trailing bytes",
            CorruptKind::Crc => "crc mismatch",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid shape {0:?}: dimensions must be non-empty and >= 1")]
    InvalidShape(Vec<usize>),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid range: lo ({lo}) must be < hi ({hi})")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for length {len}")]
    Index { index: usize, len: usize },

    #[error("invalid optimizer step {0}: steps start at 1")]
    InvalidStep(u64),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error("corrupt checkpoint ({kind}): {detail}")]
    CorruptCheckpoint { kind: CorruptKind, detail: String },

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("class names differ: {0}")]
    ClassMismatch(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(kind: CorruptKind, detail: impl Into<String>) -> Self {
        Error::CorruptCheckpoint {
            kind,
            detail: detail.into(),
        }
    }

    /// Wraps this error with the path of the file that produced it.
    pub(crate) fn in_file(self, path: &std::path::Path) -> Self {
        match self {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            Error::Unsupported(m) => Error::Unsupported(format!("{}: {m}", path.display())),
            Error::CorruptFile(m) => Error::CorruptFile(format!("{}: {m}", path.display())),
            Error::CorruptCheckpoint { kind, detail } => Error::CorruptCheckpoint {
                kind,
                detail: format!("{}: {detail}", path.display()),
            },
            other => other,
        }
    }

    /// Process exit code for this error: 2 for bad user input, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 2,
            Error::Format(_)
            | Error::Unsupported(_)
            | Error::CorruptFile(_)
            | Error::CorruptCheckpoint { .. }
            | Error::ClassMismatch(_)
            | Error::InvalidParameter(_)
            | Error::InvalidRange { .. }
            | Error::EmptyDataset => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
