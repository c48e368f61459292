use std::fmt;
use std::io;
use std::path::PathBuf;

/// Every failure the library can report.
#[derive(Debug)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    /// An input lies outside the domain of a function (log of a non-positive value, zero norm, ...).
    Domain(String),
    /// A caller broke an API contract (non-scalar loss, empty replacement list, ...).
    Contract(String),
    Index {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    Io {
        path: PathBuf,
        source: io::Error,
    },
    Capacity {
        requested: usize,
        available: usize,
    },
    Augmentation(String),
    Config(String),
    UndefinedMetric(String),
    NonFinite {
        param: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, lhs, rhs } => {
                write!(f, "{op}: incompatible shapes {lhs:?} and {rhs:?}")
            }
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Contract(msg) => write!(f, "contract violated: {msg}"),
            Error::Index { what, index, bound } => {
                write!(f, "{what} index {index} out of range (bound {bound})")
            }
            Error::Parse {
                source_name,
                line,
                message,
            } => write!(f, "{source_name}:{line}: {message}"),
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Capacity {
                requested,
                available,
            } => write!(
                f,
                "requested {requested} distinct items but only {available} are available"
            ),
            Error::Augmentation(msg) => write!(f, "augmentation failed: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::UndefinedMetric(msg) => write!(f, "metric undefined: {msg}"),
            Error::NonFinite { param } => write!(f, "non-finite gradient in parameter {param}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
