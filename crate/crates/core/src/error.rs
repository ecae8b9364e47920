use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What went wrong while parsing a matrix file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseErrorKind {
    MalformedHeader(String),
    NonNumeric(String),
    NonFinite(String),
    /// Declared or implied dimensions disagree with the records found.
    RecordCount { expected: usize, found: usize },
    RaggedRow { expected: usize, found: usize },
    Empty,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::MalformedHeader(h) => write!(f, "malformed header `{h}`"),
            ParseErrorKind::NonNumeric(t) => write!(f, "non-numeric token `{t}`"),
            ParseErrorKind::NonFinite(t) => write!(f, "non-finite value `{t}`"),
            ParseErrorKind::RecordCount { expected, found } => {
                write!(f, "expected {expected} values, found {found}")
            }
            ParseErrorKind::RaggedRow { expected, found } => {
                write!(f, "expected {expected} columns, found {found}")
            }
            ParseErrorKind::Empty => write!(f, "no data"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("index out of bounds: {what} = {index}, limit {limit}")]
    IndexOutOfBounds {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("unsupported shape {rows}x{cols}: {reason}")]
    UnsupportedShape {
        rows: usize,
        cols: usize,
        reason: &'static str,
    },
    #[error("panel width {panel} out of range 1..={cols}")]
    InvalidPanel { panel: usize, cols: usize },
    #[error("parse error at line {line}: {kind}")]
    Parse { line: usize, kind: ParseErrorKind },
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("tile grid configuration: n={n}, k={k}, block={block}: {reason}")]
    GridConfig {
        n: usize,
        k: usize,
        block: usize,
        reason: &'static str,
    },
    #[error("worker {worker:?} failed: {reason}")]
    WorkerFailed {
        worker: (usize, usize),
        reason: String,
    },
    #[error("operation count overflows u64 for n={n}")]
    CountOverflow { n: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, kind: ParseErrorKind) -> Self {
        Error::Parse { line, kind }
    }
}
