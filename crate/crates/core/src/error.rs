use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the compression toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix data length {len} does not match shape {rows}x{cols}")]
    DataLength { rows: usize, cols: usize, len: usize },

    #[error("non-finite entry {value} at ({row}, {col})")]
    NonFinite { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("empty input to {0}")]
    Empty(&'static str),

    #[error("SVD did not converge after {iterations} Jacobi sweeps")]
    SvdNoConvergence { iterations: usize },

    #[error("linear system is singular ({0})")]
    Singular(&'static str),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("budget k={k} exceeds pool size N={pool} for pool {side}")]
    BudgetExceedsPool { side: char, k: usize, pool: usize },

    #[error("bound is invalid: {0}")]
    BoundInvalid(String),

    #[error(
        "SVD fingerprint mismatch: artifact was compressed against {expected:#018x}, \
         local weights give {actual:#018x}"
    )]
    FingerprintMismatch { expected: u64, actual: u64 },

    #[error("malformed .solar stream at byte {offset}: {kind}")]
    Format { offset: usize, kind: FormatErrorKind },

    #[error("unsupported NPY file {path:?}: {reason}")]
    NpyUnsupported { path: PathBuf, reason: String },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// The distinct ways a `.solar` stream can fail validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormatErrorKind {
    BadMagic([u8; 4]),
    UnsupportedVersion(u16),
    ReservedFlags(u16),
    Truncated { needed: usize, available: usize },
    CrcMismatch { record: usize, stored: u32, computed: u32 },
    PopcountMismatch { side: char, mask: usize, payload: usize },
    MaskOutOfRange { side: char },
    BadBits(u8),
    BadUtf8,
    NameTooLong(usize),
    MixedFlags,
    TrailingBytes(usize),
    FieldOverflow(&'static str),
    InvalidRecord(String),
}

impl std::fmt::Display for FormatErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::BadMagic(m) => write!(f, "bad magic {m:?}, expected \"SOLR\""),
            Self::UnsupportedVersion(v) => write!(f, "unsupported version {v}"),
            Self::ReservedFlags(fl) => write!(f, "reserved flag bits set ({fl:#06x})"),
            Self::Truncated { needed, available } => {
                write!(f, "truncated: need {needed} bytes, {available} available")
            }
            Self::CrcMismatch {
                record,
                stored,
                computed,
            } => write!(
                f,
                "CRC mismatch in record {record}: stored {stored:#010x}, computed {computed:#010x}"
            ),
            Self::PopcountMismatch {
                side,
                mask,
                payload,
            } => write!(
                f,
                "{side} mask has {mask} bits set but payload holds {payload} values"
            ),
            Self::MaskOutOfRange { side } => write!(f, "{side} mask has bits set beyond pool size"),
            Self::BadBits(b) => write!(f, "unsupported quantization width {b}"),
            Self::BadUtf8 => write!(f, "tensor name is not valid UTF-8"),
            Self::NameTooLong(n) => write!(f, "tensor name of {n} bytes exceeds 65535"),
            Self::MixedFlags => write!(f, "tensors disagree on header flags"),
            Self::TrailingBytes(n) => write!(f, "{n} trailing bytes after last record"),
            Self::FieldOverflow(name) => write!(f, "{name} does not fit its on-disk width"),
            Self::InvalidRecord(why) => write!(f, "invalid record: {why}"),
        }
    }
}

impl Error {
    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SvdNoConvergence { .. } | Error::Singular(_) => 3,
            Error::FingerprintMismatch { .. } => 4,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
