//! Error type shared by the whole crate.

/// Errors reported by validation, file formats, and numeric guards.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter or combination of parameters fails validation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Operand dimensions are incompatible.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An operation that needs at least one element received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A statistic is undefined for the given data (e.g. batch stats of a
    /// single row).
    #[error("degenerate statistics: {0}")]
    DegenerateStats(String),

    /// A file or text blob does not match the expected format.
    #[error("format error: {0}")]
    Format(String),

    /// A binary file has a recognized magic but an unsupported version.
    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    /// A binary file failed its integrity check.
    #[error("checksum mismatch: {0}")]
    ChecksumMismatch(String),

    /// A NaN or infinity appeared where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that indicate a numeric failure (NaN/Inf) rather than
    /// bad input; the CLI maps these to a dedicated exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_))
    }
}
