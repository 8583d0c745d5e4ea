use thiserror::Error;

/// Crate-wide error type. The variants map onto the CLI exit-code contract:
/// `Config` → 2, `Shape`/`Data`/`Io` → 3, `Numeric` → 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    /// Tensor/volume shape or domain contract violation.
    #[error("shape error: {0}")]
    Shape(String),

    /// Bad input data: malformed files, out-of-range values, empty datasets.
    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Non-finite value encountered where the contract requires finiteness.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for this error class (CLI contract).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Shape(_) | Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }

    /// Short machine-parsable class tag used in CLI error lines.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
            Error::Numeric(_) => "numeric",
        }
    }
}
