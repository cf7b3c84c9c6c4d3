use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid floating-point format: {0}")]
    InvalidFormat(String),

    #[error("value outside the operation's domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("reference matrix has zero norm but the test matrix differs from it")]
    ZeroReference,

    #[error("unsupported scheme configuration: {0}")]
    Unsupported(String),

    #[error("could not parse {what} from {input:?}")]
    Parse { what: &'static str, input: String },
}
