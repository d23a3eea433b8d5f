use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left} vs {right}")]
    Shape {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("idx: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },

    #[error("idx: truncated input, need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },

    #[error("idx: {0}")]
    IdxDimension(String),

    #[error("label {0} is outside 0..=9")]
    InvalidLabel(u8),

    #[error("action {action} outside the action alphabet of size {alphabet}")]
    InvalidAction { action: usize, alphabet: usize },

    #[error("environment contract violation: {0}")]
    EnvContract(&'static str),

    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("singular linear system (pivot {pivot:e} at column {column})")]
    Singular { column: usize, pivot: f64 },

    #[error("training diverged at epoch {epoch}, step {step}: {what}")]
    Divergence {
        epoch: usize,
        step: u64,
        what: &'static str,
    },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        left: impl core::fmt::Display,
        right: impl core::fmt::Display,
    ) -> Self {
        use alloc::string::ToString;
        Error::Shape {
            op,
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }
}
