use thiserror::Error;

/// Runtime failures that calling code is expected to handle.
///
/// Shape mismatches and index bugs are programmer errors and panic instead.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite gradient in block `{block}`")]
    NonFiniteGradient { block: String },

    #[error("location resampling exceeded {limit} draws (mu={mu:.4}, sigma={sigma:.4})")]
    ResampleLimit { limit: u32, mu: f64, sigma: f64 },

    #[error("pressure image is all zero; cannot normalize")]
    ZeroImage,

    #[error("invalid object id {0}; expected 0..=3")]
    UnknownObject(u8),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed {kind} file: {detail}")]
    Format { kind: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(kind: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            kind,
            detail: detail.into(),
        }
    }
}
