use std::path::PathBuf;

/// Common result type for this crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Encoder channel identifiers, in wire order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderChannel {
    C1,
    C2,
    Ct,
    C3,
}

impl std::fmt::Display for EncoderChannel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            EncoderChannel::C1 => "c1",
            EncoderChannel::C2 => "c2",
            EncoderChannel::Ct => "ct",
            EncoderChannel::C3 => "c3",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("timestamps must be strictly increasing (index {index}: {previous} -> {current})")]
    Ordering {
        index: usize,
        previous: f64,
        current: f64,
    },

    #[error("channel {channel}: count {count} outside 0..={max}")]
    Decode {
        channel: EncoderChannel,
        count: i64,
        max: u32,
    },

    #[error("channel {channel}: value {value} is not representable")]
    Saturation { channel: EncoderChannel, value: f64 },

    #[error("device not static: channel {channel} spans {spread} counts (limit {limit})")]
    NotStatic {
        channel: EncoderChannel,
        spread: u32,
        limit: u32,
    },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("invalid frame: {0}")]
    InvalidFrame(String),

    #[error("alignment failed: {0}")]
    Alignment(String),

    #[error("division undefined: {0}")]
    DivisionUndefined(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("metric `{metric}` failed: {source}")]
    Metric {
        metric: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn metric(metric: &'static str, source: Error) -> Self {
        Error::Metric {
            metric,
            source: Box::new(source),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
