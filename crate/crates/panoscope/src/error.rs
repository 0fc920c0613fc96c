use thiserror::Error;

/// Errors produced by the ingestion, feature, model and evaluation stages.
#[derive(Debug, Error)]
pub enum Error {
    /// Input bytes could not be parsed. `offset` is a byte offset for binary
    /// input and a 1-based line number for CSV input.
    #[error("parse error at {unit} {offset}: {message}")]
    Parse {
        offset: u64,
        unit: &'static str,
        message: String,
    },

    #[error("unsupported capture format: {0}")]
    UnsupportedFormat(String),

    #[error("client identity matches both endpoints of a packet at t={timestamp_us}us")]
    AmbiguousIdentity { timestamp_us: i64 },

    #[error("invalid interval: interval_s={interval_s} must be >= window_s={window_s}")]
    InvalidInterval { interval_s: u32, window_s: u32 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate labels: training data must contain both classes")]
    DegenerateLabels,

    #[error("invalid feature value: {name} is {value} for trace {trace_id}")]
    InvalidFeature {
        name: String,
        value: f64,
        trace_id: String,
    },

    #[error("feature schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("model deserialization failed at {location}: {message}")]
    Deserialization { location: String, message: String },

    #[error("out-of-order bin: expected window_start_s={expected}, got {got}")]
    OutOfOrderBin { expected: u32, got: u32 },

    #[error("degenerate split: a class is missing from the train side after {attempts} resampling attempts")]
    DegenerateSplit { attempts: u32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse_bytes(offset: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            unit: "byte",
            message: message.into(),
        }
    }

    pub(crate) fn parse_line(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            offset: line,
            unit: "line",
            message: message.into(),
        }
    }
}
