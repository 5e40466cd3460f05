use std::path::PathBuf;

/// Errors raised anywhere in the simulation stack.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("tile op {op} expects {expected} operand(s), got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("rsqrt of negative lane {lane} ({value})")]
    NegativeRsqrt { lane: usize, value: f32 },

    #[error("dst register: {0}")]
    DstProtocol(String),

    #[error("circular buffer `{cb}`: {msg}")]
    CbProtocol { cb: String, msg: String },

    #[error("circular buffer `{0}` closed while blocked")]
    CbClosed(String),

    #[error("core {core}: {source}")]
    Core {
        core: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("rank {rank}, {device}: {source}")]
    Device {
        rank: usize,
        device: String,
        #[source]
        source: Box<Error>,
    },

    #[error("device buffer `{0}` does not exist")]
    MissingBuffer(String),

    #[error("result buffer too small: need {need} bytes, have {have}")]
    BufferTooSmall { need: usize, have: usize },

    #[error("particles {0} and {1} coincide with zero softening")]
    Singular(usize, usize),

    #[error("unknown initial-condition model `{0}`")]
    UnknownModel(String),

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("trace: {0}")]
    Trace(String),

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn cb(cb: &str, msg: impl Into<String>) -> Self {
        Error::CbProtocol {
            cb: cb.to_string(),
            msg: msg.into(),
        }
    }

    pub(crate) fn config(key: &str, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    /// Strips `Core`/`Device`/`Step` attribution and returns the root cause.
    pub fn root(&self) -> &Error {
        match self {
            Error::Core { source, .. } | Error::Device { source, .. } | Error::Step { source, .. } => {
                source.root()
            }
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
