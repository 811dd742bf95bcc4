use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("CIR does not match any slot grammar: {0:?}")]
    UnencodableCir(String),

    #[error("slot sequence is empty (all PAD)")]
    EmptySlots,

    #[error("token {0:?} is not in the slot vocabulary")]
    UnknownSlotToken(String),

    #[error("vocabulary exceeds cap of {cap} tokens; overflow: {overflow:?}")]
    VocabularyOverflow { cap: usize, overflow: Vec<String> },

    #[error("invalid date: {0}")]
    InvalidDate(String),

    #[error("date out of supported range: {0}")]
    DateOutOfRange(String),

    #[error("cannot anchor {cir:?}: {reason}")]
    Anchor { cir: String, reason: String },

    #[error("unknown date function {0:?}")]
    UnknownFunction(String),

    #[error("invalid model configuration: {0}")]
    Config(String),

    #[error("sequence of length {len} exceeds max_seq {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse { offset, message: message.into() }
    }

    pub(crate) fn anchor(cir: &str, reason: impl Into<String>) -> Self {
        Error::Anchor { cir: cir.to_string(), reason: reason.into() }
    }

    /// Numeric failures map to a distinct CLI exit code.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. })
    }
}
