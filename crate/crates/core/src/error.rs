use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("shape mismatch at node #{node} ({op}): {detail}")]
    Shape {
        node: usize,
        op: &'static str,
        detail: String,
    },

    #[error("non-finite value produced by {op} at node #{node}")]
    NonFinite { node: usize, op: &'static str },

    #[error("input `{0}` is not bound")]
    UnboundInput(String),

    #[error("node #{0} is not on the tape")]
    UnknownNode(usize),

    #[error("seed node #{node} is not scalar (shape {shape:?})")]
    NonScalarSeed { node: usize, shape: Vec<usize> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} {index} out of range (bound {bound})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("invalid file format: {0}")]
    Format(String),

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },

    #[error("line {line}: {msg}")]
    Record { line: usize, msg: String },

    #[error("missing coordinate {0}")]
    MissingCoordinate(String),

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("{0}")]
    Invalid(String),

    #[error("no alpha passes the fluency guard ({} points evaluated)", .0.len())]
    SweepRejected(Vec<crate::steering::SweepPoint>),

    #[error("partner failure: {0}")]
    Partner(String),

    #[error("conversation `{id}` failed after {} turns: {source}", .partial.turns.len())]
    Conversation {
        id: String,
        partial: Box<crate::dialogue::Conversation>,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn record(line: usize, msg: impl Into<String>) -> Self {
        Error::Record {
            line,
            msg: msg.into(),
        }
    }
}
