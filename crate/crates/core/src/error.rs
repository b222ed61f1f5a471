use std::path::PathBuf;

use crate::augment::AugmentedPrompt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    /// Transport failure that persisted through every retry.
    #[error("backend `{backend}` failed after {attempts} attempt(s): {message}")]
    RetriableBackend {
        backend: String,
        attempts: u32,
        message: String,
    },

    #[error("protocol error from `{backend}`: {message}")]
    Protocol { backend: String, message: String },

    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),

    #[error("format error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Format { line: Option<usize>, message: String },

    #[error("corrupt graph: {0}")]
    CorruptGraph(String),

    #[error("expert chain aborted at stage {stage} (step {step}): {source}")]
    Chain {
        stage: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("chunk `{chunk_id}`: {source}")]
    Chunk {
        chunk_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("answering failed: {source}")]
    Answer {
        prompt: Box<AugmentedPrompt>,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn format(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Innermost error, looking through the context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Chain { source, .. }
            | Error::Chunk { source, .. }
            | Error::Answer { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::RetriableBackend { .. } | Error::Protocol { .. } => 2,
            _ => 1,
        }
    }
}
