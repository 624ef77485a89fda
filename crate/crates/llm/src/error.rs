use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),

    #[error("no entry in cassette '{cassette}' matches prompt")]
    NoMatch { cassette: String },

    #[error("prompt not present in exchange log {}", path.display())]
    NotRecorded { path: PathBuf },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("provider returned status {status}: {body}")]
    Status { status: u16, body: String },

    #[error("malformed completion response: {0}")]
    Malformed(String),

    #[error("invalid cassette: {0}")]
    Cassette(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("failed to bind mock server: {0}")]
    Bind(std::io::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LlmError {
    /// Short machine-readable code for API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            LlmError::InvalidRequest(_) => "invalid-request",
            LlmError::NoMatch { .. } => "no-match",
            LlmError::NotRecorded { .. } => "not-recorded",
            LlmError::Transport(_) => "transport",
            LlmError::Status { .. } => "status",
            LlmError::Malformed(_) => "malformed-response",
            LlmError::Cassette(_) => "cassette",
            LlmError::Config(_) => "config",
            LlmError::Bind(_) => "bind",
            LlmError::Io(_) => "io",
        }
    }
}
