//! Uniform access to chat-completion language models.
//!
//! Three providers sit behind the [`LlmProvider`] trait:
//!
//! * [`OpenAiCompatProvider`] talks to any OpenAI-compatible
//!   `/v1/chat/completions` endpoint.
//! * [`MockProvider`] answers from a [`Cassette`] of prompt/response fixtures
//!   and never touches the network.
//! * [`ReplayProvider`] answers from a JSON Lines exchange log, optionally
//!   falling through to a live provider and recording what it sees.
//!
//! [`Gateway`] adds per-session history on top of a provider, and
//! [`serve_mock`] exposes a cassette over HTTP so flows that speak raw HTTP
//! can run hermetically.

mod cassette;
mod config;
mod error;
mod gateway;
mod mock_server;
mod provider;
mod record;
mod session;
mod types;

pub use cassette::{Cassette, CassetteEntry, MatchKind, Matcher};
pub use config::{GatewayConfig, ProviderKind, DEFAULT_BASE_URL, DEFAULT_MODEL};
pub use error::LlmError;
pub use gateway::Gateway;
pub use mock_server::{serve_mock, CapturedRequest, MockServerHandle};
pub use provider::{completion_document, LlmProvider, MockProvider, OpenAiCompatProvider, ReplayProvider};
pub use record::{read_log, record, ExchangeRecord};
pub use session::{Session, DEFAULT_MAX_MESSAGES};
pub use types::{ChatMessage, ChatRequest, ChatResponse, Role};

pub type Result<T, E = LlmError> = std::result::Result<T, E>;
