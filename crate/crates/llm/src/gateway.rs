use std::collections::HashMap;
use std::sync::Arc;

use crate::{ChatMessage, ChatRequest, ChatResponse, LlmError, LlmProvider, Session, DEFAULT_MAX_MESSAGES};

/// A provider plus named conversation sessions.
///
/// Requests carrying a `session_id` are sent with that session's history
/// prepended; afterwards the request messages and the reply are appended to
/// the session. Exchanges on one session are serialized.
pub struct Gateway {
    provider: Arc<dyn LlmProvider>,
    default_model: String,
    max_messages: usize,
    sessions: std::sync::Mutex<HashMap<String, Arc<tokio::sync::Mutex<Session>>>>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn LlmProvider>, default_model: impl Into<String>) -> Self {
        Self {
            provider,
            default_model: default_model.into(),
            max_messages: DEFAULT_MAX_MESSAGES,
            sessions: Default::default(),
        }
    }

    pub fn with_max_messages(mut self, max_messages: usize) -> Self {
        self.max_messages = max_messages;
        self
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn default_model(&self) -> &str {
        &self.default_model
    }

    /// Convenience: single user message with the default model.
    pub fn request(&self, prompt: impl Into<String>) -> ChatRequest {
        ChatRequest::user(self.default_model.clone(), prompt)
    }

    pub async fn complete(&self, req: ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let Some(session_id) = req.session_id.clone() else {
            return self.provider.complete(&req).await;
        };
        let session = self.session_handle(&session_id);
        let mut session = session.lock().await;
        let mut full = req.clone();
        full.messages = session.history.iter().cloned().chain(req.messages.iter().cloned()).collect();
        let resp = self.provider.complete(&full).await?;
        for m in req.messages {
            session.push(m);
        }
        session.push(ChatMessage::assistant(resp.content.clone()));
        Ok(resp)
    }

    /// Snapshot of a session's history, if the session exists.
    pub async fn session(&self, session_id: &str) -> Option<Session> {
        let handle = self.sessions.lock().unwrap().get(session_id).cloned()?;
        let s = handle.lock().await;
        Some(s.clone())
    }

    pub fn drop_session(&self, session_id: &str) {
        self.sessions.lock().unwrap().remove(session_id);
    }

    fn session_handle(&self, session_id: &str) -> Arc<tokio::sync::Mutex<Session>> {
        self.sessions
            .lock()
            .unwrap()
            .entry(session_id.to_string())
            .or_insert_with(|| {
                Arc::new(tokio::sync::Mutex::new(Session::with_capacity(session_id, self.max_messages)))
            })
            .clone()
    }
}
