use std::path::PathBuf;
use std::sync::Arc;

use async_trait::async_trait;
use serde_json::json;
use tokio::sync::Mutex;

use crate::{record, Cassette, ChatRequest, ChatResponse, LlmError};

#[async_trait]
pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;

    async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

/// Minimal chat-completions document carrying `content` as the assistant
/// reply. The mock provider and the mock server both answer with it.
pub fn completion_document(content: &str) -> serde_json::Value {
    json!({
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": content },
            "finish_reason": "stop"
        }]
    })
}

/// Client for any endpoint speaking the OpenAI chat-completions wire format.
pub struct OpenAiCompatProvider {
    base_url: String,
    api_key: String,
    client: reqwest::Client,
}

impl OpenAiCompatProvider {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self::with_client(base_url, api_key, reqwest::Client::new())
    }

    pub fn with_client(base_url: impl Into<String>, api_key: impl Into<String>, client: reqwest::Client) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            client,
        }
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url)
    }

    /// Request body: exactly `model` and `messages`.
    pub fn request_body(req: &ChatRequest) -> serde_json::Value {
        let messages: Vec<_> = req
            .messages
            .iter()
            .map(|m| json!({ "role": m.role, "content": m.content }))
            .collect();
        json!({ "model": req.model, "messages": messages })
    }
}

#[async_trait]
impl LlmProvider for OpenAiCompatProvider {
    fn name(&self) -> &str {
        "openai-compat"
    }

    async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let body = serde_json::to_vec(&Self::request_body(req)).expect("body serializes");
        let resp = self
            .client
            .post(self.endpoint())
            .header("Authorization", format!("Bearer {}", self.api_key))
            .header("Content-Type", "application/json")
            .body(body)
            .send()
            .await
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().await.map_err(|e| LlmError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(LlmError::Status { status, body: text });
        }
        let raw: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| LlmError::Malformed(e.to_string()))?;
        ChatResponse::from_raw(raw, self.name(), false, status)
    }
}

/// Answers from a cassette, keyed on the last user message.
pub struct MockProvider {
    cassette: Cassette,
}

impl MockProvider {
    pub fn new(cassette: Cassette) -> Self {
        Self { cassette }
    }

    pub fn cassette(&self) -> &Cassette {
        &self.cassette
    }
}

#[async_trait]
impl LlmProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let content = self
            .cassette
            .lookup(req.prompt())
            .ok_or_else(|| LlmError::NoMatch { cassette: self.cassette.name.clone() })?;
        ChatResponse::from_raw(completion_document(content), self.name(), true, 200)
    }
}

/// Replays recorded exchanges. Unrecorded prompts go to `live` when one is
/// configured (and the exchange is appended to the log); otherwise they fail.
pub struct ReplayProvider {
    log_path: PathBuf,
    live: Option<Arc<dyn LlmProvider>>,
    write_lock: Mutex<()>,
}

impl ReplayProvider {
    pub fn new(log_path: impl Into<PathBuf>, live: Option<Arc<dyn LlmProvider>>) -> Self {
        Self { log_path: log_path.into(), live, write_lock: Mutex::new(()) }
    }
}

#[async_trait]
impl LlmProvider for ReplayProvider {
    fn name(&self) -> &str {
        "replay"
    }

    async fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let prompt = req.prompt();
        // Latest recording wins when a prompt was recorded more than once.
        let hit = record::read_log(&self.log_path)?
            .into_iter()
            .rev()
            .find(|e| e.prompt == prompt);
        if let Some(entry) = hit {
            return ChatResponse::from_raw(completion_document(&entry.response), self.name(), true, 200);
        }
        let live = self
            .live
            .as_ref()
            .ok_or_else(|| LlmError::NotRecorded { path: self.log_path.clone() })?;
        let resp = live.complete(req).await?;
        let _guard = self.write_lock.lock().await;
        record::record(&self.log_path, req, &resp)?;
        Ok(resp)
    }
}
