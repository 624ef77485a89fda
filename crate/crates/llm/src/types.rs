use serde::{Deserialize, Serialize};

use crate::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self { role, content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }
}

/// A completion request. `session_id` is a gateway concern and never leaves
/// the process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

impl ChatRequest {
    /// Single-turn request holding one user message.
    pub fn user(model: impl Into<String>, prompt: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            messages: vec![ChatMessage::user(prompt)],
            session_id: None,
        }
    }

    pub fn with_session(mut self, session_id: impl Into<String>) -> Self {
        self.session_id = Some(session_id.into());
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.last() {
            None => Err(LlmError::InvalidRequest("request has no messages".into())),
            Some(m) if m.role != Role::User => Err(LlmError::InvalidRequest(
                "last message must have role user".into(),
            )),
            Some(_) => Ok(()),
        }
    }

    /// Content of the last user message; cassettes and replay logs key on it.
    pub fn prompt(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    /// Always equal to `raw.choices[0].message.content`.
    pub content: String,
    pub raw: serde_json::Value,
    pub provider: String,
    pub from_cassette: bool,
    /// HTTP status of the transport, 200 for providers without one.
    pub status_code: u16,
}

impl ChatResponse {
    /// Builds a response from a raw completion document, enforcing the
    /// `choices[0].message.content` extraction rule.
    pub fn from_raw(
        raw: serde_json::Value,
        provider: impl Into<String>,
        from_cassette: bool,
        status_code: u16,
    ) -> Result<Self, LlmError> {
        let content = raw
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .ok_or_else(|| LlmError::Malformed("missing choices[0].message.content".into()))?
            .to_string();
        Ok(Self {
            content,
            raw,
            provider: provider.into(),
            from_cassette,
            status_code,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn last_message_must_be_user() {
        let mut req = ChatRequest::user("m", "hi");
        assert!(req.validate().is_ok());
        req.messages.push(ChatMessage::assistant("yo"));
        assert!(req.validate().is_err());
        req.messages.clear();
        assert!(req.validate().is_err());
    }

    #[test]
    fn response_requires_content() {
        let ok = ChatResponse::from_raw(
            json!({"choices":[{"message":{"role":"assistant","content":"x"}}]}),
            "p",
            false,
            200,
        )
        .unwrap();
        assert_eq!(ok.content, "x");
        let err = ChatResponse::from_raw(json!({"choices":[]}), "p", false, 200).unwrap_err();
        assert!(matches!(err, LlmError::Malformed(_)));
    }
}
