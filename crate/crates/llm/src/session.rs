use serde::{Deserialize, Serialize};

use crate::ChatMessage;

pub const DEFAULT_MAX_MESSAGES: usize = 20;

/// Rolling conversation context. The oldest messages are dropped once the
/// history exceeds `max_messages`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub history: Vec<ChatMessage>,
    pub max_messages: usize,
}

impl Session {
    pub fn new(session_id: impl Into<String>) -> Self {
        Self::with_capacity(session_id, DEFAULT_MAX_MESSAGES)
    }

    pub fn with_capacity(session_id: impl Into<String>, max_messages: usize) -> Self {
        Self { session_id: session_id.into(), history: Vec::new(), max_messages }
    }

    pub fn push(&mut self, message: ChatMessage) {
        self.history.push(message);
        if self.history.len() > self.max_messages {
            let excess = self.history.len() - self.max_messages;
            self.history.drain(..excess);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oldest_messages_dropped() {
        let mut s = Session::with_capacity("s", 3);
        for i in 0..5 {
            s.push(ChatMessage::user(i.to_string()));
        }
        let contents: Vec<_> = s.history.iter().map(|m| m.content.as_str()).collect();
        assert_eq!(contents, ["2", "3", "4"]);
    }
}
