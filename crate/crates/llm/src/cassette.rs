//! Deterministic prompt→response fixtures.

use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::LlmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchKind {
    Exact,
    Substring,
    Regex,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Matcher {
    #[serde(rename = "type")]
    pub kind: MatchKind,
    pub pattern: String,
    #[serde(skip)]
    compiled: Option<Regex>,
}

impl Matcher {
    pub fn new(kind: MatchKind, pattern: impl Into<String>) -> Result<Self, LlmError> {
        let mut m = Self { kind, pattern: pattern.into(), compiled: None };
        m.compile()?;
        Ok(m)
    }

    pub fn exact(pattern: impl Into<String>) -> Self {
        Self { kind: MatchKind::Exact, pattern: pattern.into(), compiled: None }
    }

    pub fn substring(pattern: impl Into<String>) -> Self {
        Self { kind: MatchKind::Substring, pattern: pattern.into(), compiled: None }
    }

    fn compile(&mut self) -> Result<(), LlmError> {
        if self.kind == MatchKind::Regex && self.compiled.is_none() {
            let re = Regex::new(&self.pattern).map_err(|e| {
                LlmError::Cassette(format!("pattern {:?} does not compile: {e}", self.pattern))
            })?;
            self.compiled = Some(re);
        }
        Ok(())
    }

    pub fn matches(&self, prompt: &str) -> bool {
        match self.kind {
            MatchKind::Exact => prompt == self.pattern,
            MatchKind::Substring => prompt.contains(&self.pattern),
            MatchKind::Regex => self.compiled.as_ref().is_some_and(|re| re.is_match(prompt)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CassetteEntry {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub response: String,
}

/// Ordered list of fixtures. Lookup is first-match-wins in entry order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cassette {
    pub name: String,
    pub entries: Vec<CassetteEntry>,
}

impl Cassette {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), entries: Vec::new() }
    }

    pub fn with_entry(mut self, matcher: Matcher, response: impl Into<String>) -> Result<Self, LlmError> {
        let mut matcher = matcher;
        matcher.compile()?;
        self.entries.push(CassetteEntry { matcher, response: response.into() });
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let mut cassette: Cassette =
            serde_json::from_str(text).map_err(|e| LlmError::Cassette(e.to_string()))?;
        for entry in &mut cassette.entries {
            entry.matcher.compile()?;
        }
        Ok(cassette)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Cassette(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn lookup(&self, prompt: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| e.matcher.matches(prompt))
            .map(|e| e.response.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_match_wins() {
        let c = Cassette::from_json(
            r#"{"name":"t","entries":[
                {"match":{"type":"substring","pattern":"add"},"response":"first"},
                {"match":{"type":"regex","pattern":"^Write .* integers"},"response":"second"},
                {"match":{"type":"exact","pattern":"hello"},"response":"third"}
            ]}"#,
        )
        .unwrap();
        assert_eq!(c.lookup("Write a function that adds two integers"), Some("first"));
        assert_eq!(c.lookup("Write a function that multiplies two integers"), Some("second"));
        assert_eq!(c.lookup("hello"), Some("third"));
        assert_eq!(c.lookup("hello!"), None);
    }

    #[test]
    fn bad_regex_rejected_at_load() {
        let err = Cassette::from_json(
            r#"{"name":"t","entries":[{"match":{"type":"regex","pattern":"("},"response":"x"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, LlmError::Cassette(_)));
    }
}
