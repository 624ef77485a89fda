use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use crate::{Cassette, Gateway, LlmError, LlmProvider, MockProvider, OpenAiCompatProvider, ReplayProvider};

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com";
const DEFAULT_REPLAY_LOG: &str = "llm-exchanges.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProviderKind {
    OpenAiCompat,
    Mock,
    Replay,
}

impl FromStr for ProviderKind {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "openai" | "openai-compat" => Ok(ProviderKind::OpenAiCompat),
            "mock" => Ok(ProviderKind::Mock),
            "replay" => Ok(ProviderKind::Replay),
            other => Err(LlmError::Config(format!("unknown provider '{other}'"))),
        }
    }
}

/// Everything needed to build a [`Gateway`], normally read from
/// `JITFLOW_LLM_*` environment variables.
#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub provider: ProviderKind,
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub cassette: Option<PathBuf>,
    /// Exchange log read by the replay provider (`JITFLOW_LLM_LOG`).
    pub replay_log: PathBuf,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::OpenAiCompat,
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key: None,
            model: DEFAULT_MODEL.to_string(),
            cassette: None,
            replay_log: PathBuf::from(DEFAULT_REPLAY_LOG),
        }
    }
}

impl GatewayConfig {
    pub fn mock(cassette: impl Into<PathBuf>) -> Self {
        Self { provider: ProviderKind::Mock, cassette: Some(cassette.into()), ..Self::default() }
    }

    pub fn from_env() -> Result<Self, LlmError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, LlmError> {
        let get = |k: &str| lookup(k).filter(|v| !v.is_empty());
        let mut cfg = Self::default();
        if let Some(p) = get("JITFLOW_LLM_PROVIDER") {
            cfg.provider = p.parse()?;
        }
        if let Some(v) = get("JITFLOW_LLM_BASE_URL") {
            cfg.base_url = v;
        }
        cfg.api_key = get("JITFLOW_LLM_API_KEY");
        if let Some(v) = get("JITFLOW_LLM_MODEL") {
            cfg.model = v;
        }
        cfg.cassette = get("JITFLOW_CASSETTE").map(PathBuf::from);
        if let Some(v) = get("JITFLOW_LLM_LOG") {
            cfg.replay_log = PathBuf::from(v);
        }
        Ok(cfg)
    }

    fn live_provider(&self) -> Result<OpenAiCompatProvider, LlmError> {
        let key = self
            .api_key
            .clone()
            .ok_or_else(|| LlmError::Config("JITFLOW_LLM_API_KEY is not set".into()))?;
        Ok(OpenAiCompatProvider::new(self.base_url.clone(), key))
    }

    pub fn build_provider(&self) -> Result<Arc<dyn LlmProvider>, LlmError> {
        Ok(match self.provider {
            ProviderKind::OpenAiCompat => Arc::new(self.live_provider()?),
            ProviderKind::Mock => {
                let path = self
                    .cassette
                    .as_ref()
                    .ok_or_else(|| LlmError::Config("mock provider needs JITFLOW_CASSETTE".into()))?;
                Arc::new(MockProvider::new(Cassette::load(path)?))
            }
            ProviderKind::Replay => {
                // Without a key there is no live fallback: replay stays offline.
                let live = match self.api_key {
                    Some(_) => Some(Arc::new(self.live_provider()?) as Arc<dyn LlmProvider>),
                    None => None,
                };
                Arc::new(ReplayProvider::new(self.replay_log.clone(), live))
            }
        })
    }

    pub fn build(&self) -> Result<Gateway, LlmError> {
        Ok(Gateway::new(self.build_provider()?, self.model.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn reads_variables() {
        let vars: HashMap<&str, &str> = [
            ("JITFLOW_LLM_PROVIDER", "mock"),
            ("JITFLOW_CASSETTE", "/tmp/c.json"),
            ("JITFLOW_LLM_MODEL", "m1"),
        ]
        .into();
        let cfg = GatewayConfig::from_lookup(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.provider, ProviderKind::Mock);
        assert_eq!(cfg.model, "m1");
        assert_eq!(cfg.cassette.as_deref(), Some(std::path::Path::new("/tmp/c.json")));
        assert_eq!(cfg.base_url, DEFAULT_BASE_URL);
    }

    #[test]
    fn defaults_model_and_rejects_unknown_provider() {
        let cfg = GatewayConfig::from_lookup(|_| None).unwrap();
        assert_eq!(cfg.model, "gpt-3.5-turbo");
        assert!(GatewayConfig::from_lookup(|k| (k == "JITFLOW_LLM_PROVIDER").then(|| "x".into())).is_err());
    }

    #[test]
    fn openai_requires_key() {
        let cfg = GatewayConfig::default();
        assert!(matches!(cfg.build(), Err(LlmError::Config(_))));
    }
}
