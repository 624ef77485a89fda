//! Execution context and LLM gateway assembled from `JITFLOW_*` variables.

use std::collections::BTreeMap;
use std::sync::Arc;

use jitflow_core::engine::{ExecutionContext, InterpreterConfig};
use jitflow_core::model::FlowSource;
use jitflow_core::stdlib::standard_context;
use jitflow_llm::{serve_mock, Cassette, Gateway, GatewayConfig, LlmError, MockServerHandle, ProviderKind};

/// Key handed to flows when the mock provider needs none.
pub const MOCK_API_KEY: &str = "mock-key";

/// A ready-to-use execution context plus the gateway behind the JIT
/// endpoints. With the mock provider a local mock server is started and the
/// packaged JIT flow is pointed at it, so flow-level and gateway-level
/// generation answer from the same cassette.
pub struct Runtime {
    pub ctx: ExecutionContext,
    /// Why no gateway is available, when it is not.
    pub gateway: Result<Arc<Gateway>, String>,
    mock: Option<MockServerHandle>,
}

impl Runtime {
    /// Reads the process environment.
    pub async fn from_env(flows: Option<Arc<dyn FlowSource>>) -> Result<Self, LlmError> {
        Self::from_vars(flows, std::env::vars().collect()).await
    }

    /// Builds from an explicit variable map. The map also becomes the
    /// context's `${VAR}` table.
    pub async fn from_vars(
        flows: Option<Arc<dyn FlowSource>>,
        mut vars: BTreeMap<String, String>,
    ) -> Result<Self, LlmError> {
        let config = GatewayConfig::from_lookup(|k| vars.get(k).cloned())?;
        let mut mock = None;
        if config.provider == ProviderKind::Mock {
            let path = config
                .cassette
                .as_ref()
                .ok_or_else(|| LlmError::Config("mock provider needs JITFLOW_CASSETTE".into()))?;
            let server = serve_mock(Cassette::load(path)?, 0).await?;
            vars.insert("JITFLOW_LLM_BASE_URL".into(), server.base_url());
            vars.entry("JITFLOW_LLM_API_KEY".into()).or_insert_with(|| MOCK_API_KEY.into());
            mock = Some(server);
        }
        let gateway = config.build().map(Arc::new).map_err(|e| e.to_string());
        let interpreter = InterpreterConfig::from_lookup(|k| vars.get(k).cloned());
        let mut ctx = standard_context(flows).with_interpreter(interpreter);
        if let Ok(gw) = &gateway {
            ctx = ctx.with_gateway(gw.clone());
        }
        ctx.vars.extend(vars);
        Ok(Self { ctx, gateway, mock })
    }

    /// Base URL of the in-process mock server, when one is running.
    pub fn mock_url(&self) -> Option<String> {
        self.mock.as_ref().map(MockServerHandle::base_url)
    }
}
