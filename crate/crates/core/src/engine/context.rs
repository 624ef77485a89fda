use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use jitflow_llm::Gateway;

use crate::engine::TraceEvent;
use crate::model::{ModuleCatalog, ModuleSpec, ParamMap, ParamValue, Value};

pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(120);
pub const DEFAULT_SCRIPT_TIMEOUT: Duration = Duration::from_secs(30);
/// Deepest App Reference nesting allowed.
pub const MAX_NESTING: usize = 16;

/// Whether gated modules wait for a human decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatePolicy {
    Require,
    /// Gates are approved automatically (and recorded as such).
    Auto,
}

/// The external command that runs generated code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterpreterConfig {
    pub command: String,
    pub args: Vec<String>,
    /// Extension of the generated script file, without the dot.
    pub extension: String,
    pub timeout: Duration,
}

impl Default for InterpreterConfig {
    fn default() -> Self {
        Self { command: "python3".into(), args: Vec::new(), extension: "py".into(), timeout: DEFAULT_SCRIPT_TIMEOUT }
    }
}

impl InterpreterConfig {
    /// Reads `JITFLOW_INTERPRETER`, a command line split on whitespace.
    pub fn from_env() -> Self {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Self {
        let mut cfg = Self::default();
        if let Some(line) = lookup("JITFLOW_INTERPRETER").filter(|s| !s.trim().is_empty()) {
            let mut parts = line.split_whitespace().map(str::to_string);
            cfg.command = parts.next().unwrap_or_default();
            cfg.args = parts.collect();
        }
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub client: reqwest::Client,
    /// First retry delay; doubles per attempt, with jitter.
    pub retry_base: Duration,
    pub request_timeout: Duration,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self { client: reqwest::Client::new(), retry_base: Duration::from_millis(500), request_timeout: Duration::from_secs(60) }
    }
}

/// A module failure as reported by its executor.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{message}")]
pub struct ModuleError {
    pub message: String,
    pub detail: serde_json::Value,
}

impl ModuleError {
    pub fn new(message: impl Into<String>) -> Self {
        Self { message: message.into(), detail: serde_json::Value::Null }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = detail;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModuleResult {
    pub outputs: BTreeMap<String, Value>,
    /// Extra trace detail (workdir, stderr, attempts, ...).
    pub detail: serde_json::Value,
}

impl ModuleResult {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn output(mut self, port: &str, value: Value) -> Self {
        self.outputs.insert(port.to_string(), value);
        self
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = detail;
        self
    }
}

/// Everything an executor sees for one module firing.
#[derive(Clone)]
pub struct ModuleCall {
    pub run_id: String,
    pub module_id: String,
    pub kind: String,
    /// Instance params with defaults applied.
    pub params: ParamMap,
    pub spec: ModuleSpec,
    pub inputs: BTreeMap<String, Value>,
    pub depth: usize,
    pub ctx: Arc<ExecutionContext>,
}

impl ModuleCall {
    pub fn param(&self, name: &str) -> Option<&ParamValue> {
        self.params.get(name)
    }

    pub fn param_text(&self, name: &str) -> &str {
        self.params.get(name).and_then(ParamValue::as_text).unwrap_or("")
    }

    pub fn param_int(&self, name: &str) -> i64 {
        self.params.get(name).and_then(ParamValue::as_int).unwrap_or(0)
    }

    pub fn param_bool(&self, name: &str) -> bool {
        self.params.get(name).and_then(ParamValue::as_bool).unwrap_or(false)
    }

    pub fn input(&self, name: &str) -> Option<&Value> {
        self.inputs.get(name)
    }

    /// A text input; other scalars are stringified.
    pub fn input_text(&self, name: &str) -> Option<String> {
        self.inputs.get(name).map(value_text)
    }

    /// `param` with `${VAR}` references expanded from the context.
    pub fn expanded_param(&self, name: &str) -> String {
        crate::stdlib::expand_vars(self.param_text(name), &self.ctx.vars)
    }
}

/// Text form of a value for argv, headers and templates.
pub fn value_text(v: &Value) -> String {
    match v {
        Value::Text(s) => s.clone(),
        other => match other.coerce_to(&crate::model::PortType::Text) {
            Some(Value::Text(s)) => s,
            _ => other.to_plain_json().to_string(),
        },
    }
}

#[async_trait]
pub trait ModuleExecutor: Send + Sync {
    async fn execute(&self, call: ModuleCall) -> Result<ModuleResult, ModuleError>;
}

/// Executors keyed by module kind.
#[derive(Clone, Default)]
pub struct ExecutorRegistry {
    executors: HashMap<String, Arc<dyn ModuleExecutor>>,
}

impl ExecutorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, kind: &str, executor: Arc<dyn ModuleExecutor>) {
        self.executors.insert(kind.to_string(), executor);
    }

    pub fn get(&self, kind: &str) -> Option<Arc<dyn ModuleExecutor>> {
        self.executors.get(kind).cloned()
    }
}

/// Receives each trace event as it is appended.
pub trait RunObserver: Send + Sync {
    fn on_event(&self, run_id: &str, event: &TraceEvent);
}

/// Configuration shared by every module firing in a run.
#[derive(Clone)]
pub struct ExecutionContext {
    pub catalog: Arc<ModuleCatalog>,
    pub executors: Arc<ExecutorRegistry>,
    pub interpreter: InterpreterConfig,
    pub gateway: Option<Arc<Gateway>>,
    /// Values for `${VAR}` references in params.
    pub vars: BTreeMap<String, String>,
    pub gate_policy: GatePolicy,
    pub deadline: Duration,
    pub http: HttpConfig,
    /// Run ready modules concurrently (otherwise one at a time).
    pub parallel: bool,
    pub observer: Option<Arc<dyn RunObserver>>,
}

impl fmt::Debug for ExecutionContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExecutionContext")
            .field("interpreter", &self.interpreter)
            .field("gate_policy", &self.gate_policy)
            .field("deadline", &self.deadline)
            .field("parallel", &self.parallel)
            .finish_non_exhaustive()
    }
}

impl ExecutionContext {
    pub fn new(catalog: Arc<ModuleCatalog>, executors: Arc<ExecutorRegistry>) -> Self {
        Self {
            catalog,
            executors,
            interpreter: InterpreterConfig::default(),
            gateway: None,
            vars: BTreeMap::new(),
            gate_policy: GatePolicy::Auto,
            deadline: DEFAULT_DEADLINE,
            http: HttpConfig::default(),
            parallel: true,
            observer: None,
        }
    }

    pub fn with_gate_policy(mut self, policy: GatePolicy) -> Self {
        self.gate_policy = policy;
        self
    }

    pub fn with_gateway(mut self, gateway: Arc<Gateway>) -> Self {
        self.gateway = Some(gateway);
        self
    }

    pub fn with_var(mut self, name: &str, value: impl Into<String>) -> Self {
        self.vars.insert(name.to_string(), value.into());
        self
    }

    /// Copies the process environment into `vars`.
    pub fn with_process_env(mut self) -> Self {
        self.vars.extend(std::env::vars());
        self
    }

    pub fn with_interpreter(mut self, interpreter: InterpreterConfig) -> Self {
        self.interpreter = interpreter;
        self
    }

    pub fn with_deadline(mut self, deadline: Duration) -> Self {
        self.deadline = deadline;
        self
    }

    pub fn with_parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn with_observer(mut self, observer: Arc<dyn RunObserver>) -> Self {
        self.observer = Some(observer);
        self
    }

    pub fn with_retry_base(mut self, base: Duration) -> Self {
        self.http.retry_base = base;
        self
    }
}
