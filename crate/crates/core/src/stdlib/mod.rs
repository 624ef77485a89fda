//! The standard module library and its catalog.

mod basic;
pub mod csv;
mod http;
mod script;
pub mod text;

use std::sync::Arc;

use async_trait::async_trait;
use serde_json::json;

use crate::engine::{
    app_reference_template, resolve_app_reference_spec, AppReferenceExecutor, ExecutionContext, ExecutorRegistry,
    ModuleCall, ModuleError, ModuleExecutor, ModuleResult,
};
use crate::model::{
    FlowSource, ModuleCatalog, ModuleSpec, ParamKind, ParamMap, ParamSpec, ParamValue, PortSpec, PortType, ResolveError,
};

pub use basic::{eval_calculator, make_key_value, CalcError};
pub use csv::{parse_csv, write_csv, CsvError};
pub use http::{http_request, HttpError, HttpExchange, HttpRequest};
pub use script::{
    function_harness, parse_scalar_output, run_code_script, run_code_table, run_script, table_harness, ScriptError,
    ScriptInvocation, ScriptOutcome, TableRunError,
};
pub use text::{
    expand_vars, format_string, format_template, json_escape, query_json, query_jsonpath, replace_regex, EscapeMode,
    FormatError, JsonPathError,
};

/// Upper bound for arity params such as `ArgCount`.
pub const MAX_ARITY: usize = 32;

pub(crate) fn arity(params: &ParamMap, name: &str) -> Result<usize, ResolveError> {
    let n = params.get(name).and_then(ParamValue::as_int).unwrap_or(0);
    if !(0..=MAX_ARITY as i64).contains(&n) {
        return Err(ResolveError::invalid_param(format!("{name} must be between 0 and {MAX_ARITY}")));
    }
    Ok(n as usize)
}

pub const LLM_CODEGEN: &str = "LlmCodeGen";

fn llm_codegen_spec() -> ModuleSpec {
    ModuleSpec::new(LLM_CODEGEN, "Asks the configured LLM gateway for code and extracts the first fenced block.")
        .param(ParamSpec::optional("PromptSuffix", ParamKind::Text, "Text appended to the prompt"))
        .input(PortSpec::input("Prompt", PortType::Text))
        .output(PortSpec::output("Code", PortType::Text))
        .output(PortSpec::output("Raw", PortType::Text))
        .output(PortSpec::output("StatusCode", PortType::Int))
}

struct LlmCodeGenExecutor;

#[async_trait]
impl ModuleExecutor for LlmCodeGenExecutor {
    async fn execute(&self, call: ModuleCall) -> Result<ModuleResult, ModuleError> {
        let gateway = call.ctx.gateway.clone().ok_or_else(|| ModuleError::new("no LLM gateway configured"))?;
        let prompt = call.input_text("Prompt").unwrap_or_default();
        let res = crate::jit::generate_code(&gateway, &prompt, call.param_text("PromptSuffix"))
            .await
            .map_err(|e| ModuleError::new(e.to_string()).with_detail(json!({ "llmError": e.code() })))?;
        let detail = json!({ "provider": gateway.provider_name(), "prompt": res.prompt });
        Ok(ModuleResult::new()
            .output("Code", crate::model::Value::Text(res.code))
            .output("Raw", crate::model::Value::Text(res.raw_response))
            .output("StatusCode", crate::model::Value::Int(res.status_code as i64))
            .with_detail(detail))
    }
}

/// Every module kind of the standard library.
pub fn standard_catalog() -> ModuleCatalog {
    let mut c = ModuleCatalog::new();
    let add = |r: Result<(), String>| r.expect("standard kinds are unique");
    add(c.register_with(basic::external_input_spec("ExternalIntInput", PortType::Int, Some(ParamKind::Int)), basic::resolve_external_input));
    add(c.register_with(basic::external_input_spec("ExternalStringInput", PortType::Text, Some(ParamKind::Text)), basic::resolve_external_input));
    add(c.register_with(basic::external_input_spec("ExternalTableInput", PortType::Table, None), basic::resolve_external_input));
    add(c.register(basic::external_output_spec("ExternalIntOutput", PortType::Int)));
    add(c.register(basic::external_output_spec("ExternalStringOutput", PortType::Text)));
    add(c.register(basic::external_output_spec("ExternalTableOutput", PortType::Table)));
    add(c.register_with(basic::calculator_spec(), basic::resolve_calculator));
    add(c.register_with(basic::key_value_spec(), basic::resolve_key_value));
    add(c.register_with(basic::formatter_spec(), basic::resolve_formatter));
    add(c.register_with(http::spec(), http::resolve));
    add(c.register_with(basic::jsonpath_spec(), basic::resolve_jsonpath));
    add(c.register_with(basic::regex_spec(), basic::resolve_regex));
    add(c.register_with(script::code_function_spec(), script::resolve_code_function));
    add(c.register_with(script::code_script_spec(), script::resolve_code_script));
    add(c.register_with(script::code_table_spec(), script::resolve_code_table));
    add(c.register_with(app_reference_template(), resolve_app_reference_spec));
    add(c.register(llm_codegen_spec()));
    c
}

/// Executors for every kind in [`standard_catalog`].
pub fn standard_executors() -> ExecutorRegistry {
    use basic::SyncExec;
    let mut r = ExecutorRegistry::new();
    for kind in ["ExternalIntInput", "ExternalStringInput", "ExternalTableInput"] {
        r.insert(kind, Arc::new(SyncExec(basic::exec_external_input)));
    }
    for kind in ["ExternalIntOutput", "ExternalStringOutput", "ExternalTableOutput"] {
        r.insert(kind, Arc::new(SyncExec(basic::exec_passthrough)));
    }
    r.insert("Calculator", Arc::new(SyncExec(basic::exec_calculator)));
    r.insert("KeyValuePair", Arc::new(SyncExec(basic::exec_key_value)));
    r.insert("StringFormatter", Arc::new(SyncExec(basic::exec_formatter)));
    r.insert("WebClientRobust", Arc::new(http::WebClientExecutor));
    r.insert("JSONPathQuery", Arc::new(SyncExec(basic::exec_jsonpath)));
    r.insert("RegexReplace", Arc::new(SyncExec(basic::exec_regex)));
    r.insert("CodeFunction", Arc::new(script::CodeFunctionExecutor));
    r.insert("CodeScript", Arc::new(script::CodeScriptExecutor));
    r.insert("CodeTable", Arc::new(script::CodeTableExecutor));
    r.insert(crate::engine::APP_REFERENCE, Arc::new(AppReferenceExecutor));
    r.insert(LLM_CODEGEN, Arc::new(LlmCodeGenExecutor));
    r
}

/// Standard catalog over `flows` (the packaged JIT flow is always
/// available) plus the standard executors.
pub fn standard_context(flows: Option<Arc<dyn FlowSource>>) -> ExecutionContext {
    let builtin: Arc<dyn FlowSource> = Arc::new(crate::jit::BuiltinFlows);
    let source: Arc<dyn FlowSource> = match flows {
        Some(f) => Arc::new(crate::model::LayeredFlows(vec![f, builtin])),
        None => builtin,
    };
    let catalog = standard_catalog().with_flows(source);
    ExecutionContext::new(Arc::new(catalog), Arc::new(standard_executors()))
}
