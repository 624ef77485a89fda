//! Just-in-time code generation and flow synthesis.
//!
//! Code generation asks the LLM for code and keeps the first fenced block.
//! Flow synthesis asks for a flow in the DSL, validates it against the
//! catalog and feeds the diagnostics back until the flow checks or the
//! attempts run out.

use serde::{Deserialize, Serialize};

use jitflow_llm::{Gateway, LlmError};

use crate::dsl::{DslOrigin, DslSource, GRAMMAR};
use crate::model::{parse_flow_document, validate_flow, FlowDefinition, FlowSource, Issue, ModuleCatalog, ValidationReport};

pub const JIT_FLOW_ID: &str = "jit-codegen";
pub const JIT_FLOW_JSON: &str = include_str!("../../assets/jit-codegen.flow.json");
pub const SYNTHESIS_PROMPT: &str = include_str!("../../assets/synthesis-prompt.txt");
pub const FEWSHOT_ADD: &str = include_str!("../../assets/fewshot-add.flow");
pub const DEFAULT_MAX_ATTEMPTS: usize = 3;

/// Contents of the first ``` fenced block, without the fence line's
/// language tag; the whole text when there is no fence. Always trimmed.
pub fn extract_code(response: &str) -> String {
    let Some(open) = response.find("```") else {
        return response.trim().to_string();
    };
    let after = &response[open + 3..];
    let body = match after.find('\n') {
        Some(nl) => &after[nl + 1..],
        None => "",
    };
    let block = match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    };
    block.trim().to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CodegenResult {
    pub prompt: String,
    pub raw_response: String,
    pub code: String,
    pub status_code: u16,
}

/// One completion for `prompt` (plus `suffix`, space-separated, when
/// non-empty).
pub async fn generate_code(gateway: &Gateway, prompt: &str, suffix: &str) -> Result<CodegenResult, LlmError> {
    let full = match suffix.trim() {
        "" => prompt.to_string(),
        s => format!("{prompt} {s}"),
    };
    let resp = gateway.complete(gateway.request(full.clone())).await?;
    Ok(CodegenResult { prompt: full, code: extract_code(&resp.content), raw_response: resp.content, status_code: resp.status_code })
}

/// The packaged "JIT Code Generation" flow.
pub fn builtin_jit_flow() -> FlowDefinition {
    parse_flow_document(JIT_FLOW_JSON).expect("packaged JIT flow parses")
}

/// Serves the packaged flows by id.
pub struct BuiltinFlows;

impl FlowSource for BuiltinFlows {
    fn load_flow(&self, id: &str) -> Option<FlowDefinition> {
        (id == JIT_FLOW_ID).then(builtin_jit_flow)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SynthesisAttempt {
    pub response_text: String,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SynthesisResult {
    pub prompt: String,
    /// Present only when `report.ok`.
    pub flow: Option<FlowDefinition>,
    pub report: ValidationReport,
    pub attempts: Vec<SynthesisAttempt>,
    pub attempt_count: usize,
}

/// The first-turn synthesis prompt for `task`.
pub fn synthesis_prompt(catalog: &ModuleCatalog, task: &str) -> String {
    SYNTHESIS_PROMPT
        .replace("{{CATALOG}}", catalog.summary().trim_end())
        .replace("{{GRAMMAR}}", GRAMMAR)
        .replace("{{EXAMPLE}}", FEWSHOT_ADD)
        .replace("{{PROMPT}}", task.trim())
}

fn repair_prompt(task: &str, report: &ValidationReport) -> String {
    let issues: Vec<String> = report.errors().map(|i| format!("- {i}")).collect();
    format!(
        "Your previous answer was rejected:\n{}\n\nTask:\n{}\n\nOutput only a fenced DSL block containing the corrected flow.",
        issues.join("\n"),
        task.trim()
    )
}

/// Parses a response as DSL, then as flow JSON. A parse failure becomes a
/// `parse-error` report.
pub fn parse_response(text: &str) -> Result<FlowDefinition, ValidationReport> {
    let code = extract_code(text);
    let dsl_err = match DslSource::new(code.clone(), DslOrigin::Llm).parse() {
        Ok(f) => return Ok(f),
        Err(d) => d,
    };
    if code.trim_start().starts_with('{') {
        if let Ok(f) = parse_flow_document(&code) {
            return Ok(f);
        }
    }
    let issue = Issue::error("parse-error", format!("{}:{}", dsl_err.line, dsl_err.column), dsl_err.message);
    Err(ValidationReport::from_issues(vec![issue]))
}

/// Prompt → flow → validate, retrying with the diagnostics on one gateway
/// session up to `max_attempts` times.
pub async fn synthesize_flow(
    prompt: &str,
    catalog: &ModuleCatalog,
    gateway: &Gateway,
    max_attempts: usize,
) -> Result<SynthesisResult, LlmError> {
    let session = format!("synth-{}", uuid::Uuid::new_v4().simple());
    let result = synthesize_in_session(prompt, catalog, gateway, max_attempts.max(1), &session).await;
    gateway.drop_session(&session);
    result
}

async fn synthesize_in_session(
    prompt: &str,
    catalog: &ModuleCatalog,
    gateway: &Gateway,
    max_attempts: usize,
    session: &str,
) -> Result<SynthesisResult, LlmError> {
    let mut attempts = Vec::new();
    let mut message = synthesis_prompt(catalog, prompt);
    loop {
        let resp = gateway.complete(gateway.request(message).with_session(session)).await?;
        let (flow, report) = match parse_response(&resp.content) {
            Ok(flow) => {
                let report = validate_flow(&flow, catalog);
                (Some(flow), report)
            }
            Err(report) => (None, report),
        };
        attempts.push(SynthesisAttempt { response_text: resp.content, report: report.clone() });
        tracing::debug!(attempt = attempts.len(), ok = report.ok, "synthesis attempt");
        if report.ok || attempts.len() >= max_attempts {
            return Ok(SynthesisResult {
                prompt: prompt.to_string(),
                flow: flow.filter(|_| report.ok),
                report,
                attempt_count: attempts.len(),
                attempts,
            });
        }
        message = repair_prompt(prompt, &report);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extraction_examples() {
        assert_eq!(extract_code("Here you go:\n```python\nx=1\n```\nEnjoy!"), "x=1");
        assert_eq!(extract_code("x=1"), "x=1");
        assert_eq!(extract_code("```\na\n```\n```\nb\n```"), "a");
        assert_eq!(extract_code("```python\nunterminated\n"), "unterminated");
    }

    #[test]
    fn prompt_has_all_parts() {
        let catalog = crate::stdlib::standard_catalog();
        let p = synthesis_prompt(&catalog, "do it");
        for placeholder in ["{{CATALOG}}", "{{GRAMMAR}}", "{{EXAMPLE}}", "{{PROMPT}}"] {
            assert!(!p.contains(placeholder));
        }
        assert!(p.contains("Calculator") && p.contains("'connect'") && p.contains("module c: Calculator"));
        assert!(p.trim_end().ends_with("Output only a fenced DSL block containing the flow."));
    }

    #[test]
    fn unparseable_response_reports_parse_error() {
        let report = parse_response("no flow here").unwrap_err();
        assert!(!report.ok);
        assert_eq!(report.error_codes(), vec!["parse-error"]);
    }

    proptest! {
        #[test]
        fn extraction_is_idempotent(s in "[a-z \n`]{0,40}") {
            let once = extract_code(&s);
            prop_assert_eq!(extract_code(&once), once);
        }
    }
}
