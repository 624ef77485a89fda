//! WebClient Robust: HTTP with retries on transport failure.

use std::time::Duration;

use async_trait::async_trait;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{value_text, HttpConfig, ModuleCall, ModuleError, ModuleExecutor, ModuleResult};
use crate::model::{KeyValue, ModuleSpec, ParamKind, ParamMap, ParamSpec, ParamValue, PortSpec, PortType, ResolveEnv, ResolveError, Value};
use crate::stdlib::arity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HttpExchange {
    pub uri: String,
    pub method: String,
    pub content_type: String,
    pub headers: Vec<KeyValue>,
    pub body: String,
    pub status_code: u16,
    pub response_body: String,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum HttpError {
    #[error("invalid uri '{uri}': {reason}")]
    InvalidUri { uri: String, reason: String },

    #[error("invalid method '{0}'")]
    InvalidMethod(String),

    #[error("request to {uri} failed after {attempts} attempt(s): {message}")]
    Transport { uri: String, attempts: u32, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub uri: String,
    pub method: String,
    pub content_type: String,
    pub headers: Vec<KeyValue>,
    pub body: String,
}

fn backoff(base: Duration, retry: u32) -> Duration {
    let exp = base.saturating_mul(1u32 << retry.min(16));
    let jitter = rand::rng().random_range(0.0..0.25);
    exp.mul_f64(1.0 + jitter)
}

/// Sends the request, retrying transport failures up to `retries` times.
/// Any HTTP status is a successful exchange.
pub async fn http_request(req: &HttpRequest, retries: u32, cfg: &HttpConfig) -> Result<HttpExchange, HttpError> {
    let url = reqwest::Url::parse(&req.uri).map_err(|e| HttpError::InvalidUri { uri: req.uri.clone(), reason: e.to_string() })?;
    if !matches!(url.scheme(), "http" | "https") {
        return Err(HttpError::InvalidUri { uri: req.uri.clone(), reason: "scheme must be http or https".into() });
    }
    let method = reqwest::Method::from_bytes(req.method.to_ascii_uppercase().as_bytes())
        .map_err(|_| HttpError::InvalidMethod(req.method.clone()))?;
    let sends_body = !matches!(method, reqwest::Method::GET | reqwest::Method::HEAD);
    let mut attempts = 0;
    loop {
        attempts += 1;
        let mut builder = cfg.client.request(method.clone(), url.clone()).timeout(cfg.request_timeout);
        if sends_body {
            builder = builder.header(reqwest::header::CONTENT_TYPE, &req.content_type).body(req.body.clone());
        }
        for h in &req.headers {
            builder = builder.header(h.key(), h.value());
        }
        let outcome = match builder.send().await {
            Ok(resp) => {
                let status = resp.status().as_u16();
                resp.text().await.map(|body| (status, body))
            }
            Err(e) => Err(e),
        };
        match outcome {
            Ok((status_code, response_body)) => {
                return Ok(HttpExchange {
                    uri: req.uri.clone(),
                    method: method.to_string(),
                    content_type: req.content_type.clone(),
                    headers: req.headers.clone(),
                    body: req.body.clone(),
                    status_code,
                    response_body,
                    attempts,
                })
            }
            Err(e) if attempts > retries => {
                return Err(HttpError::Transport { uri: req.uri.clone(), attempts, message: e.to_string() })
            }
            Err(e) => {
                tracing::debug!(uri = %req.uri, attempt = attempts, error = %e, "retrying request");
                tokio::time::sleep(backoff(cfg.retry_base, attempts - 1)).await;
            }
        }
    }
}

pub(crate) fn spec() -> ModuleSpec {
    ModuleSpec::new("WebClientRobust", "HTTP request; any status is returned as data, transport failures are retried.")
        .param(ParamSpec::with_default("Uri", ParamKind::Text, "", "Absolute http(s) URI; ${VAR} references are expanded"))
        .param(ParamSpec::with_default("Method", ParamKind::Text, "POST", "HTTP method").choices(&["GET", "POST", "PUT", "PATCH", "DELETE"]))
        .param(ParamSpec::with_default("ContentType", ParamKind::Text, "application/json", "Content-Type of the body"))
        .param(ParamSpec::with_default("Retries", ParamKind::Int, 3i64, "Retries after transport failure"))
        .param(ParamSpec::with_default("HeaderCount", ParamKind::Int, 0i64, "Number of Header inputs"))
        .input(PortSpec::optional_input("Uri", PortType::Text).note("overrides the Uri param"))
        .input(PortSpec::optional_input("Body", PortType::Text))
        .output(PortSpec::output("StatusCode", PortType::Int))
        .output(PortSpec::output("Response", PortType::Text))
}

pub(crate) fn resolve(spec: &ModuleSpec, params: &ParamMap, _: &ResolveEnv<'_>) -> Result<ModuleSpec, ResolveError> {
    let headers = arity(params, "HeaderCount")?;
    if params.get("Retries").and_then(ParamValue::as_int).is_some_and(|r| !(0..=10).contains(&r)) {
        return Err(ResolveError::invalid_param("Retries must be between 0 and 10"));
    }
    let mut out = spec.clone();
    if params.get("Uri").and_then(ParamValue::as_text).unwrap_or_default().is_empty() {
        out.inputs[0].required = true;
    }
    out.inputs.extend((0..headers).map(|i| PortSpec::input(format!("Header{i}"), PortType::KeyValue)));
    Ok(out)
}

pub(crate) struct WebClientExecutor;

#[async_trait]
impl ModuleExecutor for WebClientExecutor {
    async fn execute(&self, call: ModuleCall) -> Result<ModuleResult, ModuleError> {
        let uri = call.input_text("Uri").unwrap_or_else(|| call.expanded_param("Uri"));
        let headers = (0..call.param_int("HeaderCount"))
            .filter_map(|i| match call.input(&format!("Header{i}")) {
                Some(Value::KeyValue(kv)) => Some(kv.clone()),
                _ => None,
            })
            .collect();
        let req = HttpRequest {
            uri,
            method: call.param_text("Method").to_string(),
            content_type: call.param_text("ContentType").to_string(),
            headers,
            body: call.input("Body").map(value_text).unwrap_or_default(),
        };
        let retries = call.param_int("Retries").max(0) as u32;
        let ex = http_request(&req, retries, &call.ctx.http).await.map_err(|e| ModuleError::new(e.to_string()))?;
        let detail = serde_json::json!({ "uri": ex.uri, "method": ex.method, "statusCode": ex.status_code, "attempts": ex.attempts });
        Ok(ModuleResult::new()
            .output("StatusCode", Value::Int(ex.status_code as i64))
            .output("Response", Value::Text(ex.response_body))
            .with_detail(detail))
    }
}
