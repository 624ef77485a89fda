//! `/api/v1` routes.

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::StreamExt;
use jitflow_core::engine::{GateDecision, PlanError, ResumeError};
use jitflow_core::jit::{generate_code, synthesize_flow, DEFAULT_MAX_ATTEMPTS};
use jitflow_core::model::{parse_flow_document, validate_flow, FlowDefinition, ModuleCatalog};
use jitflow_llm::Gateway;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value as Json_};

use crate::runs::{RunError, RunManager};
use crate::store::{FlowStore, StoreError};

/// Shared state behind every handler.
pub struct AppState {
    pub flows: Arc<FlowStore>,
    pub runs: Arc<RunManager>,
    pub catalog: Arc<ModuleCatalog>,
    pub gateway: Result<Arc<Gateway>, String>,
}

type Shared = State<Arc<AppState>>;

/// A JSON error body `{"error", "code", ...}` with a status.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    extra: Option<(&'static str, Json_)>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), extra: None }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    fn with(mut self, key: &'static str, value: Json_) -> Self {
        self.extra = Some((key, value));
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message, "code": self.code });
        if let Some((k, v)) = self.extra {
            body[k] = v;
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match &e {
            StoreError::InvalidId(_) => ApiError::new(StatusCode::BAD_REQUEST, "invalid-id", e.to_string()),
            StoreError::Conflict(_) => ApiError::new(StatusCode::CONFLICT, "conflict", e.to_string()),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()),
        }
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        match &e {
            RunError::UnknownRun(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown-run", e.to_string()),
            RunError::Plan(p) => {
                let err = ApiError::new(StatusCode::BAD_REQUEST, p.code(), e.to_string());
                match p {
                    PlanError::Invalid(report) => err.with("report", serde_json::to_value(report).unwrap()),
                    _ => err,
                }
            }
            RunError::Resume(r @ ResumeError::WrongState { .. }) => ApiError::new(StatusCode::CONFLICT, r.code(), e.to_string()),
            RunError::Resume(r @ ResumeError::UnknownGate { .. }) => {
                ApiError::new(StatusCode::BAD_REQUEST, r.code(), e.to_string())
            }
            RunError::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string()),
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed JSON body: {e}")))
}

fn parse_flow(body: &[u8]) -> Result<FlowDefinition, ApiError> {
    let text = std::str::from_utf8(body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    parse_flow_document(text).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed-flow", e.to_string()))
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/catalog", get(catalog))
        .route("/flows", get(list_flows).post(create_flow))
        .route("/flows/validate", post(validate))
        .route("/flows/{id}", get(get_flow))
        .route("/runs", get(list_runs).post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/trace", get(get_trace))
        .route("/runs/{id}/events", get(run_events))
        .route("/runs/{id}/approval", post(approval))
        .route("/jit/codegen", post(codegen))
        .route("/jit/synthesize", post(synthesize))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such endpoint") })
        .with_state(state);
    Router::new().nest("/api/v1", api)
}

async fn catalog(State(s): Shared) -> Json<Json_> {
    Json(json!(s.catalog.specs().collect::<Vec<_>>()))
}

async fn list_flows(State(s): Shared) -> Result<Json<Json_>, ApiError> {
    let ids = s.flows.list().map_err(StoreError::from)?;
    Ok(Json(json!({ "ids": ids })))
}

async fn create_flow(
    State(s): Shared,
    Query(q): Query<HashMap<String, String>>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let flow = parse_flow(&body)?;
    let id = s.flows.put(&flow, q.get("id").map(String::as_str))?;
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))))
}

async fn get_flow(State(s): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let flow = s
        .flows
        .get(&id)?
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-flow", format!("unknown flow '{id}'")))?;
    Ok(Json(flow).into_response())
}

async fn validate(State(s): Shared, body: Bytes) -> Result<Response, ApiError> {
    let flow = parse_flow(&body)?;
    Ok(Json(validate_flow(&flow, &s.catalog)).into_response())
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RunRequest {
    flow_id: String,
    #[serde(default)]
    inputs: Map<String, Json_>,
    #[serde(default)]
    options: RunOptions,
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct RunOptions {
    #[serde(default)]
    require_approval: bool,
}

async fn create_run(State(s): Shared, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: RunRequest = parse_body(&body)?;
    let flow = s
        .catalog
        .flows()
        .and_then(|f| f.load_flow(&req.flow_id))
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown-flow", format!("unknown flow '{}'", req.flow_id)))?;
    let run_id = s.runs.start(&req.flow_id, &flow, &req.inputs, req.options.require_approval)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "runId": run_id }))))
}

async fn list_runs(State(s): Shared) -> Result<Json<Json_>, ApiError> {
    let ids = s.runs.store().list().map_err(RunError::from)?;
    Ok(Json(json!({ "ids": ids })))
}

async fn get_run(State(s): Shared, Path(id): Path<String>) -> Result<Json<Json_>, ApiError> {
    let snap = s.runs.snapshot(&id)?;
    let st = snap.status;
    Ok(Json(json!({
        "runId": st.run_id,
        "flowId": st.flow_id,
        "state": st.state,
        "outputs": snap.outputs,
        "startedAt": st.started_at,
        "finishedAt": st.finished_at,
        "pausedAt": st.paused_at,
        "error": st.error,
    })))
}

async fn get_trace(State(s): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let text = s.runs.trace_text(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn run_events(State(s): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let events = s.runs.events(&id)?;
    let stream = events.map(|ev| Ok::<_, Infallible>(Event::default().data(ev.to_json_line())));
    Ok(Sse::new(stream).into_response())
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ApprovalRequest {
    module_id: String,
    decision: String,
}

async fn approval(State(s): Shared, Path(id): Path<String>, body: Bytes) -> Result<Json<Json_>, ApiError> {
    let req: ApprovalRequest = parse_body(&body)?;
    let decision: GateDecision = req.decision.parse().map_err(ApiError::bad_request)?;
    let state = s.runs.decide(&id, &req.module_id, decision)?;
    Ok(Json(json!({ "runId": id, "moduleId": req.module_id, "decision": decision, "state": state })))
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct PromptRequest {
    prompt: String,
    #[serde(default)]
    suffix: String,
    max_attempts: Option<usize>,
}

fn prompt_request(body: &[u8]) -> Result<PromptRequest, ApiError> {
    let req: PromptRequest = parse_body(body)?;
    if req.prompt.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "empty-prompt", "prompt is empty"));
    }
    Ok(req)
}

fn gateway(s: &AppState) -> Result<&Gateway, ApiError> {
    s.gateway
        .as_deref()
        .map_err(|reason| ApiError::new(StatusCode::BAD_GATEWAY, "gateway-unavailable", reason.clone()))
}

fn llm_error(e: jitflow_llm::LlmError) -> ApiError {
    ApiError::new(StatusCode::BAD_GATEWAY, "llm-error", e.to_string()).with("provider", json!({ "code": e.code() }))
}

async fn codegen(State(s): Shared, body: Bytes) -> Result<Json<Json_>, ApiError> {
    let req = prompt_request(&body)?;
    let res = generate_code(gateway(&s)?, &req.prompt, &req.suffix).await.map_err(llm_error)?;
    Ok(Json(json!({ "raw": res.raw_response, "code": res.code, "statusCode": res.status_code })))
}

async fn synthesize(State(s): Shared, body: Bytes) -> Result<Json<Json_>, ApiError> {
    let req = prompt_request(&body)?;
    let attempts = req.max_attempts.unwrap_or(DEFAULT_MAX_ATTEMPTS).clamp(1, 10);
    let res = synthesize_flow(&req.prompt, &s.catalog, gateway(&s)?, attempts).await.map_err(llm_error)?;
    Ok(Json(serde_json::to_value(res).expect("synthesis results serialize")))
}
