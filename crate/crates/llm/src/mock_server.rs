//! Local HTTP stand-in for a chat-completions endpoint, backed by a cassette.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::oneshot;

use crate::{completion_document, Cassette, LlmError};

/// One request as the server saw it. Header values are kept as raw bytes so
/// tests can assert on them exactly.
#[derive(Debug, Clone)]
pub struct CapturedRequest {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, Vec<u8>)>,
    pub body: String,
}

impl CapturedRequest {
    pub fn header(&self, name: &str) -> Option<&[u8]> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_slice())
    }
}

#[derive(Clone)]
struct ServerState {
    cassette: Arc<Cassette>,
    captured: Arc<Mutex<Vec<CapturedRequest>>>,
}

/// Running mock server. Dropping the handle shuts the server down.
pub struct MockServerHandle {
    addr: SocketAddr,
    captured: Arc<Mutex<Vec<CapturedRequest>>>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<tokio::task::JoinHandle<()>>,
}

impl MockServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://127.0.0.1:<port>`, suitable as a provider base URL.
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn completions_url(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url())
    }

    pub fn requests(&self) -> Vec<CapturedRequest> {
        self.captured.lock().unwrap().clone()
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for MockServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Serves `POST /v1/chat/completions` from `cassette` on 127.0.0.1:`port`
/// (0 picks a free port).
pub async fn serve_mock(cassette: Cassette, port: u16) -> Result<MockServerHandle, LlmError> {
    serve_mock_on(cassette, SocketAddr::from(([127, 0, 0, 1], port))).await
}

pub async fn serve_mock_on(cassette: Cassette, addr: SocketAddr) -> Result<MockServerHandle, LlmError> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(LlmError::Bind)?;
    let addr = listener.local_addr().map_err(LlmError::Bind)?;
    let captured = Arc::new(Mutex::new(Vec::new()));
    let state = ServerState { cassette: Arc::new(cassette), captured: captured.clone() };
    let app = Router::new()
        .route("/v1/chat/completions", post(completions))
        .with_state(state);
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await;
    });
    tracing::debug!(%addr, "mock llm server listening");
    Ok(MockServerHandle { addr, captured, shutdown: Some(tx), task: Some(task) })
}

fn error_body(status: StatusCode, kind: &str, message: String) -> Response {
    (status, Json(json!({ "error": { "type": kind, "message": message } }))).into_response()
}

async fn completions(State(state): State<ServerState>, headers: HeaderMap, body: Bytes) -> Response {
    state.captured.lock().unwrap().push(CapturedRequest {
        method: "POST".into(),
        path: "/v1/chat/completions".into(),
        headers: headers
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), v.as_bytes().to_vec()))
            .collect(),
        body: String::from_utf8_lossy(&body).into_owned(),
    });

    let doc: serde_json::Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return error_body(StatusCode::BAD_REQUEST, "invalid_request_error", e.to_string()),
    };
    let Some(messages) = doc.get("messages").and_then(|m| m.as_array()) else {
        return error_body(
            StatusCode::BAD_REQUEST,
            "invalid_request_error",
            "body has no messages array".into(),
        );
    };
    let prompt = messages
        .iter()
        .rev()
        .find(|m| m.get("role").and_then(|r| r.as_str()) == Some("user"))
        .and_then(|m| m.get("content"))
        .and_then(|c| c.as_str());
    let Some(prompt) = prompt else {
        return error_body(StatusCode::BAD_REQUEST, "invalid_request_error", "no user message".into());
    };
    match state.cassette.lookup(prompt) {
        Some(content) => (StatusCode::OK, Json(completion_document(content))).into_response(),
        None => error_body(
            StatusCode::NOT_FOUND,
            "no_match",
            format!("no entry in cassette '{}' matches prompt", state.cassette.name),
        ),
    }
}
