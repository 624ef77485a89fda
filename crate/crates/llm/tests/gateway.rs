use std::sync::Arc;

use jitflow_llm::{
    read_log, record, serve_mock, Cassette, ChatRequest, Gateway, LlmError, LlmProvider, Matcher, MockProvider,
    OpenAiCompatProvider, ReplayProvider,
};

const ADD_PROMPT: &str =
    "Write a python function called gptFunction that adds two integers. Only return the raw python code.";
const ADD_CODE: &str = "def gptFunction(a, b):\n    return a + b\n";

fn cassette() -> Cassette {
    Cassette::new("unit")
        .with_entry(Matcher::exact(ADD_PROMPT), ADD_CODE)
        .unwrap()
        .with_entry(Matcher::substring("echo"), "echoed")
        .unwrap()
}

#[tokio::test]
async fn mock_provider_answers_from_cassette() {
    let provider = MockProvider::new(cassette());
    let resp = provider.complete(&ChatRequest::user("m", ADD_PROMPT)).await.unwrap();
    assert_eq!(resp.content, ADD_CODE);
    assert!(resp.from_cassette);
    assert_eq!(resp.raw.pointer("/choices/0/message/content").unwrap(), ADD_CODE);

    let err = provider.complete(&ChatRequest::user("m", "nothing")).await.unwrap_err();
    match err {
        LlmError::NoMatch { cassette } => assert_eq!(cassette, "unit"),
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn mock_is_deterministic() {
    let provider = MockProvider::new(cassette());
    let a = provider.complete(&ChatRequest::user("m", "please echo")).await.unwrap();
    let b = provider.complete(&ChatRequest::user("m", "please echo")).await.unwrap();
    assert_eq!(a, b);
}

#[tokio::test]
async fn openai_compat_against_mock_server() {
    let server = serve_mock(cassette(), 0).await.unwrap();
    let provider = OpenAiCompatProvider::new(server.base_url(), "sk-test");
    let resp = provider.complete(&ChatRequest::user("gpt-3.5-turbo", ADD_PROMPT)).await.unwrap();
    assert_eq!(resp.content, ADD_CODE);
    assert_eq!(resp.status_code, 200);
    assert!(!resp.from_cassette);

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].header("authorization"), Some(&b"Bearer sk-test"[..]));
    assert_eq!(reqs[0].header("content-type"), Some(&b"application/json"[..]));
    let body: serde_json::Value = serde_json::from_str(&reqs[0].body).unwrap();
    let mut keys: Vec<_> = body.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["messages", "model"]);
    assert_eq!(body["model"], "gpt-3.5-turbo");
    assert_eq!(body["messages"][0]["role"], "user");
}

#[tokio::test]
async fn mock_server_status_codes() {
    let server = serve_mock(cassette(), 0).await.unwrap();
    let client = reqwest::Client::new();
    let unmatched = client
        .post(server.completions_url())
        .header("content-type", "application/json")
        .body(r#"{"model":"m","messages":[{"role":"user","content":"zzz"}]}"#)
        .send()
        .await
        .unwrap();
    assert_eq!(unmatched.status().as_u16(), 404);
    let body: serde_json::Value = unmatched.json().await.unwrap();
    assert!(body["error"].is_object());

    let garbage = client.post(server.completions_url()).body("not json").send().await.unwrap();
    assert_eq!(garbage.status().as_u16(), 400);

    let provider = OpenAiCompatProvider::new(server.base_url(), "k");
    let err = provider.complete(&ChatRequest::user("m", "zzz")).await.unwrap_err();
    assert!(matches!(err, LlmError::Status { status: 404, .. }));
}

#[tokio::test]
async fn mock_server_handles_concurrent_requests() {
    let server = serve_mock(cassette(), 0).await.unwrap();
    let provider = Arc::new(OpenAiCompatProvider::new(server.base_url(), "k"));
    let mut tasks = Vec::new();
    for _ in 0..16 {
        let p = provider.clone();
        tasks.push(tokio::spawn(async move { p.complete(&ChatRequest::user("m", "echo")).await }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap().unwrap().content, "echoed");
    }
    assert_eq!(server.requests().len(), 16);
}

#[tokio::test]
async fn transport_failure_is_reported() {
    // Bind then drop to obtain a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let provider = OpenAiCompatProvider::new(format!("http://127.0.0.1:{port}"), "k");
    let err = provider.complete(&ChatRequest::user("m", "x")).await.unwrap_err();
    assert!(matches!(err, LlmError::Transport(_)), "{err:?}");
}

#[tokio::test]
async fn record_then_replay_offline() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("exchanges.jsonl");

    // Live side is the cassette provider; replay records what it returns.
    let live: Arc<dyn LlmProvider> = Arc::new(MockProvider::new(cassette()));
    let recording = ReplayProvider::new(&log, Some(live));
    let first = recording.complete(&ChatRequest::user("m", ADD_PROMPT)).await.unwrap();
    let entries = read_log(&log).unwrap();
    assert_eq!(entries.len(), 1);
    assert_eq!(entries[0].prompt, ADD_PROMPT);
    assert_eq!(entries[0].response, ADD_CODE);
    assert_eq!(entries[0].provider, "mock");

    let offline = ReplayProvider::new(&log, None);
    let again = offline.complete(&ChatRequest::user("m", ADD_PROMPT)).await.unwrap();
    assert_eq!(again.content, first.content);
    assert!(matches!(
        offline.complete(&ChatRequest::user("m", "never seen")).await,
        Err(LlmError::NotRecorded { .. })
    ));
    assert_eq!(read_log(&log).unwrap().len(), 1);
}

#[tokio::test]
async fn record_appends_one_line_per_exchange() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let provider = MockProvider::new(cassette());
    for prompt in ["echo 1", "echo 2"] {
        let req = ChatRequest::user("m", prompt);
        let resp = provider.complete(&req).await.unwrap();
        record(&log, &req, &resp).unwrap();
    }
    let text = std::fs::read_to_string(&log).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    for line in lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in ["prompt", "response", "ts", "provider"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }
}

#[tokio::test]
async fn sessions_prepend_history_and_stay_bounded() {
    let cassette = Cassette::new("s").with_entry(Matcher::substring(""), "ok").unwrap();
    let server = serve_mock(cassette, 0).await.unwrap();
    let gateway = Gateway::new(Arc::new(OpenAiCompatProvider::new(server.base_url(), "k")), "m").with_max_messages(4);
    for i in 0..5 {
        gateway.complete(gateway.request(format!("turn {i}")).with_session("s1")).await.unwrap();
        let s = gateway.session("s1").await.unwrap();
        assert!(s.history.len() <= 4);
    }
    let last: serde_json::Value = serde_json::from_str(&server.requests().last().unwrap().body).unwrap();
    let msgs = last["messages"].as_array().unwrap();
    // 4 messages of history plus the new user turn.
    assert_eq!(msgs.len(), 5);
    assert_eq!(msgs.last().unwrap()["content"], "turn 4");
    assert_eq!(msgs[0]["content"], "turn 2");

    // Requests without a session carry no history.
    gateway.complete(gateway.request("solo")).await.unwrap();
    let solo: serde_json::Value = serde_json::from_str(&server.requests().last().unwrap().body).unwrap();
    assert_eq!(solo["messages"].as_array().unwrap().len(), 1);
}
