//! In-process chat-completions server for tests and examples.
//!
//! Runs on its own thread with its own runtime, so both sync and async
//! callers can use it. Records every request body and the peak number of
//! requests in flight.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

pub enum Reply {
    Text(String),
    Status(u16),
    /// 200 with this exact body.
    Raw(String),
}

type Responder = dyn Fn(&Value, usize) -> Reply + Send + Sync;

pub struct MockState {
    pub calls: AtomicUsize,
    pub in_flight: AtomicUsize,
    pub peak: AtomicUsize,
    pub bodies: Mutex<Vec<Value>>,
    pub auth_headers: Mutex<Vec<Option<String>>>,
    delay: Duration,
    responder: Box<Responder>,
}

pub struct MockLlm {
    pub url: String,
    pub state: Arc<MockState>,
}

impl MockLlm {
    /// `responder` gets the request body and the 1-based call number.
    pub fn start(delay: Duration, responder: impl Fn(&Value, usize) -> Reply + Send + Sync + 'static) -> Self {
        let state = Arc::new(MockState {
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            bodies: Mutex::new(Vec::new()),
            auth_headers: Mutex::new(Vec::new()),
            delay,
            responder: Box::new(responder),
        });
        let (tx, rx) = std::sync::mpsc::channel::<SocketAddr>();
        let app_state = state.clone();
        std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                let app = Router::new()
                    .route("/v1/chat/completions", post(handle))
                    .with_state(app_state);
                axum::serve(listener, app).await.unwrap();
            });
        });
        let addr = rx.recv().unwrap();
        MockLlm {
            url: format!("http://{addr}"),
            state,
        }
    }

    /// Deterministic stand-in for the two fine-tuned models.
    pub fn pipeline() -> Self {
        Self::start(Duration::ZERO, |body, _| Reply::Text(pipeline_reply(prompt_of(body))))
    }

    pub fn calls(&self) -> usize {
        self.state.calls.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.state.peak.load(Ordering::SeqCst)
    }
}

pub fn prompt_of(body: &Value) -> &str {
    body["messages"][0]["content"].as_str().unwrap_or_default()
}

fn section<'a>(prompt: &'a str, header: &str) -> &'a str {
    let start = prompt.find(header).map(|i| i + header.len()).unwrap_or(prompt.len());
    let rest = &prompt[start..];
    rest[..rest.find("\n###").unwrap_or(rest.len())].trim()
}

fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// AQA prompts get back the context sentence sharing the most words with
/// the question. LU prompts get one well-formed group built from the long
/// question words plus one junk line.
pub fn pipeline_reply(prompt: &str) -> String {
    let question = section(prompt, "### Question:\n");
    if prompt.ends_with("### Logic Triples:") {
        let long: Vec<String> = words(question).into_iter().filter(|w| w.len() >= 7).collect();
        let first = long.first().map_or("none", String::as_str);
        let last = long.last().map_or("none", String::as_str);
        format!("Rule of Co-occurrence: [({first}, affects, {last})]\nsee above")
    } else {
        let q = words(question);
        let ctx = section(prompt, "### Context:\n");
        let mut best = ("", 0);
        for sentence in ctx.split_inclusive(". ") {
            let score = words(sentence).iter().filter(|w| q.contains(w)).count();
            if score > best.1 || best.0.is_empty() {
                best = (sentence, score);
            }
        }
        best.0.trim().to_string()
    }
}

struct Flight<'a>(&'a MockState);

impl<'a> Flight<'a> {
    fn enter(s: &'a MockState) -> Self {
        let now = s.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        s.peak.fetch_max(now, Ordering::SeqCst);
        Flight(s)
    }
}

impl Drop for Flight<'_> {
    fn drop(&mut self) {
        self.0.in_flight.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn handle(State(s): State<Arc<MockState>>, headers: axum::http::HeaderMap, Json(body): Json<Value>) -> Response {
    let _flight = Flight::enter(&s);
    let n = s.calls.fetch_add(1, Ordering::SeqCst) + 1;
    s.auth_headers
        .lock()
        .unwrap()
        .push(headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string));
    s.bodies.lock().unwrap().push(body.clone());
    if !s.delay.is_zero() {
        tokio::time::sleep(s.delay).await;
    }
    match (s.responder)(&body, n) {
        Reply::Text(t) => Json(json!({
            "id": format!("cmpl-{n}"),
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": t}, "finish_reason": "stop"}]
        }))
        .into_response(),
        Reply::Status(code) => (StatusCode::from_u16(code).unwrap(), "mock failure").into_response(),
        Reply::Raw(body) => body.into_response(),
    }
}
