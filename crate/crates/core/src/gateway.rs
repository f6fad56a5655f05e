//! Chat-completions client used to run the fine-tuned models at inference.
//!
//! Wire shape: `POST {base}/v1/chat/completions` with `model`, a single user
//! message holding the prompt, `max_tokens`, `temperature` and optional
//! `stop`; bearer-token auth. Transient failures (429, 5xx, timeouts,
//! connection errors) are retried with exponential backoff and jitter.

use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const URL_ENV_VAR: &str = "MEDLOGIC_LLM_URL";
pub const TOKEN_ENV_VAR: &str = "MEDLOGIC_LLM_TOKEN";
pub const CHAT_COMPLETIONS_PATH: &str = "/v1/chat/completions";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub model_name: String,
    pub stop: Option<Vec<String>>,
}

impl GenRequest {
    /// Deterministic decoding (temperature 0) and 256 new tokens.
    pub fn new(model_name: impl Into<String>, prompt: impl Into<String>) -> Self {
        GenRequest {
            prompt: prompt.into(),
            max_new_tokens: 256,
            temperature: 0.0,
            model_name: model_name.into(),
            stop: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_new_tokens < 1 {
            return Err(GatewayError::InvalidRequest("max_new_tokens must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenResult {
    pub text: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("rate limited (HTTP 429)")]
    RateLimited,
    #[error("request timed out")]
    Timeout,
    #[error("server error HTTP {status}: {body}")]
    Server { status: u16, body: String },
    #[error("request rejected HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    InvalidResponse(String),
    #[error("gave up after {attempts} attempts; last error: {last}")]
    ExhaustedRetries { attempts: u32, last: Box<GatewayError> },
}

impl GatewayError {
    pub fn is_retriable(&self) -> bool {
        matches!(
            self,
            GatewayError::RateLimited
                | GatewayError::Timeout
                | GatewayError::Server { .. }
                | GatewayError::Transport(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
    /// Each delay is stretched by a uniform factor in `[1, 1 + jitter)`.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::from_millis(500),
            factor: 2.0,
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based), without jitter.
    pub fn backoff(&self, retry: u32) -> Duration {
        self.base_delay.mul_f64(self.factor.powi(retry as i32))
    }

    fn jittered(&self, retry: u32) -> Duration {
        let stretch = 1.0 + self.jitter * rand::random::<f64>();
        self.backoff(retry).mul_f64(stretch)
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatBody<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    max_tokens: u32,
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    stop: Option<&'a [String]>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LlmClient {
    http: reqwest::Client,
    endpoint: String,
    token: Option<String>,
    retry: RetryPolicy,
}

impl LlmClient {
    /// `base_url` is the server root, e.g. `http://localhost:8000`.
    pub fn new(base_url: &str, token: Option<String>) -> Self {
        LlmClient {
            http: reqwest::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("http client builds"),
            endpoint: format!("{}{}", base_url.trim_end_matches('/'), CHAT_COMPLETIONS_PATH),
            token,
            retry: RetryPolicy::default(),
        }
    }

    /// Base URL from `MEDLOGIC_LLM_URL` if set, else `default_url`; token
    /// from `MEDLOGIC_LLM_TOKEN`.
    pub fn from_env(default_url: Option<&str>) -> Option<Self> {
        let url = std::env::var(URL_ENV_VAR).ok().or(default_url.map(str::to_string))?;
        Some(LlmClient::new(&url, std::env::var(TOKEN_ENV_VAR).ok()))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds");
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    async fn attempt(&self, req: &GenRequest) -> Result<String, GatewayError> {
        let body = ChatBody {
            model: &req.model_name,
            messages: [ChatMessage {
                role: "user",
                content: &req.prompt,
            }],
            max_tokens: req.max_new_tokens,
            temperature: req.temperature,
            stop: req.stop.as_deref(),
        };
        let mut call = self.http.post(&self.endpoint).json(&body);
        if let Some(token) = &self.token {
            call = call.bearer_auth(token);
        }
        let resp = call.send().await.map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::Transport(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(GatewayError::Auth { status }),
            429 => return Err(GatewayError::RateLimited),
            408 => return Err(GatewayError::Timeout),
            _ => {
                let body: String = resp.text().await.unwrap_or_default().chars().take(200).collect();
                return Err(if status >= 500 {
                    GatewayError::Server { status, body }
                } else {
                    GatewayError::Rejected { status, body }
                });
            }
        }
        let parsed: ChatResponse = resp.json().await.map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout
            } else {
                GatewayError::InvalidResponse(e.to_string())
            }
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GatewayError::InvalidResponse("no completion in response".into()))
    }

    /// First completion for `req`, retrying transient failures.
    pub async fn generate(&self, req: &GenRequest) -> Result<GenResult, GatewayError> {
        req.validate()?;
        let start = Instant::now();
        let max = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(req).await {
                Ok(text) => {
                    return Ok(GenResult {
                        text,
                        latency_ms: start.elapsed().as_millis() as u64,
                        attempt_count: attempt,
                    })
                }
                Err(e) if !e.is_retriable() => return Err(e),
                Err(e) if attempt >= max => {
                    return Err(GatewayError::ExhaustedRetries {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => {
                    let delay = self.retry.jittered(attempt - 1);
                    log::debug!("attempt {attempt} failed ({e}); retrying in {delay:?}");
                    tokio::time::sleep(delay).await;
                }
            }
        }
    }

    /// Runs all requests with at most `max_in_flight` outstanding (values
    /// below 1 are treated as 1). Results keep input order; failures stay in
    /// their slot.
    pub async fn generate_batch(
        &self,
        reqs: &[GenRequest],
        max_in_flight: usize,
    ) -> Vec<Result<GenResult, GatewayError>> {
        stream::iter(reqs.iter().map(|r| self.generate(r)))
            .buffered(max_in_flight.max(1))
            .collect()
            .await
    }
}
