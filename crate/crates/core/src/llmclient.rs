//! Minimal chat-completion client over HTTP.
//!
//! Serves both the LLM allocator and the live recipient executor. The wire
//! shape is OpenAI-style chat completions JSON; the request body is
//! byte-stable for a given request so runs can be audited. Transient
//! failures (transport errors, 429, 5xx) are retried with exponential
//! backoff up to a configured attempt cap; other 4xx statuses fail fast.

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompts::sha256_hex;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("client configuration: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("non-retryable http {status} (request {request_digest})")]
    Request { status: u16, request_digest: String },
    #[error("transport failure after {attempts} attempts (request {request_digest}): {detail}")]
    Transport {
        attempts: u32,
        request_digest: String,
        detail: String,
    },
    #[error("malformed response (request {request_digest}): {detail}")]
    Protocol {
        request_digest: String,
        detail: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// Bearer token sourced from the environment. Never serialized and redacted
/// from debug output so it cannot leak into logs or trajectories.
#[derive(Clone)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn from_env(var: &str) -> Result<Self, ClientError> {
        std::env::var(var)
            .map(ApiKey)
            .map_err(|_| ClientError::Config(format!("environment variable {var} is not set")))
    }

    pub fn new(secret: impl Into<String>) -> Self {
        ApiKey(secret.into())
    }

    fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(****)")
    }
}

/// A single chat-completion call.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
    pub timeout: Duration,
    pub api_key: Option<ApiKey>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ClientError> {
        if self.messages.is_empty() {
            return Err(ClientError::InvalidRequest(
                "messages must be non-empty".into(),
            ));
        }
        if self.messages.iter().skip(1).any(|m| m.role == Role::System) {
            return Err(ClientError::InvalidRequest(
                "a system message is only allowed in first position".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
    /// True when the provider returned no usage block and the token counts
    /// were estimated by whitespace tokenization.
    pub usage_estimated: bool,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u32,
    completion_tokens: u32,
}

/// Serialized request body; field order is fixed by the wire struct, so
/// identical requests produce identical bytes.
pub fn wire_body(req: &ChatRequest) -> String {
    serde_json::to_string(&WireRequest {
        model: &req.model,
        messages: &req.messages,
        temperature: req.temperature,
        max_tokens: req.max_output_tokens,
    })
    .expect("chat request serializes")
}

/// Short digest of the wire body, attached to errors for log correlation.
pub fn request_digest(body: &str) -> String {
    sha256_hex(body.as_bytes())[..16].to_string()
}

fn whitespace_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

fn decode_response(
    body: &str,
    req: &ChatRequest,
    digest: &str,
) -> Result<ChatResponse, ClientError> {
    let wire: WireResponse = serde_json::from_str(body).map_err(|e| ClientError::Protocol {
        request_digest: digest.to_string(),
        detail: e.to_string(),
    })?;
    let text = wire
        .choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| ClientError::Protocol {
            request_digest: digest.to_string(),
            detail: "response carries no choices".into(),
        })?;
    let (prompt_tokens, completion_tokens, usage_estimated) = match wire.usage {
        Some(usage) => (usage.prompt_tokens, usage.completion_tokens, false),
        None => (
            req.messages
                .iter()
                .map(|m| whitespace_tokens(&m.content))
                .sum(),
            whitespace_tokens(&text),
            true,
        ),
    };
    Ok(ChatResponse {
        text,
        prompt_tokens,
        completion_tokens,
        usage_estimated,
    })
}

/// Retry and concurrency settings.
#[derive(Debug, Clone)]
pub struct ClientConfig {
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub backoff_factor: f64,
    /// Global bound on concurrent in-flight requests.
    pub max_inflight: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(200),
            backoff_factor: 2.0,
            max_inflight: 8,
        }
    }
}

/// Counting semaphore bounding in-flight requests across worker threads.
struct InflightGate {
    slots: Mutex<usize>,
    available: Condvar,
}

impl InflightGate {
    fn new(slots: usize) -> Self {
        InflightGate {
            slots: Mutex::new(slots),
            available: Condvar::new(),
        }
    }

    fn acquire(&self) -> InflightSlot<'_> {
        let mut slots = self.slots.lock().expect("gate lock");
        while *slots == 0 {
            slots = self.available.wait(slots).expect("gate wait");
        }
        *slots -= 1;
        InflightSlot { gate: self }
    }
}

/// Releases its slot on drop, so the gate survives early returns.
struct InflightSlot<'a> {
    gate: &'a InflightGate,
}

impl Drop for InflightSlot<'_> {
    fn drop(&mut self) {
        *self.gate.slots.lock().expect("gate lock") += 1;
        self.gate.available.notify_one();
    }
}

/// Blocking chat-completion client; shareable across worker threads.
pub struct ChatClient {
    http: reqwest::blocking::Client,
    config: ClientConfig,
    gate: InflightGate,
}

impl ChatClient {
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        if config.max_attempts == 0 {
            return Err(ClientError::Config(
                "max_attempts must be at least 1".into(),
            ));
        }
        if config.max_inflight == 0 {
            return Err(ClientError::Config(
                "max_inflight must be at least 1".into(),
            ));
        }
        let http = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        let gate = InflightGate::new(config.max_inflight);
        Ok(ChatClient { http, config, gate })
    }

    /// Sends the request, retrying transient failures (transport errors,
    /// 429, 5xx) with exponential backoff. Returns the single completion
    /// with token usage.
    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, ClientError> {
        req.validate()?;
        let body = wire_body(req);
        let digest = request_digest(&body);

        let _slot = self.gate.acquire();
        self.complete_inner(req, &body, &digest)
    }

    fn complete_inner(
        &self,
        req: &ChatRequest,
        body: &str,
        digest: &str,
    ) -> Result<ChatResponse, ClientError> {
        let mut backoff = self.config.initial_backoff;
        let mut last_detail = String::new();
        for attempt in 1..=self.config.max_attempts {
            if attempt > 1 {
                std::thread::sleep(backoff);
                backoff = backoff.mul_f64(self.config.backoff_factor);
            }
            let mut builder = self
                .http
                .post(&req.endpoint)
                .timeout(req.timeout)
                .header("content-type", "application/json")
                .body(body.to_string());
            if let Some(key) = &req.api_key {
                builder = builder.header("authorization", format!("Bearer {}", key.expose()));
            }
            match builder.send() {
                Ok(response) => {
                    let status = response.status();
                    let text = response.text().map_err(|e| ClientError::Protocol {
                        request_digest: digest.to_string(),
                        detail: e.to_string(),
                    })?;
                    if status.is_success() {
                        return decode_response(&text, req, digest);
                    }
                    let code = status.as_u16();
                    if code == 429 || status.is_server_error() {
                        last_detail = format!("http {code}");
                        continue;
                    }
                    return Err(ClientError::Request {
                        status: code,
                        request_digest: digest.to_string(),
                    });
                }
                Err(e) => {
                    last_detail = e.to_string();
                    continue;
                }
            }
        }
        Err(ClientError::Transport {
            attempts: self.config.max_attempts,
            request_digest: digest.to_string(),
            detail: last_detail,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> ChatRequest {
        ChatRequest {
            endpoint: "http://127.0.0.1:1/v1/chat/completions".into(),
            model: "stub-model".into(),
            messages: vec![
                ChatMessage::system("be brief"),
                ChatMessage::user("pick one"),
            ],
            temperature: 1.0,
            max_output_tokens: None,
            timeout: Duration::from_secs(5),
            api_key: Some(ApiKey::new("sk-secret-value")),
        }
    }

    #[test]
    fn wire_body_is_stable_and_pinned() {
        let req = request();
        let a = wire_body(&req);
        let b = wire_body(&req);
        assert_eq!(a, b);
        assert_eq!(
            a,
            "{\"model\":\"stub-model\",\"messages\":[{\"role\":\"system\",\"content\":\"be brief\"},\
             {\"role\":\"user\",\"content\":\"pick one\"}],\"temperature\":1.0}"
        );
    }

    #[test]
    fn max_tokens_serialized_only_when_set() {
        let mut req = request();
        assert!(!wire_body(&req).contains("max_tokens"));
        req.max_output_tokens = Some(64);
        assert!(wire_body(&req).contains("\"max_tokens\":64"));
    }

    #[test]
    fn api_key_is_redacted_from_debug() {
        let req = request();
        let debug = format!("{req:?}");
        assert!(!debug.contains("sk-secret-value"));
        assert!(debug.contains("ApiKey(****)"));
    }

    #[test]
    fn request_validation() {
        let mut req = request();
        req.messages.clear();
        assert!(req.validate().is_err());
        req.messages = vec![ChatMessage::user("a"), ChatMessage::system("b")];
        assert!(req.validate().is_err());
        req.messages = vec![ChatMessage::user("a"), ChatMessage::assistant("b")];
        assert!(req.validate().is_ok());
    }

    #[test]
    fn decode_with_usage_block() {
        let req = request();
        let body = r#"{"choices":[{"message":{"content":"<agent> AAA </agent>"}}],"usage":{"prompt_tokens":12,"completion_tokens":5}}"#;
        let resp = decode_response(body, &req, "d").unwrap();
        assert_eq!(resp.text, "<agent> AAA </agent>");
        assert_eq!(resp.prompt_tokens, 12);
        assert_eq!(resp.completion_tokens, 5);
        assert!(!resp.usage_estimated);
    }

    #[test]
    fn decode_without_usage_estimates_tokens() {
        let req = request();
        let body = r#"{"choices":[{"message":{"content":"one two three"}}]}"#;
        let resp = decode_response(body, &req, "d").unwrap();
        assert_eq!(resp.completion_tokens, 3);
        assert_eq!(resp.prompt_tokens, 4);
        assert!(resp.usage_estimated);
    }

    #[test]
    fn decode_rejects_empty_choices() {
        let req = request();
        assert!(decode_response(r#"{"choices":[]}"#, &req, "d").is_err());
        assert!(decode_response("not json", &req, "d").is_err());
    }
}
