//! Client for OpenAI-compatible chat-completions endpoints with inline
//! image attachments.
//!
//! Configuration comes from the environment:
//!
//! | variable           | default                         |
//! |--------------------|---------------------------------|
//! | `AVA_LLM_BASE_URL` | `https://api.openai.com/v1`     |
//! | `AVA_LLM_API_KEY`  | falls back to `OPENAI_API_KEY`  |
//! | `AVA_LLM_MODEL`    | `gpt-4o`                        |

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::Deserialize;
use serde_json::{json, Value};

use super::TokenUsage;
use crate::image::Png;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ChatError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response body: {0}")]
    Decode(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(20),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `n + 1` after `n` failures (n ≥ 1).
    pub fn backoff(&self, failures: u32) -> Duration {
        let factor = 2u32.saturating_pow(failures.saturating_sub(1));
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct ChatConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub max_tokens: u32,
    pub max_images: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key: None,
            model: "gpt-4o".into(),
            max_tokens: 1024,
            max_images: 4,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            max_in_flight: 4,
        }
    }
}

impl ChatConfig {
    pub fn from_env() -> Self {
        let mut c = ChatConfig::default();
        if let Ok(url) = std::env::var("AVA_LLM_BASE_URL") {
            c.base_url = url;
        }
        c.api_key = std::env::var("AVA_LLM_API_KEY")
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .ok()
            .filter(|k| !k.trim().is_empty());
        if let Ok(model) = std::env::var("AVA_LLM_MODEL") {
            c.model = model;
        }
        c
    }

    fn endpoint(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatMessage {
    pub role: String,
    pub text: String,
    pub images: Vec<Png>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            text: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>, images: Vec<Png>) -> Self {
        Self {
            role: "user".into(),
            text: text.into(),
            images,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    /// Overrides the configured model.
    pub model: Option<String>,
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    fn to_json(&self, config: &ChatConfig) -> Value {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                if m.images.is_empty() {
                    json!({"role": m.role, "content": m.text})
                } else {
                    let mut parts = vec![json!({"type": "text", "text": m.text})];
                    for img in &m.images {
                        let b64 = base64::engine::general_purpose::STANDARD.encode(img.bytes());
                        parts.push(json!({
                            "type": "image_url",
                            "image_url": {"url": format!("data:image/png;base64,{b64}")}
                        }));
                    }
                    json!({"role": m.role, "content": parts})
                }
            })
            .collect();
        json!({
            "model": self.model.as_deref().unwrap_or(&config.model),
            "max_tokens": self.max_tokens.unwrap_or(config.max_tokens),
            "messages": messages,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
    /// HTTP status of every attempt, in order; 0 marks a transport failure.
    pub attempts: Vec<u16>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    max: usize,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn acquire(&self) -> Permit<'_> {
        let mut n = self.count.lock().unwrap();
        while *n >= self.max {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// Cloning shares the in-flight limit.
#[derive(Clone)]
pub struct ChatClient {
    config: Arc<ChatConfig>,
    agent: ureq::Agent,
    in_flight: Arc<InFlight>,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient")
            .field("endpoint", &self.config.endpoint())
            .field("model", &self.config.model)
            .finish()
    }
}

impl ChatClient {
    pub fn new(config: ChatConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let in_flight = Arc::new(InFlight {
            count: Mutex::new(0),
            freed: Condvar::new(),
            max: config.max_in_flight.max(1),
        });
        Self {
            config: Arc::new(config),
            agent,
            in_flight,
        }
    }

    pub fn from_env() -> Self {
        Self::new(ChatConfig::from_env())
    }

    pub fn config(&self) -> &ChatConfig {
        &self.config
    }

    pub fn chat_complete(&self, request: &ChatRequest) -> Result<ChatResponse, ChatError> {
        let key = self
            .config
            .api_key
            .as_deref()
            .ok_or_else(|| ChatError::Auth("no API key configured".into()))?;
        if request.messages.is_empty() {
            return Err(ChatError::InvalidRequest("no messages".into()));
        }
        let images: usize = request.messages.iter().map(|m| m.images.len()).sum();
        if images > self.config.max_images {
            return Err(ChatError::InvalidRequest(format!(
                "{images} images exceeds the limit of {}",
                self.config.max_images
            )));
        }
        let body = request.to_json(&self.config).to_string();
        let url = self.config.endpoint();
        let policy = self.config.retry;
        let mut attempts = Vec::new();

        let _permit = self.in_flight.acquire();
        loop {
            let result = self
                .agent
                .post(&url)
                .header("Authorization", &format!("Bearer {key}"))
                .header("Content-Type", "application/json")
                .send(body.as_bytes());
            let failure = match result {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    attempts.push(status);
                    let text = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| ChatError::Transport(e.to_string()))?;
                    match status {
                        200..=299 => return decode(&text, attempts),
                        401 | 403 => return Err(ChatError::Auth(truncate(&text))),
                        429 => ChatError::RateLimited {
                            attempts: attempts.len() as u32,
                        },
                        500..=599 => ChatError::Provider {
                            status,
                            body: truncate(&text),
                        },
                        _ => {
                            return Err(ChatError::Provider {
                                status,
                                body: truncate(&text),
                            })
                        }
                    }
                }
                Err(e) => {
                    attempts.push(0);
                    ChatError::Transport(e.to_string())
                }
            };
            let n = attempts.len() as u32;
            if n >= policy.max_attempts {
                return Err(failure);
            }
            let delay = policy.backoff(n);
            tracing::warn!(attempt = n, ?delay, error = %failure, "chat request failed; retrying");
            std::thread::sleep(delay);
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(500).collect()
}

fn decode(text: &str, attempts: Vec<u16>) -> Result<ChatResponse, ChatError> {
    let wire: WireResponse =
        serde_json::from_str(text).map_err(|e| ChatError::Decode(e.to_string()))?;
    let content = wire
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| ChatError::Decode("no message content in choices".into()))?;
    let usage = wire.usage.map_or(
        TokenUsage {
            requests: 1,
            ..Default::default()
        },
        |u| TokenUsage {
            prompt_tokens: u.prompt_tokens,
            completion_tokens: u.completion_tokens,
            requests: 1,
        },
    );
    Ok(ChatResponse {
        text: content,
        usage,
        attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;

    #[test]
    fn missing_key_fails_before_network() {
        let client = ChatClient::new(ChatConfig {
            base_url: "http://127.0.0.1:1".into(),
            api_key: None,
            ..Default::default()
        });
        let req = ChatRequest {
            messages: vec![ChatMessage::user("hi", vec![])],
            model: None,
            max_tokens: None,
        };
        assert!(matches!(client.chat_complete(&req), Err(ChatError::Auth(_))));
    }

    #[test]
    fn request_json_shape() {
        let png = Image::new(1, 1, [0, 0, 0, 255]).to_png().unwrap();
        let req = ChatRequest {
            messages: vec![ChatMessage::system("role"), ChatMessage::user("look", vec![png])],
            model: None,
            max_tokens: Some(50),
        };
        let v = req.to_json(&ChatConfig::default());
        assert_eq!(v["model"], "gpt-4o");
        assert_eq!(v["max_tokens"], 50);
        assert_eq!(v["messages"][0]["content"], "role");
        assert_eq!(v["messages"][1]["content"][0]["type"], "text");
        let url = v["messages"][1]["content"][1]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/png;base64,iVBOR"));
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_attempts: 10,
            base_delay: Duration::from_millis(100),
            max_delay: Duration::from_millis(350),
        };
        assert_eq!(p.backoff(1), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(200));
        assert_eq!(p.backoff(3), Duration::from_millis(350));
    }

    #[test]
    fn endpoint_join() {
        let mut c = ChatConfig::default();
        c.base_url = "http://h/v1/".into();
        assert_eq!(c.endpoint(), "http://h/v1/chat/completions");
        c.base_url = "http://h/v1/chat/completions".into();
        assert_eq!(c.endpoint(), "http://h/v1/chat/completions");
    }
}
