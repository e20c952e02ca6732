//! Chat-completion adapter for OpenAI-compatible HTTP endpoints.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Agent, AgentError, AgentReply, Turn};
use crate::tasks::{Role, TokenUsage, Transcript};

/// One provider endpoint. API keys are read from `api_key_env` at start-up
/// and never written to disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    /// Full URL of the chat-completions route.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token; unset for open endpoints.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Sent only when set; otherwise the provider default applies.
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    /// Minimum spacing between requests across all episodes.
    #[serde(default)]
    pub min_interval_ms: u64,
}

fn default_timeout() -> u64 {
    120
}

fn default_attempts() -> u32 {
    3
}

fn default_backoff() -> u64 {
    500
}

impl ProviderConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: None,
            temperature: None,
            max_tokens: None,
            timeout_secs: default_timeout(),
            max_attempts: default_attempts(),
            backoff_ms: default_backoff(),
            min_interval_ms: 0,
        }
    }
}

/// Shared request pacing: at most one request per `interval`.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(interval: Duration) -> Self {
        Self { interval, next: Mutex::new(None) }
    }

    /// Blocks until the caller may send.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |t| t.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// System entries keep their role; environment turns become `user`, agent
/// turns `assistant`.
pub fn render_messages(transcript: &Transcript) -> Vec<ChatMessage> {
    transcript
        .entries()
        .iter()
        .map(|e| ChatMessage {
            role: match e.role {
                Role::System => "system",
                Role::Environment => "user",
                Role::Agent => "assistant",
            }
            .to_string(),
            content: e.text.clone(),
        })
        .collect()
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

pub struct RemoteAgent {
    id: String,
    provider: ProviderConfig,
    token: Option<String>,
    http: ureq::Agent,
    limiter: Option<Arc<RateLimiter>>,
    requests_log: Option<PathBuf>,
}

impl RemoteAgent {
    /// Fails early when the credential variable is named but unset.
    pub fn new(
        id: String,
        provider: ProviderConfig,
        limiter: Option<Arc<RateLimiter>>,
        requests_dir: Option<PathBuf>,
        stem: String,
    ) -> Result<Self, AgentError> {
        let token = match &provider.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| AgentError::MissingCredentials(var.clone()))?),
            None => None,
        };
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(provider.timeout_secs)))
            .build();
        let limiter = limiter.or_else(|| {
            (provider.min_interval_ms > 0)
                .then(|| Arc::new(RateLimiter::new(Duration::from_millis(provider.min_interval_ms))))
        });
        Ok(Self {
            id,
            provider,
            token,
            http: config.into(),
            limiter,
            requests_log: requests_dir.map(|d| d.join(format!("{stem}.requests.jsonl"))),
        })
    }

    fn persist(&self, body: &serde_json::Value) -> Result<(), AgentError> {
        if let Some(path) = &self.requests_log {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(f, "{}", serde_json::to_string(body).expect("serializable"))?;
            f.sync_data()?;
        }
        Ok(())
    }

    fn send_once(&self, body: &serde_json::Value) -> Result<ChatResponse, ureq::Error> {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let mut req = self.http.post(&self.provider.endpoint).header("Content-Type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("Authorization", format!("Bearer {t}"));
        }
        let mut resp = req.send_json(body)?;
        resp.body_mut().read_json::<ChatResponse>()
    }
}

impl Agent for RemoteAgent {
    fn id(&self) -> &str {
        &self.id
    }

    fn is_deterministic(&self) -> bool {
        false
    }

    fn next_message(&mut self, turn: &Turn<'_>) -> Result<AgentReply, AgentError> {
        let request = ChatRequest {
            model: &self.provider.model,
            messages: render_messages(turn.transcript),
            temperature: self.provider.temperature,
            max_tokens: self.provider.max_tokens,
        };
        let body = serde_json::to_value(&request).expect("serializable");
        self.persist(&body)?;
        let attempts = self.provider.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.provider.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.send_once(&body) {
                Ok(resp) => {
                    let text = resp
                        .choices
                        .into_iter()
                        .next()
                        .and_then(|c| c.message.content)
                        .ok_or_else(|| AgentError::BadResponse("no message content in first choice".into()))?;
                    let usage = resp.usage.map(|u| TokenUsage {
                        prompt_tokens: u.prompt_tokens,
                        completion_tokens: u.completion_tokens,
                    });
                    return Ok(AgentReply { text, usage });
                }
                Err(ureq::Error::StatusCode(code @ (401 | 403))) => return Err(AgentError::Unauthorized(code)),
                Err(e) => {
                    log::warn!("{}: attempt {} of {} failed: {e}", self.id, attempt + 1, attempts);
                    last = e.to_string();
                }
            }
        }
        Err(AgentError::Transport { attempts, last })
    }
}
