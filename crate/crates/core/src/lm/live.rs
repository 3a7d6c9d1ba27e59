//! OpenAI-compatible `/chat/completions` client.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{Capabilities, LmBackend, LmError, LmRequest, LmResponse, Role, Usage};

pub const ENV_API_KEY: &str = "LM_API_KEY";
pub const ENV_BASE_URL: &str = "LM_BASE_URL";
pub const ENV_MODEL: &str = "LM_MODEL";

const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";
const DEFAULT_MODEL: &str = "gpt-4o-2024-05-13";
const ERROR_BODY_LIMIT: usize = 512;

#[derive(Debug, Clone)]
pub struct LiveConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
    pub max_attempts: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub initial_backoff: Duration,
    pub requests_per_minute: Option<u32>,
}

impl LiveConfig {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>, model: impl Into<String>) -> Self {
        LiveConfig {
            base_url: base_url.into(),
            api_key: api_key.into(),
            model: model.into(),
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
            requests_per_minute: None,
        }
    }

    /// Reads `LM_API_KEY` (required), `LM_BASE_URL` and `LM_MODEL`.
    pub fn from_env() -> Result<Self, LmError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, LmError> {
        let api_key =
            lookup(ENV_API_KEY).filter(|k| !k.trim().is_empty()).ok_or(LmError::MissingConfig(ENV_API_KEY))?;
        let base_url = lookup(ENV_BASE_URL).unwrap_or_else(|| DEFAULT_BASE_URL.to_string());
        let model = lookup(ENV_MODEL).unwrap_or_else(|| DEFAULT_MODEL.to_string());
        Ok(Self::new(base_url, api_key, model))
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Deserialize)]
struct CompletionBody {
    choices: Vec<CompletionChoice>,
    usage: Option<CompletionUsage>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct CompletionUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

enum Attempt {
    Done(LmResponse),
    Retry(LmError),
    Fail(LmError),
}

pub struct LiveBackend {
    config: LiveConfig,
    client: reqwest::blocking::Client,
    next_slot: Mutex<Option<Instant>>,
    audit: Option<Mutex<File>>,
    retries: AtomicU64,
    calls: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

impl LiveBackend {
    pub fn new(config: LiveConfig) -> Result<Self, LmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| LmError::Transport(e.to_string()))?;
        Ok(LiveBackend {
            config,
            client,
            next_slot: Mutex::new(None),
            audit: None,
            retries: AtomicU64::new(0),
            calls: AtomicU64::new(0),
            prompt_tokens: AtomicU64::new(0),
            completion_tokens: AtomicU64::new(0),
        })
    }

    /// Mirrors every request and its outcome to a JSONL file.
    pub fn with_audit_log(mut self, path: &Path) -> std::io::Result<Self> {
        self.audit = Some(Mutex::new(File::create(path)?));
        Ok(self)
    }

    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn usage(&self) -> Usage {
        Usage {
            prompt_tokens: self.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.completion_tokens.load(Ordering::Relaxed),
        }
    }

    fn wire_body(&self, request: &LmRequest) -> serde_json::Value {
        let mut messages = Vec::with_capacity(request.messages.len() + 1);
        messages.push(json!({"role": "system", "content": request.system_prompt}));
        for m in &request.messages {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
            };
            messages.push(json!({"role": role, "content": m.content}));
        }
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_new_tokens,
        })
    }

    fn wait_for_slot(&self) {
        let Some(rpm) = self.config.requests_per_minute.filter(|&r| r > 0) else {
            return;
        };
        let interval = Duration::from_secs(60) / rpm;
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + interval);
            start - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        self.wait_for_slot();
        let response = self.client.post(self.config.endpoint()).bearer_auth(&self.config.api_key).json(body).send();
        let response = match response {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(LmError::Transport(e.to_string())),
        };
        let status = response.status().as_u16();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(LmError::Transport(e.to_string())),
        };
        if status != 200 {
            let err = LmError::Http { status, body: truncate(&text, ERROR_BODY_LIMIT) };
            return if status == 429 || status >= 500 { Attempt::Retry(err) } else { Attempt::Fail(err) };
        }
        let parsed: CompletionBody = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Attempt::Fail(LmError::Decode(e.to_string())),
        };
        let content = parsed.choices.into_iter().next().and_then(|c| c.message.content).filter(|c| !c.is_empty());
        match content {
            Some(text) => Attempt::Done(LmResponse {
                text,
                usage: parsed
                    .usage
                    .map(|u| Usage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens }),
            }),
            None => Attempt::Fail(LmError::EmptyResponse),
        }
    }

    fn audit(&self, request: &LmRequest, attempt: u32, outcome: &Result<&LmResponse, &LmError>) {
        let Some(file) = &self.audit else { return };
        let record = match outcome {
            Ok(r) => {
                json!({"purpose": request.purpose, "attempt": attempt, "request": self.wire_body(request), "response": r.text})
            }
            Err(e) => {
                json!({"purpose": request.purpose, "attempt": attempt, "request": self.wire_body(request), "error": e.to_string()})
            }
        };
        if let Ok(mut f) = file.lock() {
            if let Err(e) = writeln!(f, "{record}") {
                log::warn!("failed to write LM audit record: {e}");
            }
        }
    }
}

impl LmBackend for LiveBackend {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse, LmError> {
        let body = self.wire_body(request);
        let attempts = self.config.max_attempts.max(1);
        let mut backoff = self.config.initial_backoff;
        self.calls.fetch_add(1, Ordering::Relaxed);
        for attempt in 1..=attempts {
            match self.attempt(&body) {
                Attempt::Done(response) => {
                    if let Some(u) = response.usage {
                        self.prompt_tokens.fetch_add(u.prompt_tokens, Ordering::Relaxed);
                        self.completion_tokens.fetch_add(u.completion_tokens, Ordering::Relaxed);
                    }
                    self.audit(request, attempt, &Ok(&response));
                    return Ok(response);
                }
                Attempt::Fail(err) => {
                    self.audit(request, attempt, &Err(&err));
                    return Err(err);
                }
                Attempt::Retry(err) => {
                    self.audit(request, attempt, &Err(&err));
                    if attempt == attempts {
                        return Err(err);
                    }
                    log::warn!("LM call attempt {attempt}/{attempts} failed ({err}); retrying in {backoff:?}");
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
        unreachable!("loop returns on the final attempt")
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { deterministic: false, live: true }
    }
}

fn truncate(text: &str, limit: usize) -> String {
    match text.char_indices().nth(limit) {
        Some((idx, _)) => format!("{}...", &text[..idx]),
        None => text.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_requires_api_key() {
        let err = LiveConfig::from_lookup(|_| None).unwrap_err();
        assert!(matches!(err, LmError::MissingConfig(ENV_API_KEY)));
        let cfg = LiveConfig::from_lookup(|k| (k == ENV_API_KEY).then(|| "sk-test".to_string())).unwrap();
        assert_eq!(cfg.endpoint(), "https://api.openai.com/v1/chat/completions");
        assert_eq!(cfg.max_attempts, 3);
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        assert_eq!(truncate("héllo", 2), "hé...");
        assert_eq!(truncate("hi", 10), "hi");
    }
}
