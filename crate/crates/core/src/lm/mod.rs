//! Language-model backends.
//!
//! Everything above this module talks to a model through [`LmBackend`]. The
//! live OpenAI-compatible client lives in [`live`]; deterministic scripted
//! backends for offline runs live in [`crate::oracle`].

pub mod live;
pub mod parse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use live::{LiveBackend, LiveConfig};
pub use parse::{
    extract_first_object, parse_choice, parse_json_payload, parse_summary, Choice, FieldKind, ParseError, PayloadValue,
};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("missing configuration: environment variable {0} is not set")]
    MissingConfig(&'static str),
    #[error("backend returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed backend response: {0}")]
    Decode(String),
    #[error("backend returned an empty completion")]
    EmptyResponse,
    #[error("scripted backend exhausted after {0} calls")]
    ScriptExhausted(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

/// Which part of the system issued a call. Never sent over the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallPurpose {
    Agent,
    Reflect,
    AwmWorkflow,
    Summarize,
    IdentifyGoals,
    InferTrajectory,
}

impl CallPurpose {
    pub fn is_agent(self) -> bool {
        self == CallPurpose::Agent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmParams {
    pub temperature: f64,
    pub max_new_tokens: u32,
}

impl LmParams {
    /// Agent calls: temperature 0, 4000 new tokens.
    pub const AGENT: LmParams = LmParams { temperature: 0.0, max_new_tokens: 4000 };
    /// Between-episode reasoning calls in the gridworld: temperature 0, 4000 new tokens.
    pub const OFFLINE: LmParams = LmParams { temperature: 0.0, max_new_tokens: 4000 };

    pub fn validate(&self) -> Result<(), LmError> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(LmError::InvalidRequest(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.max_new_tokens == 0 {
            return Err(LmError::InvalidRequest("max_new_tokens must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmRequest {
    pub purpose: CallPurpose,
    pub system_prompt: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_new_tokens: u32,
}

impl LmRequest {
    pub fn new(
        purpose: CallPurpose,
        system_prompt: impl Into<String>,
        messages: Vec<Message>,
        params: LmParams,
    ) -> Result<Self, LmError> {
        params.validate()?;
        Ok(LmRequest {
            purpose,
            system_prompt: system_prompt.into(),
            messages,
            temperature: params.temperature,
            max_new_tokens: params.max_new_tokens,
        })
    }

    /// Content of the last user message, or `""`.
    pub fn last_user(&self) -> &str {
        self.messages.iter().rev().find(|m| m.role == Role::User).map_or("", |m| m.content.as_str())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LmResponse {
    pub text: String,
    pub usage: Option<Usage>,
}

impl LmResponse {
    pub fn text(text: impl Into<String>) -> Self {
        LmResponse { text: text.into(), usage: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub deterministic: bool,
    pub live: bool,
}

/// A chat-completion model. Implementations are shared between concurrently
/// running episode streams.
pub trait LmBackend: Send + Sync {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse, LmError>;

    fn capabilities(&self) -> Capabilities;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_are_validated() {
        assert!(LmParams::AGENT.validate().is_ok());
        assert!(LmParams { temperature: -0.1, max_new_tokens: 10 }.validate().is_err());
        assert!(LmParams { temperature: f64::NAN, max_new_tokens: 10 }.validate().is_err());
        assert!(LmParams { temperature: 0.0, max_new_tokens: 0 }.validate().is_err());
    }

    #[test]
    fn last_user_message() {
        let req = LmRequest::new(
            CallPurpose::Agent,
            "sys",
            vec![Message::user("a"), Message::assistant("b"), Message::user("c"), Message::assistant("d")],
            LmParams::AGENT,
        )
        .unwrap();
        assert_eq!(req.last_user(), "c");
    }
}
