//! Provider-agnostic chat-completion gateway with deterministic
//! record/replay cassettes.
//!
//! Agents talk to a [`Backend`], which wraps a provider adapter in one of
//! three modes: LIVE calls through, RECORD calls through and appends each
//! exchange to a cassette, REPLAY serves responses from the cassette in
//! strict order and never touches the network. Requests are matched by a
//! content fingerprint over a canonical rendering, so a replayed run fails
//! loudly the moment a prompt drifts from what was recorded.

pub mod backend;
pub mod canonical;
pub mod cassette;
pub mod providers;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::Backend;
pub use canonical::{canonical_request_text, fingerprint};
pub use cassette::{Cassette, CassetteEntry};
pub use providers::{
    AnthropicProvider, DenyAllProvider, GeminiProvider, OpenAiProvider, Provider, ScriptedProvider,
};

/// Default completion budget when a request does not set one.
pub const DEFAULT_MAX_TOKENS: u32 = 2048;
/// Default per-call timeout for live providers, in seconds.
pub const DEFAULT_TIMEOUT_SECS: u64 = 120;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One content part of a chat message: text, or an image attachment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ContentPart {
    Text { text: String },
    Image { media_type: String, data: Vec<u8> },
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        ContentPart::Text { text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            parts: vec![ContentPart::text(text)],
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            parts: vec![ContentPart::text(text)],
        }
    }

    /// Concatenated text parts, used for token accounting.
    pub fn joined_text(&self) -> String {
        let mut out = String::new();
        for part in &self.parts {
            if let ContentPart::Text { text } = part {
                out.push_str(text);
                out.push('\n');
            }
        }
        out
    }
}

/// A chat-completion request. Temperature defaults to 0: determinism is
/// the whole point of this harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub model_id: String,
    pub temperature: f32,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        ChatRequest {
            messages,
            model_id: model_id.into(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".to_string()));
        }
        if self.temperature < 0.0 {
            return Err(LlmError::InvalidRequest("negative temperature".to_string()));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest(
                "max_tokens must be positive".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

/// A chat-completion response. `truncated` reports provider-side output
/// truncation; an empty `text` is only legal when it is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
    #[serde(default)]
    pub truncated: bool,
}

/// Gateway operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Live => write!(f, "LIVE"),
            Mode::Record => write!(f, "RECORD"),
            Mode::Replay => write!(f, "REPLAY"),
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("provider http {status}: {body}")]
    Http { status: u16, body: String },
    #[error("request timed out after {0}s")]
    Timeout(u64),
    #[error("cassette exhausted: no entry for call {call_index}")]
    CassetteExhausted { call_index: usize },
    #[error("fingerprint mismatch at cassette entry {entry_index}:\n{diff}")]
    FingerprintMismatch { entry_index: usize, diff: String },
    #[error("cassette io error: {0}")]
    CassetteIo(String),
    #[error("network denied: {0}")]
    NetworkDenied(String),
}

impl LlmError {
    /// True for faults of the harness plumbing (cassette problems, denied
    /// sockets) rather than the modelled provider. The runner scores these
    /// as infrastructure errors, not agent verdicts.
    pub fn is_infrastructure(&self) -> bool {
        matches!(
            self,
            LlmError::CassetteExhausted { .. }
                | LlmError::FingerprintMismatch { .. }
                | LlmError::CassetteIo(_)
                | LlmError::NetworkDenied(_)
        )
    }
}
