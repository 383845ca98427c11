//! Chat-completion access: a live OpenAI-compatible backend, cassette
//! record/replay, and a per-session token budget.

mod cassette;
mod http;

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{fingerprint, Cassette, CassetteBackend, CassetteEntry, CassetteMode};
pub use http::{HttpBackend, HttpConfig, RetryPolicy};

pub const ENV_API_KEY: &str = "SLICEMATE_API_KEY";
pub const ENV_API_BASE: &str = "SLICEMATE_API_BASE";
pub const ENV_MODEL: &str = "SLICEMATE_MODEL";

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_MAX_OUTPUT: u32 = 4096;
pub const DEFAULT_TOKEN_BUDGET: u64 = 200_000;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid chat request: {0}")]
    InvalidRequest(String),
    #[error("provider error{}: {message}", status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Provider { status: Option<u16>, message: String },
    #[error("no cassette entry for request {fingerprint}")]
    ReplayMiss { fingerprint: String },
    #[error("token budget exhausted: {used} used, {requested} more requested, budget {budget}")]
    BudgetExceeded { used: u64, requested: u64, budget: u64 },
    #[error("corrupt cassette {}: line {line}: {message}", path.display())]
    CorruptCassette {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("cassette conflict: fingerprint {fingerprint} maps to different responses")]
    CassetteConflict { fingerprint: String },
    #[error("cassette i/o on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub temperature: f64,
    pub messages: Vec<Message>,
    pub max_output: u32,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Self {
        Self {
            model_id: model_id.into(),
            temperature: 0.0,
            messages,
            max_output: DEFAULT_MAX_OUTPUT,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(LlmError::InvalidRequest("no user message".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.model_id.is_empty() {
            return Err(LlmError::InvalidRequest("empty model id".into()));
        }
        Ok(())
    }

    /// Rough prompt size in tokens (four characters per token).
    pub fn estimated_prompt_tokens(&self) -> u64 {
        let chars: usize = self.messages.iter().map(|m| m.content.chars().count()).sum();
        chars.div_ceil(4) as u64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl Usage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    #[serde(default)]
    pub latency_ms: u64,
}

/// Something that answers chat requests. Implementations must be safe to
/// call from several sessions at once.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

type Script = dyn Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync;

/// A backend answering from a closure; usage is estimated from text length.
pub struct ScriptedBackend {
    script: Box<Script>,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new(
        script: impl Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            script: Box::new(script),
            calls: AtomicU64::new(0),
        }
    }

    /// Replies with `answers` in order, then fails.
    pub fn sequence(answers: Vec<String>) -> Self {
        let queue = Mutex::new(answers.into_iter());
        Self::new(move |_| {
            queue
                .lock()
                .expect("script queue poisoned")
                .next()
                .ok_or_else(|| LlmError::Provider {
                    status: None,
                    message: "scripted backend has no more answers".into(),
                })
        })
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = (self.script)(request)?;
        Ok(ChatResponse {
            usage: Usage {
                prompt_tokens: request.estimated_prompt_tokens(),
                completion_tokens: text.chars().count().div_ceil(4) as u64,
            },
            text,
            latency_ms: 0,
        })
    }
}

/// Model settings for a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSettings {
    pub model_id: String,
    pub temperature: f64,
    pub max_output: u32,
    pub token_budget: u64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            model_id: DEFAULT_MODEL.into(),
            temperature: 0.0,
            max_output: DEFAULT_MAX_OUTPUT,
            token_budget: DEFAULT_TOKEN_BUDGET,
        }
    }
}

/// A backend plus the token budget of one slicing session.
pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    settings: ModelSettings,
    used: AtomicU64,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>, settings: ModelSettings) -> Self {
        Self {
            backend,
            settings,
            used: AtomicU64::new(0),
        }
    }

    pub fn settings(&self) -> &ModelSettings {
        &self.settings
    }

    pub fn used_tokens(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    /// Sends `messages` with the session's model settings. Refuses to send
    /// when the estimated prompt would take the session over its budget.
    pub fn chat(&self, messages: Vec<Message>) -> Result<ChatResponse, LlmError> {
        let request = ChatRequest {
            model_id: self.settings.model_id.clone(),
            temperature: self.settings.temperature,
            messages,
            max_output: self.settings.max_output,
        };
        request.validate()?;
        let used = self.used_tokens();
        let requested = request.estimated_prompt_tokens();
        if used + requested > self.settings.token_budget {
            return Err(LlmError::BudgetExceeded {
                used,
                requested,
                budget: self.settings.token_budget,
            });
        }
        let response = self.backend.complete(&request)?;
        self.used.fetch_add(response.usage.total(), Ordering::SeqCst);
        Ok(response)
    }
}
