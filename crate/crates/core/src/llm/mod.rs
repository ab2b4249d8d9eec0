//! Chat sessions over pluggable backends.
//!
//! A [`ChatSession`] owns the message history and the retry policy; the
//! [`ChatBackend`] only performs one completion attempt. Backends exist for
//! HTTP chat-completions endpoints, scripted replay, and plain closures.

mod http;
mod replay;
mod transcript;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpBackend, HttpClient};
pub use replay::{make_replay_client, ReplayClient, ReplayScript, ScriptEntry, UNSCRIPTED};
pub use transcript::{prompt_fingerprint, record_transcript, Transcript, TranscriptMeta, TokenCounts};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned {status}: {message}")]
    Provider { status: u16, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("replay script exhausted after {used} repl(ies)")]
    ScriptExhausted { used: usize },
    #[error("prompt fingerprint mismatch at script entry {index}: expected {expected}, got {actual}")]
    PromptMismatch { index: usize, expected: String, actual: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LlmError {
    fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Transport { .. } | LlmError::Timeout { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
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
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Message { role, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Seconds.
    pub timeout: f64,
    pub max_retries: u32,
    pub api_key_env: String,
    /// First backoff delay in milliseconds; doubles on every retry.
    pub retry_backoff_ms: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            endpoint_url: "https://api.openai.com/v1/chat/completions".into(),
            model_name: "gpt-4o".into(),
            temperature: 1.0,
            max_tokens: 4095,
            timeout: 60.0,
            max_retries: 3,
            api_key_env: "OPENAI_API_KEY".into(),
            retry_backoff_ms: 1000,
        }
    }
}

impl LlmConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |m: &str| Err(LlmError::Config(m.to_string()));
        if !(self.temperature >= 0.0) {
            return bad("temperature must be >= 0");
        }
        if self.max_tokens < 1 {
            return bad("max_tokens must be >= 1");
        }
        if !(self.timeout > 0.0) || !self.timeout.is_finite() {
            return bad("timeout must be > 0");
        }
        Ok(())
    }

    pub fn backoff(&self, retry: u32) -> Duration {
        Duration::from_millis(self.retry_backoff_ms.saturating_mul(1u64 << retry.min(16)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub content: String,
    pub usage: Option<Usage>,
}

/// One completion attempt. Retries are handled by [`ChatSession`], so
/// backends report transient failures as `Transport` or `Timeout`.
pub trait ChatBackend: Send {
    fn complete(&mut self, messages: &[Message], config: &LlmConfig) -> Result<Completion, LlmError>;
}

/// Labels recorded in transcripts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTags {
    pub strategy: String,
    pub motion_id: Option<u32>,
}

impl SessionTags {
    pub fn new(strategy: impl Into<String>, motion_id: Option<u32>) -> Self {
        SessionTags { strategy: strategy.into(), motion_id }
    }
}

pub struct ChatSession {
    config: LlmConfig,
    backend: Box<dyn ChatBackend>,
    history: Vec<Message>,
    transcript: Transcript,
}

impl std::fmt::Debug for ChatSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatSession").field("history", &self.history.len()).finish()
    }
}

impl ChatSession {
    pub fn new(system_prompt: &str, config: LlmConfig, backend: Box<dyn ChatBackend>, tags: SessionTags) -> Self {
        let system = Message::new(Role::System, system_prompt);
        let transcript = Transcript::start(&config.model_name, &tags, system.clone());
        ChatSession { config, backend, history: vec![system], transcript }
    }

    pub fn system_prompt(&self) -> &str {
        &self.history[0].content
    }

    pub fn history(&self) -> &[Message] {
        &self.history
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn user_turns(&self) -> usize {
        self.history.iter().filter(|m| m.role == Role::User).count()
    }

    /// Send one user message and return the reply. History grows only on
    /// success.
    pub fn send(&mut self, user_message: &str) -> Result<String, LlmError> {
        let mut messages = self.history.clone();
        messages.push(Message::new(Role::User, user_message));
        let mut attempt = 0u32;
        let completion = loop {
            attempt += 1;
            match self.backend.complete(&messages, &self.config) {
                Ok(c) => break c,
                Err(e) if e.is_retryable() && attempt <= self.config.max_retries => {
                    log::warn!("attempt {attempt} failed: {e}; retrying");
                    std::thread::sleep(self.config.backoff(attempt - 1));
                }
                Err(LlmError::Transport { message, .. }) => {
                    return Err(LlmError::Transport { attempts: attempt, message })
                }
                Err(LlmError::Timeout { .. }) => return Err(LlmError::Timeout { attempts: attempt }),
                Err(e) => return Err(e),
            }
        };
        self.history = messages;
        self.history.push(Message::new(Role::Assistant, completion.content.clone()));
        self.transcript.push_exchange(user_message, &completion);
        Ok(completion.content)
    }

    /// Finalize and return the transcript.
    pub fn finish(&mut self) -> Transcript {
        self.transcript.finish();
        self.transcript.clone()
    }
}

/// Produces fresh sessions. Implementations must be shareable across threads.
pub trait SessionFactory: Send + Sync {
    fn new_session(&self, tags: SessionTags) -> Result<ChatSession, LlmError>;
}

impl<F: SessionFactory + ?Sized> SessionFactory for Arc<F> {
    fn new_session(&self, tags: SessionTags) -> Result<ChatSession, LlmError> {
        (**self).new_session(tags)
    }
}

impl<F: SessionFactory + ?Sized> SessionFactory for &F {
    fn new_session(&self, tags: SessionTags) -> Result<ChatSession, LlmError> {
        (**self).new_session(tags)
    }
}

type Responder = dyn Fn(&[Message]) -> String + Send + Sync;

/// Backend that answers with a closure over the full message list.
pub struct FnBackend {
    responder: Arc<Responder>,
}

impl ChatBackend for FnBackend {
    fn complete(&mut self, messages: &[Message], _config: &LlmConfig) -> Result<Completion, LlmError> {
        Ok(Completion { content: (self.responder)(messages), usage: None })
    }
}

/// Factory of closure-backed sessions, handy for scripted responders.
#[derive(Clone)]
pub struct FnClient {
    responder: Arc<Responder>,
    config: LlmConfig,
    system_prompt: String,
}

impl FnClient {
    pub fn new(responder: impl Fn(&[Message]) -> String + Send + Sync + 'static) -> Self {
        FnClient {
            responder: Arc::new(responder),
            config: LlmConfig { model_name: "scripted".into(), ..LlmConfig::default() },
            system_prompt: crate::prompts::SYSTEM_PROMPT.to_string(),
        }
    }

    pub fn with_config(mut self, config: LlmConfig) -> Self {
        self.config = config;
        self
    }
}

impl SessionFactory for FnClient {
    fn new_session(&self, tags: SessionTags) -> Result<ChatSession, LlmError> {
        let backend = FnBackend { responder: self.responder.clone() };
        Ok(ChatSession::new(&self.system_prompt, self.config.clone(), Box::new(backend), tags))
    }
}

/// Last user message in a message list.
pub fn last_user(messages: &[Message]) -> &str {
    messages.iter().rev().find(|m| m.role == Role::User).map(|m| m.content.as_str()).unwrap_or("")
}
