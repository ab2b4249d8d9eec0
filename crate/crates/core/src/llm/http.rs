use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatSession, Completion, LlmConfig, LlmError, Message, SessionFactory, SessionTags, Usage};
use crate::prompts::SYSTEM_PROMPT;

/// Chat-completions client over blocking HTTP. Do not call from inside an
/// async runtime.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    api_key: String,
}

impl HttpBackend {
    pub fn new(config: &LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| LlmError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(HttpBackend { client, api_key })
    }
}

pub(crate) fn request_body(messages: &[Message], config: &LlmConfig) -> Value {
    json!({
        "model": config.model_name,
        "messages": messages,
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    })
}

pub(crate) fn parse_response(body: &Value) -> Result<Completion, LlmError> {
    let content = body
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::Provider { status: 200, message: "response has no choices[0].message.content".into() })?;
    let usage = body.get("usage").map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    });
    Ok(Completion { content: content.to_string(), usage })
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, messages: &[Message], config: &LlmConfig) -> Result<Completion, LlmError> {
        let resp = self
            .client
            .post(&config.endpoint_url)
            .bearer_auth(&self.api_key)
            .json(&request_body(messages, config))
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    LlmError::Timeout { attempts: 1 }
                } else {
                    LlmError::Transport { attempts: 1, message: e.to_string() }
                }
            })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| LlmError::Transport { attempts: 1, message: e.to_string() })?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(LlmError::Transport { attempts: 1, message: format!("status {status}: {text}") });
        }
        if !status.is_success() {
            return Err(LlmError::Provider { status: status.as_u16(), message: text });
        }
        let body: Value = serde_json::from_str(&text)?;
        parse_response(&body)
    }
}

/// Factory for live sessions. Construction fails early when the API key
/// variable is missing.
#[derive(Debug, Clone)]
pub struct HttpClient {
    config: LlmConfig,
}

impl HttpClient {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        if std::env::var(&config.api_key_env).is_err() {
            return Err(LlmError::Config(format!("environment variable {} is not set", config.api_key_env)));
        }
        Ok(HttpClient { config })
    }
}

impl SessionFactory for HttpClient {
    fn new_session(&self, tags: SessionTags) -> Result<ChatSession, LlmError> {
        let backend = HttpBackend::new(&self.config)?;
        Ok(ChatSession::new(SYSTEM_PROMPT, self.config.clone(), Box::new(backend), tags))
    }
}
