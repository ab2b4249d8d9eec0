use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{
    last_user, prompt_fingerprint, ChatBackend, ChatSession, Completion, LlmConfig, LlmError, Message, SessionFactory,
    SessionTags, Transcript,
};
use crate::prompts::SYSTEM_PROMPT;

/// Reply returned by a non-strict replay client once its script runs out.
pub const UNSCRIPTED: &str = "UNSCRIPTED";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub reply: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_prompt_sha256: Option<String>,
}

impl From<&str> for ScriptEntry {
    fn from(s: &str) -> Self {
        ScriptEntry { reply: s.to_string(), expect_prompt_sha256: None }
    }
}

impl From<String> for ScriptEntry {
    fn from(reply: String) -> Self {
        ScriptEntry { reply, expect_prompt_sha256: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayScript {
    pub entries: Vec<ScriptEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Replies(Vec<String>),
    Entries(Vec<ScriptEntry>),
    Wrapped(ReplayScript),
    Transcript(Box<Transcript>),
    Transcripts(Vec<Transcript>),
}

impl ReplayScript {
    pub fn new<I, E>(entries: I) -> Self
    where
        I: IntoIterator<Item = E>,
        E: Into<ScriptEntry>,
    {
        ReplayScript { entries: entries.into_iter().map(Into::into).collect() }
    }

    /// Assistant replies in order, each pinned to the fingerprint of the user
    /// message it answered.
    pub fn from_transcript(t: &Transcript) -> Self {
        t.replay_script()
    }

    pub fn from_transcripts<'a>(ts: impl IntoIterator<Item = &'a Transcript>) -> Self {
        ReplayScript { entries: ts.into_iter().flat_map(|t| t.replay_script().entries).collect() }
    }

    /// Accepts a list of replies, a list of entries, `{"entries": [...]}`,
    /// a transcript, or a list of transcripts.
    pub fn from_json_str(s: &str) -> Result<Self, LlmError> {
        Ok(match serde_json::from_str::<ScriptFile>(s)? {
            ScriptFile::Replies(r) => ReplayScript::new(r),
            ScriptFile::Entries(entries) => ReplayScript { entries },
            ScriptFile::Wrapped(w) => w,
            ScriptFile::Transcript(t) => t.replay_script(),
            ScriptFile::Transcripts(ts) => ReplayScript::from_transcripts(&ts),
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug)]
struct Cursor {
    script: ReplayScript,
    next: usize,
}

/// Session factory whose sessions consume one shared script in order.
#[derive(Debug, Clone)]
pub struct ReplayClient {
    cursor: Arc<Mutex<Cursor>>,
    strict: bool,
    config: LlmConfig,
}

pub fn make_replay_client(script: ReplayScript, strict: bool) -> ReplayClient {
    ReplayClient {
        cursor: Arc::new(Mutex::new(Cursor { script, next: 0 })),
        strict,
        config: LlmConfig { model_name: "replay".into(), retry_backoff_ms: 0, ..LlmConfig::default() },
    }
}

impl ReplayClient {
    pub fn with_model_name(mut self, name: impl Into<String>) -> Self {
        self.config.model_name = name.into();
        self
    }

    pub fn consumed(&self) -> usize {
        self.cursor.lock().expect("replay cursor").next
    }

    pub fn remaining(&self) -> usize {
        let c = self.cursor.lock().expect("replay cursor");
        c.script.len().saturating_sub(c.next)
    }
}

struct ReplayBackend {
    cursor: Arc<Mutex<Cursor>>,
    strict: bool,
}

impl ChatBackend for ReplayBackend {
    fn complete(&mut self, messages: &[Message], _config: &LlmConfig) -> Result<Completion, LlmError> {
        let mut c = self.cursor.lock().expect("replay cursor");
        let index = c.next;
        let Some(entry) = c.script.entries.get(index).cloned() else {
            if self.strict {
                return Err(LlmError::ScriptExhausted { used: index });
            }
            return Ok(Completion { content: UNSCRIPTED.into(), usage: None });
        };
        if let Some(expected) = &entry.expect_prompt_sha256 {
            let actual = prompt_fingerprint(last_user(messages));
            if &actual != expected {
                if self.strict {
                    return Err(LlmError::PromptMismatch { index, expected: expected.clone(), actual });
                }
                log::warn!("replay entry {index}: prompt fingerprint mismatch");
            }
        }
        c.next += 1;
        Ok(Completion { content: entry.reply, usage: None })
    }
}

impl SessionFactory for ReplayClient {
    fn new_session(&self, tags: SessionTags) -> Result<ChatSession, LlmError> {
        let backend = ReplayBackend { cursor: self.cursor.clone(), strict: self.strict };
        Ok(ChatSession::new(SYSTEM_PROMPT, self.config.clone(), Box::new(backend), tags))
    }
}
