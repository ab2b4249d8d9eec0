use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ChatSession, Completion, LlmError, Message, ReplayScript, Role, ScriptEntry, SessionTags};

pub const TRANSCRIPT_SCHEMA: &str = "transcript/1";

/// Hex SHA-256 of a user prompt.
pub fn prompt_fingerprint(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub schema: String,
    pub model_name: String,
    pub strategy: String,
    #[serde(default)]
    pub motion_id: Option<u32>,
    pub started_at: String,
    #[serde(default)]
    pub finished_at: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCounts {
    pub prompt: u64,
    pub completion: u64,
    /// Exchanges for which the backend reported no usage.
    pub unreported: u64,
}

/// Append-only record of one session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub metadata: TranscriptMeta,
    pub messages: Vec<Message>,
    pub token_counts: TokenCounts,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl Transcript {
    pub(super) fn start(model_name: &str, tags: &SessionTags, system: Message) -> Self {
        Transcript {
            metadata: TranscriptMeta {
                schema: TRANSCRIPT_SCHEMA.into(),
                model_name: model_name.into(),
                strategy: tags.strategy.clone(),
                motion_id: tags.motion_id,
                started_at: now(),
                finished_at: None,
            },
            messages: vec![system],
            token_counts: TokenCounts::default(),
        }
    }

    pub(super) fn push_exchange(&mut self, user: &str, completion: &Completion) {
        self.messages.push(Message::new(Role::User, user));
        self.messages.push(Message::new(Role::Assistant, completion.content.clone()));
        match completion.usage {
            Some(u) => {
                self.token_counts.prompt += u.prompt_tokens;
                self.token_counts.completion += u.completion_tokens;
            }
            None => self.token_counts.unreported += 1,
        }
    }

    pub(super) fn finish(&mut self) {
        self.metadata.finished_at = Some(now());
    }

    pub fn exchanges(&self) -> usize {
        self.messages.iter().filter(|m| m.role == Role::Assistant).count()
    }

    pub fn replay_script(&self) -> ReplayScript {
        let mut entries = Vec::new();
        let mut last_user: Option<&str> = None;
        for m in &self.messages {
            match m.role {
                Role::User => last_user = Some(&m.content),
                Role::Assistant => entries.push(ScriptEntry {
                    reply: m.content.clone(),
                    expect_prompt_sha256: last_user.map(prompt_fingerprint),
                }),
                Role::System => {}
            }
        }
        ReplayScript { entries }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes") + "\n"
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), LlmError> {
        if let Some(dir) = path.as_ref().parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

/// Write the session's transcript into `dir` as `<name>.json`.
pub fn record_transcript(session: &mut ChatSession, dir: impl AsRef<Path>, name: &str) -> Result<PathBuf, LlmError> {
    if session.transcript().exchanges() == 0 {
        return Err(LlmError::Config("cannot record a session without exchanges".into()));
    }
    let t = session.finish();
    let path = dir.as_ref().join(format!("{name}.json"));
    t.write(&path)?;
    Ok(path)
}
