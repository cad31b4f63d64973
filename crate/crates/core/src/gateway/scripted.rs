//! Scripted transcript backend: canned replies consumed strictly in order,
//! each guarded by a matcher. Makes the entire engine deterministic.

use super::prompt::{AgentKind, PromptBundle};
use super::GatewayError;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::sync::Mutex;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Matcher {
    pub agent_kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptEntry {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub reply: String,
}

#[derive(Debug)]
pub struct ScriptedBackend {
    entries: Mutex<VecDeque<TranscriptEntry>>,
    consumed: Mutex<usize>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<TranscriptEntry>) -> ScriptedBackend {
        ScriptedBackend {
            entries: Mutex::new(entries.into()),
            consumed: Mutex::new(0),
        }
    }

    /// Parse a transcript file: a UTF-8 JSON array of
    /// `{"match": {"agent_kind", "contains"?}, "reply": string}`.
    pub fn from_json(document: &[u8]) -> Result<ScriptedBackend, GatewayError> {
        let entries: Vec<TranscriptEntry> = serde_json::from_slice(document)
            .map_err(|e| GatewayError::Transcript(format!("malformed transcript: {e}")))?;
        Ok(ScriptedBackend::new(entries))
    }

    pub fn remaining(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    /// Pop the next entry; its matcher must accept the call.
    pub fn next_reply(&self, bundle: &PromptBundle) -> Result<String, GatewayError> {
        let mut entries = self.entries.lock().unwrap();
        let mut consumed = self.consumed.lock().unwrap();
        let entry = entries.pop_front().ok_or(GatewayError::TranscriptExhausted {
            agent_kind: bundle.agent_kind,
            consumed: *consumed,
        })?;
        *consumed += 1;
        if entry.matcher.agent_kind != bundle.agent_kind {
            return Err(GatewayError::TranscriptMismatch {
                position: *consumed,
                expected: entry.matcher.agent_kind,
                got: bundle.agent_kind,
                detail: String::new(),
            });
        }
        if let Some(needle) = &entry.matcher.contains {
            if !bundle.render_text().contains(needle.as_str()) {
                return Err(GatewayError::TranscriptMismatch {
                    position: *consumed,
                    expected: entry.matcher.agent_kind,
                    got: bundle.agent_kind,
                    detail: format!("prompt does not contain {needle:?}"),
                });
            }
        }
        Ok(entry.reply)
    }
}
