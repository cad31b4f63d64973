//! VLM gateway: assembles agent prompts, forwards them to a chat-with-images
//! backend (remote endpoint or scripted transcript), and parses structured
//! replies. Also the single place where gateway calls are counted and logged.

pub mod decision;
pub mod prompt;
pub mod remote;
pub mod scripted;

pub use decision::{parse_structured_reply, Decision, ParseError};
pub use prompt::{assemble_prompt, AgentKind, PromptBundle, PromptContext, PromptImage, SectionName};
pub use remote::RemoteConfig;
pub use scripted::{Matcher, TranscriptEntry};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("prompt for {agent_kind} is missing section {section}")]
    MissingSection { agent_kind: AgentKind, section: String },
    #[error("gateway configuration: {0}")]
    Config(String),
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("transcript exhausted after {consumed} replies; no entry left for {agent_kind}")]
    TranscriptExhausted { agent_kind: AgentKind, consumed: usize },
    #[error("transcript entry {position} expects {expected} but the call was {got}{}",
            if .detail.is_empty() { String::new() } else { format!(" ({detail})") })]
    TranscriptMismatch {
        position: usize,
        expected: AgentKind,
        got: AgentKind,
        detail: String,
    },
    #[error("authentication failed with HTTP {0}; not retried")]
    Auth(u16),
    #[error("remote completion failed after {retries} retries: {message}")]
    Remote { message: String, retries: u32 },
}

/// One completion: raw text, the parsed block once a parse succeeded, and
/// token usage (zero for scripted replies).
#[derive(Debug, Clone)]
pub struct VlmReply {
    pub raw: String,
    pub parsed: Option<serde_json::Value>,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Log line for one gateway call, drained into the migration trace.
#[derive(Debug, Clone)]
pub struct CallRecord {
    pub agent_kind: AgentKind,
    pub sections: Vec<String>,
    pub image_labels: Vec<String>,
    pub reply_raw: String,
}

enum Backend {
    Scripted(scripted::ScriptedBackend),
    Remote(remote::RemoteBackend),
}

/// Safe for concurrent calls; the scripted backend serializes transcript
/// consumption internally.
pub struct Gateway {
    backend: Backend,
    calls: AtomicU64,
    per_kind: Mutex<BTreeMap<AgentKind, u64>>,
    log: Mutex<Vec<CallRecord>>,
}

impl Gateway {
    pub fn scripted(entries: Vec<TranscriptEntry>) -> Gateway {
        Gateway::new(Backend::Scripted(scripted::ScriptedBackend::new(entries)))
    }

    pub fn scripted_from_json(document: &[u8]) -> Result<Gateway, GatewayError> {
        Ok(Gateway::new(Backend::Scripted(
            scripted::ScriptedBackend::from_json(document)?,
        )))
    }

    pub fn remote(config: RemoteConfig) -> Gateway {
        Gateway::new(Backend::Remote(remote::RemoteBackend::new(config)))
    }

    fn new(backend: Backend) -> Gateway {
        Gateway {
            backend,
            calls: AtomicU64::new(0),
            per_kind: Mutex::new(BTreeMap::new()),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Issue one completion for an assembled bundle.
    pub fn complete(&self, bundle: &PromptBundle) -> Result<VlmReply, GatewayError> {
        let (raw, prompt_tokens, completion_tokens) = match &self.backend {
            Backend::Scripted(s) => (s.next_reply(bundle)?, 0, 0),
            Backend::Remote(r) => r.complete(bundle)?,
        };
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self
            .per_kind
            .lock()
            .unwrap()
            .entry(bundle.agent_kind)
            .or_insert(0) += 1;
        self.log.lock().unwrap().push(CallRecord {
            agent_kind: bundle.agent_kind,
            sections: bundle
                .section_names()
                .iter()
                .map(|n| n.title().to_string())
                .collect(),
            image_labels: bundle.images.iter().map(|i| i.label.clone()).collect(),
            reply_raw: raw.clone(),
        });
        Ok(VlmReply {
            raw,
            parsed: None,
            prompt_tokens,
            completion_tokens,
        })
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, kind: AgentKind) -> u64 {
        self.per_kind.lock().unwrap().get(&kind).copied().unwrap_or(0)
    }

    pub fn drain_log(&self) -> Vec<CallRecord> {
        std::mem::take(&mut self.log.lock().unwrap())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum QueryError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{agent_kind} reply rejected after {attempts} attempts: {last_error}")]
    Rejected {
        agent_kind: AgentKind,
        attempts: u32,
        last_error: String,
    },
}

/// Issue a completion and interpret it, re-querying with the same bundle on
/// parse or validation failure until the re-query budget runs out.
pub fn query<T>(
    gateway: &Gateway,
    bundle: &PromptBundle,
    re_query_budget: u32,
    mut interpret: impl FnMut(&VlmReply) -> Result<T, String>,
) -> Result<T, QueryError> {
    let mut last_error = String::new();
    let attempts = 1 + re_query_budget;
    for _ in 0..attempts {
        let reply = gateway.complete(bundle)?;
        match interpret(&reply) {
            Ok(value) => return Ok(value),
            Err(e) => last_error = e,
        }
    }
    Err(QueryError::Rejected {
        agent_kind: bundle.agent_kind,
        attempts,
        last_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use prompt::PromptContext;

    fn entry(kind: AgentKind, contains: Option<&str>, reply: &str) -> TranscriptEntry {
        TranscriptEntry {
            matcher: Matcher {
                agent_kind: kind,
                contains: contains.map(str::to_string),
            },
            reply: reply.to_string(),
        }
    }

    fn group_bundle() -> PromptBundle {
        assemble_prompt(
            AgentKind::AnalyzerGroup,
            &PromptContext {
                source_context: Some("1. tap the button '5'".into()),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn scripted_reply_passes_through_verbatim() {
        let gw = Gateway::scripted(vec![entry(
            AgentKind::AnalyzerGroup,
            None,
            "grouped as one step",
        )]);
        let reply = gw.complete(&group_bundle()).unwrap();
        assert_eq!(reply.raw, "grouped as one step");
        assert_eq!(reply.prompt_tokens, 0);
        assert_eq!(gw.calls(), 1);
        assert_eq!(gw.calls_for(AgentKind::AnalyzerGroup), 1);
    }

    #[test]
    fn matcher_mismatch_names_expected_entry() {
        let gw = Gateway::scripted(vec![entry(AgentKind::FeedbackAction, None, "x")]);
        let err = gw.complete(&group_bundle()).unwrap_err();
        assert!(
            err.to_string().contains("expects feedback_action"),
            "{err}"
        );
        assert_eq!(gw.calls(), 0, "mismatch must not count as a call");
    }

    #[test]
    fn contains_matcher_checks_prompt_text() {
        let gw = Gateway::scripted(vec![entry(
            AgentKind::AnalyzerGroup,
            Some("tap the button '5'"),
            "ok",
        )]);
        assert!(gw.complete(&group_bundle()).is_ok());

        let gw = Gateway::scripted(vec![entry(AgentKind::AnalyzerGroup, Some("absent"), "ok")]);
        let err = gw.complete(&group_bundle()).unwrap_err();
        assert!(err.to_string().contains("does not contain"), "{err}");
    }

    #[test]
    fn exhausted_transcript_is_a_deterministic_error() {
        let gw = Gateway::scripted(vec![]);
        let err = gw.complete(&group_bundle()).unwrap_err();
        assert!(matches!(err, GatewayError::TranscriptExhausted { .. }));
    }

    #[test]
    fn two_identical_runs_yield_identical_sequences() {
        let entries = vec![
            entry(AgentKind::AnalyzerGroup, None, "one"),
            entry(AgentKind::AnalyzerGroup, None, "two"),
        ];
        let run = |entries: Vec<TranscriptEntry>| {
            let gw = Gateway::scripted(entries);
            let a = gw.complete(&group_bundle()).unwrap().raw;
            let b = gw.complete(&group_bundle()).unwrap().raw;
            (a, b)
        };
        assert_eq!(run(entries.clone()), run(entries));
    }

    #[test]
    fn transcript_file_format_round_trips() {
        let doc = br#"[
            {"match": {"agent_kind": "analyzer_group"}, "reply": "grouped"},
            {"match": {"agent_kind": "feedback_action", "contains": "set_text"}, "reply": "ok"}
        ]"#;
        let gw = Gateway::scripted_from_json(doc).unwrap();
        let reply = gw.complete(&group_bundle()).unwrap();
        assert_eq!(reply.raw, "grouped");
    }
}
