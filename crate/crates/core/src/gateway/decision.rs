//! Reply schemas per agent kind, and the structured-reply parser. A reply is
//! chain-of-thought prose followed by a fenced JSON block; only the block is
//! interpreted.

use super::prompt::AgentKind;
use super::VlmReply;
use crate::model::{ActionKind, OracleKind, Selector};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
#[error("reply does not conform to {agent_kind} schema: {message}")]
pub struct ParseError {
    pub agent_kind: AgentKind,
    pub message: String,
    pub raw: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AugmentReply {
    pub functionality: String,
    pub stop_condition: String,
    pub actions: Vec<AugmentItem>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AugmentItem {
    pub index: usize,
    pub description: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct GroupItem {
    pub step_id: u32,
    pub description: String,
    pub action_range: [usize; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyCategory {
    Key,
    Supporting,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ClassifyItem {
    pub step_id: u32,
    pub category: ReplyCategory,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyStepStatus {
    Pending,
    InProgress,
    Done,
    Waived,
}

#[derive(Debug, Clone, Deserialize)]
pub struct StepStatusItem {
    pub step_id: u32,
    pub status: ReplyStepStatus,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CompletenessReply {
    pub steps: Vec<StepStatusItem>,
    pub stop_condition_met: bool,
    pub complete: bool,
    #[serde(default)]
    pub extra_navigation_needed: bool,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ActionGenReply {
    NoAction {
        no_action: bool,
        #[serde(default)]
        reason: String,
    },
    Action {
        #[serde(default)]
        widget_label: Option<u32>,
        action: ActionKind,
        #[serde(default)]
        payload: Option<String>,
        #[serde(default)]
        rationale: String,
    },
}

#[derive(Debug, Clone, Deserialize)]
pub struct FeedbackActionReply {
    pub accept: bool,
    #[serde(default)]
    pub reason: String,
    #[serde(default)]
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FeedbackReflectReply {
    pub misleading_index: Option<u32>,
    #[serde(default)]
    pub reason: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SelectorAttrs {
    #[serde(default)]
    pub resource_id: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub content_desc: Option<String>,
}

impl SelectorAttrs {
    pub fn to_selector(&self) -> Selector {
        Selector {
            node_path: None,
            resource_id: self.resource_id.clone(),
            text: self.text.clone(),
            content_desc: self.content_desc.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct OracleGenReply {
    pub kind: OracleKind,
    pub selector_attrs: SelectorAttrs,
    #[serde(default)]
    pub expected: String,
}

/// Parsed structured decision, one variant per agent kind.
#[derive(Debug, Clone)]
pub enum Decision {
    Augment(AugmentReply),
    Group(Vec<GroupItem>),
    Classify(Vec<ClassifyItem>),
    Completeness(CompletenessReply),
    ActionGen(ActionGenReply),
    FeedbackAction(FeedbackActionReply),
    FeedbackReflect(FeedbackReflectReply),
    OracleGen(OracleGenReply),
}

/// Pull the trailing fenced JSON block out of a reply. A bare JSON reply
/// (no prose, no fences) is accepted as its own block.
pub fn extract_json_block(raw: &str) -> Option<&str> {
    let mut last: Option<&str> = None;
    let mut rest = raw;
    while let Some(open) = rest.find("```") {
        let body_start = open + 3;
        let Some(close_rel) = rest[body_start..].find("```") else {
            break;
        };
        let body = &rest[body_start..body_start + close_rel];
        // Strip an optional language tag on the opening line.
        let body = match body.split_once('\n') {
            Some((first, remainder)) if !first.trim_start().starts_with(['{', '[']) => remainder,
            _ => body,
        };
        last = Some(body.trim());
        rest = &rest[body_start + close_rel + 3..];
    }
    if last.is_some() {
        return last;
    }
    let trimmed = raw.trim();
    (trimmed.starts_with('{') || trimmed.starts_with('[')).then_some(trimmed)
}

fn parse_block<T: serde::de::DeserializeOwned>(
    kind: AgentKind,
    reply: &VlmReply,
) -> Result<T, ParseError> {
    let block = extract_json_block(&reply.raw).ok_or_else(|| ParseError {
        agent_kind: kind,
        message: "no fenced JSON block".to_string(),
        raw: reply.raw.clone(),
    })?;
    serde_json::from_str(block).map_err(|e| ParseError {
        agent_kind: kind,
        message: e.to_string(),
        raw: reply.raw.clone(),
    })
}

/// Parse and schema-check a reply for its agent kind. Chain-of-thought prose
/// before the block is preserved in `reply.raw` but never interpreted.
pub fn parse_structured_reply(reply: &VlmReply, kind: AgentKind) -> Result<Decision, ParseError> {
    let err = |message: &str| ParseError {
        agent_kind: kind,
        message: message.to_string(),
        raw: reply.raw.clone(),
    };
    match kind {
        AgentKind::AnalyzerAugment => Ok(Decision::Augment(parse_block(kind, reply)?)),
        AgentKind::AnalyzerGroup => Ok(Decision::Group(parse_block(kind, reply)?)),
        AgentKind::AnalyzerClassify => Ok(Decision::Classify(parse_block(kind, reply)?)),
        AgentKind::CompletenessChecker => Ok(Decision::Completeness(parse_block(kind, reply)?)),
        AgentKind::ActionGenerator => {
            let parsed: ActionGenReply = parse_block(kind, reply)?;
            if let ActionGenReply::NoAction { no_action, .. } = &parsed {
                if !no_action {
                    return Err(err("no_action must be true when present"));
                }
            }
            Ok(Decision::ActionGen(parsed))
        }
        AgentKind::FeedbackAction => {
            let parsed: FeedbackActionReply = parse_block(kind, reply)?;
            if !parsed.accept && parsed.reason.is_empty() {
                return Err(err("rejection requires a reason"));
            }
            Ok(Decision::FeedbackAction(parsed))
        }
        AgentKind::FeedbackReflect => Ok(Decision::FeedbackReflect(parse_block(kind, reply)?)),
        AgentKind::OracleGenerator => {
            let parsed: OracleGenReply = parse_block(kind, reply)?;
            if parsed.selector_attrs.to_selector().is_empty() {
                return Err(err("selector_attrs must name at least one attribute"));
            }
            Ok(Decision::OracleGen(parsed))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reply(raw: &str) -> VlmReply {
        VlmReply {
            raw: raw.to_string(),
            parsed: None,
            prompt_tokens: 0,
            completion_tokens: 0,
        }
    }

    #[test]
    fn feedback_accept_block_parses() {
        let r = reply("Looking at the pages...\n```json\n{\"accept\": true}\n```\n");
        let d = parse_structured_reply(&r, AgentKind::FeedbackAction).unwrap();
        match d {
            Decision::FeedbackAction(f) => assert!(f.accept),
            other => panic!("wrong decision {other:?}"),
        }
    }

    #[test]
    fn prose_only_reply_is_a_parse_error() {
        let r = reply("I think the action is fine.");
        let err = parse_structured_reply(&r, AgentKind::FeedbackAction).unwrap_err();
        assert!(err.message.contains("no fenced JSON block"));
    }

    #[test]
    fn rejection_without_reason_is_rejected() {
        let r = reply("```json\n{\"accept\": false, \"reason\": \"\"}\n```");
        assert!(parse_structured_reply(&r, AgentKind::FeedbackAction).is_err());
    }

    #[test]
    fn action_generator_block_parses_set_text() {
        let r = reply(
            "Step 1 is pending.\n```json\n{\"widget_label\": 3, \"action\": \"set_text\", \
             \"payload\": \"56.60\", \"rationale\": \"enter bill\"}\n```",
        );
        match parse_structured_reply(&r, AgentKind::ActionGenerator).unwrap() {
            Decision::ActionGen(ActionGenReply::Action {
                widget_label,
                action,
                payload,
                ..
            }) => {
                assert_eq!(widget_label, Some(3));
                assert_eq!(action, ActionKind::SetText);
                assert_eq!(payload.as_deref(), Some("56.60"));
            }
            other => panic!("wrong decision {other:?}"),
        }
    }

    #[test]
    fn missing_required_field_never_accepted() {
        // completeness reply without stop_condition_met
        let r = reply("```json\n{\"steps\": [], \"complete\": false}\n```");
        assert!(parse_structured_reply(&r, AgentKind::CompletenessChecker).is_err());
        // oracle reply without selector attributes
        let r = reply("```json\n{\"kind\": \"exists\", \"selector_attrs\": {}, \"expected\": \"\"}\n```");
        assert!(parse_structured_reply(&r, AgentKind::OracleGenerator).is_err());
    }

    #[test]
    fn last_fenced_block_wins() {
        let r = reply(
            "```json\n{\"accept\": false, \"reason\": \"draft\"}\n```\n\
             Wait, re-checking...\n\
             ```json\n{\"accept\": true}\n```",
        );
        match parse_structured_reply(&r, AgentKind::FeedbackAction).unwrap() {
            Decision::FeedbackAction(f) => assert!(f.accept),
            other => panic!("wrong decision {other:?}"),
        }
    }

    #[test]
    fn bare_json_without_fences_is_accepted() {
        let r = reply("{\"misleading_index\": 2, \"reason\": \"wrong page\"}");
        match parse_structured_reply(&r, AgentKind::FeedbackReflect).unwrap() {
            Decision::FeedbackReflect(f) => assert_eq!(f.misleading_index, Some(2)),
            other => panic!("wrong decision {other:?}"),
        }
    }
}
