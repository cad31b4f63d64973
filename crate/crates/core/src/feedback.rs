//! Active feedback at two granularities: per-action acceptance, and
//! test-level reflection that can truncate the accepted history and replay
//! the remaining prefix.

use crate::analyzer::TestSkeleton;
use crate::device::{describe_page, prune_dom, DeviceError, DeviceSession, ExecutionOutcome};
use crate::gateway::decision::{parse_structured_reply, Decision};
use crate::gateway::{assemble_prompt, query, AgentKind, Gateway, PromptContext, PromptImage, QueryError};
use crate::model::GuiPage;
use crate::planner::{ExplorationState, PlannerOptions, StepStatus};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum FeedbackError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error("truncation replay failed: {0}")]
    Replay(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

pub const REASON_NOT_EXECUTABLE: &str = "not executable";
pub const REASON_FEEDBACK_UNAVAILABLE: &str = "feedback unavailable";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackVerdict {
    pub accepted: bool,
    pub reason: String,
    pub suggestions: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reflection {
    /// 1-based position in the accepted history, when a misleading action
    /// was found.
    pub misleading_index: Option<usize>,
    pub reason: String,
}

fn page_summary(page: &GuiPage, prune_budget: usize) -> String {
    let pruned = prune_dom(&page.root, prune_budget);
    format!(
        "activity {:?}\n{}",
        page.activity,
        describe_page(pruned.as_ref())
    )
}

/// Assess one executed action. Non-executable outcomes are rejected without
/// a gateway call; gateway or parse failures past the re-query budget reject
/// the action rather than aborting the migration.
pub fn assess_action(
    gateway: &Gateway,
    skeleton: &TestSkeleton,
    state: &ExplorationState,
    action_description: &str,
    outcome: &ExecutionOutcome,
    opts: &PlannerOptions,
) -> FeedbackVerdict {
    if !outcome.executed {
        return FeedbackVerdict {
            accepted: false,
            reason: format!("{REASON_NOT_EXECUTABLE}: {}", outcome.failure_reason),
            suggestions: Vec::new(),
        };
    }
    let target_context = format!(
        "Action under assessment: {action_description}\n\nPage before the action:\n{}\n\nPage after the action:\n{}",
        page_summary(&outcome.before, opts.prune_budget),
        page_summary(&outcome.after, opts.prune_budget),
    );
    let ctx = PromptContext {
        skeleton: Some(skeleton.render()),
        target_context: Some(target_context),
        event_history: Some(state.render_history()),
        images: vec![
            PromptImage {
                label: "target:before".to_string(),
                bytes: outcome.before.screenshot.data.clone(),
            },
            PromptImage {
                label: "target:after".to_string(),
                bytes: outcome.after.screenshot.data.clone(),
            },
        ],
        no_vision: opts.no_vision,
        ..Default::default()
    };
    let bundle = match assemble_prompt(AgentKind::FeedbackAction, &ctx) {
        Ok(b) => b,
        Err(e) => {
            return FeedbackVerdict {
                accepted: false,
                reason: format!("{REASON_FEEDBACK_UNAVAILABLE}: {e}"),
                suggestions: Vec::new(),
            }
        }
    };
    let result = query(gateway, &bundle, opts.re_query_budget, |reply| {
        let Decision::FeedbackAction(parsed) =
            parse_structured_reply(reply, AgentKind::FeedbackAction).map_err(|e| e.to_string())?
        else {
            unreachable!()
        };
        Ok(FeedbackVerdict {
            accepted: parsed.accept,
            reason: parsed.reason,
            suggestions: parsed.suggestions,
        })
    });
    match result {
        Ok(verdict) => verdict,
        Err(e) => FeedbackVerdict {
            accepted: false,
            reason: format!("{REASON_FEEDBACK_UNAVAILABLE}: {e}"),
            suggestions: Vec::new(),
        },
    }
}

/// Test-level reflection over the accepted history. `dialogs` pairs up with
/// the history entries (before/after page of each accepted action). An empty
/// history reflects to none without a gateway call.
pub fn reflect_test(
    gateway: &Gateway,
    skeleton: &TestSkeleton,
    state: &ExplorationState,
    dialogs: &[(GuiPage, GuiPage)],
    opts: &PlannerOptions,
) -> Result<Reflection, FeedbackError> {
    if state.history.is_empty() {
        return Ok(Reflection {
            misleading_index: None,
            reason: "nothing to truncate".to_string(),
        });
    }
    let mut history = state.render_history();
    history.push_str("\nExecution dialog:\n");
    for (i, (before, after)) in dialogs.iter().enumerate() {
        history.push_str(&format!(
            "--- action {} ---\nbefore: {}\nafter: {}\n",
            i + 1,
            page_summary(before, opts.prune_budget),
            page_summary(after, opts.prune_budget),
        ));
    }
    let mut images = Vec::new();
    for (i, (before, after)) in dialogs.iter().enumerate() {
        images.push(PromptImage {
            label: format!("target:before:{}", i + 1),
            bytes: before.screenshot.data.clone(),
        });
        images.push(PromptImage {
            label: format!("target:after:{}", i + 1),
            bytes: after.screenshot.data.clone(),
        });
    }
    let ctx = PromptContext {
        skeleton: Some(skeleton.render()),
        event_history: Some(history),
        images,
        no_vision: opts.no_vision,
        ..Default::default()
    };
    let bundle = assemble_prompt(AgentKind::FeedbackReflect, &ctx)?;
    let history_len = state.history.len();
    let reflection = query(gateway, &bundle, opts.re_query_budget, |reply| {
        let Decision::FeedbackReflect(parsed) =
            parse_structured_reply(reply, AgentKind::FeedbackReflect).map_err(|e| e.to_string())?
        else {
            unreachable!()
        };
        if let Some(idx) = parsed.misleading_index {
            if idx == 0 || idx as usize > history_len {
                return Err(format!(
                    "misleading_index {idx} out of range 1..={history_len}"
                ));
            }
        }
        Ok(Reflection {
            misleading_index: parsed.misleading_index.map(|i| i as usize),
            reason: parsed.reason,
        })
    })?;
    Ok(reflection)
}

/// Cut the accepted history strictly before the misleading action, reset the
/// device, and replay the surviving prefix. Steps whose terminal status was
/// granted after the cut revert to pending.
pub fn apply_truncation(
    state: &mut ExplorationState,
    reflection: &Reflection,
    session: &mut DeviceSession,
) -> Result<(), FeedbackError> {
    let index = reflection
        .misleading_index
        .expect("apply_truncation requires a misleading index");
    let keep = index - 1;
    state.history.truncate(keep);
    let actions = state.accepted_actions();
    let outcomes = session.replay_prefix(&actions)?;
    if outcomes.len() != actions.len() || outcomes.iter().any(|o| !o.executed) {
        let reason = outcomes
            .iter()
            .find(|o| !o.executed)
            .map(|o| o.failure_reason.clone())
            .unwrap_or_else(|| "prefix incomplete".to_string());
        return Err(FeedbackError::Replay(reason));
    }
    for (o, h) in outcomes.iter().zip(state.history.iter_mut()) {
        h.after_page_seq = o.after.sequence_no;
    }
    state.consecutive_rejections = 0;
    let granted: Vec<(u32, usize)> = state
        .status_granted_at
        .iter()
        .map(|(k, v)| (*k, *v))
        .collect();
    for (step_id, at) in granted {
        if at > keep {
            state.step_status.insert(step_id, StepStatus::Pending);
            state.status_granted_at.remove(&step_id);
        }
    }
    Ok(())
}
