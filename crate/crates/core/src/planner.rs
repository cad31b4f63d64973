//! Online-phase decision making: completeness checking (CC), action
//! generation (AG), and oracle generation (OG). The planner owns the
//! exploration bookkeeping for one migration task.

use crate::analyzer::TestSkeleton;
use crate::device::annotate::AnnotatedPage;
use crate::device::{describe_page, prune_dom};
use crate::gateway::decision::{parse_structured_reply, ActionGenReply, Decision, ReplyStepStatus};
use crate::gateway::{
    assemble_prompt, query, AgentKind, Gateway, PromptContext, PromptImage, QueryError,
};
use crate::model::{Action, ActionKind, GuiPage, OracleEvent, OracleKind, Selector, Widget};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum PlannerError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error("planner precondition: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Pending,
    InProgress,
    Done,
    Waived,
}

impl StepStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, StepStatus::Done | StepStatus::Waived)
    }
}

impl From<ReplyStepStatus> for StepStatus {
    fn from(s: ReplyStepStatus) -> StepStatus {
        match s {
            ReplyStepStatus::Pending => StepStatus::Pending,
            ReplyStepStatus::InProgress => StepStatus::InProgress,
            ReplyStepStatus::Done => StepStatus::Done,
            ReplyStepStatus::Waived => StepStatus::Waived,
        }
    }
}

/// One accepted action in the target test under construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcceptedStep {
    pub action: Action,
    pub description: String,
    pub outcome_summary: String,
    pub after_page_seq: u64,
}

/// Live loop bookkeeping for one migration task.
pub struct ExplorationState {
    pub current: AnnotatedPage,
    pub pruned: Option<Widget>,
    pub history: Vec<AcceptedStep>,
    pub step_status: BTreeMap<u32, StepStatus>,
    /// History length at the moment a step reached a terminal status; used
    /// by truncation to revert conservatively.
    pub status_granted_at: BTreeMap<u32, usize>,
    pub iteration: u32,
    pub consecutive_rejections: u32,
}

impl ExplorationState {
    pub fn new(skeleton: &TestSkeleton, first_page: &GuiPage, prune_budget: usize) -> ExplorationState {
        let pruned = prune_dom(&first_page.root, prune_budget);
        let current = crate::device::annotate_screenshot(first_page, pruned.as_ref());
        ExplorationState {
            current,
            pruned,
            history: Vec::new(),
            step_status: skeleton
                .key_steps
                .iter()
                .map(|s| (s.step_id, StepStatus::Pending))
                .collect(),
            status_granted_at: BTreeMap::new(),
            iteration: 0,
            consecutive_rejections: 0,
        }
    }

    pub fn observe_page(&mut self, page: &GuiPage, prune_budget: usize) {
        self.pruned = prune_dom(&page.root, prune_budget);
        self.current = crate::device::annotate_screenshot(page, self.pruned.as_ref());
    }

    pub fn accepted_actions(&self) -> Vec<Action> {
        self.history.iter().map(|h| h.action.clone()).collect()
    }

    pub fn render_history(&self) -> String {
        if self.history.is_empty() {
            return "No actions accepted yet.".to_string();
        }
        let mut out = String::from("Accepted actions so far:\n");
        for (i, h) in self.history.iter().enumerate() {
            out.push_str(&format!(
                "  {}. {} — {}\n",
                i + 1,
                h.description,
                h.outcome_summary
            ));
        }
        out
    }

    /// Apply a verdict's merged statuses, remembering when each step turned
    /// terminal.
    pub fn apply_step_statuses(&mut self, merged: &BTreeMap<u32, StepStatus>) {
        for (id, status) in merged {
            let prev = self.step_status.insert(*id, *status);
            if status.is_terminal() && prev.map_or(true, |p| !p.is_terminal()) {
                self.status_granted_at.insert(*id, self.history.len());
            }
        }
    }
}

/// Verdict of one completeness check, statuses already merged monotonically.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletenessVerdict {
    pub complete: bool,
    pub stop_condition_met: bool,
    pub extra_navigation_needed: bool,
    pub note: String,
    pub step_status: BTreeMap<u32, StepStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateSource {
    Vlm,
    FeedbackSuggestion,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateAction {
    pub action: Action,
    pub rationale: String,
    pub source: CandidateSource,
}

/// Either a concrete next action or a stuck signal (the generator declined).
#[derive(Debug, Clone)]
pub enum ActionProposal {
    Action(CandidateAction),
    Stuck { reason: String },
}

#[derive(Debug, Clone, Copy)]
pub struct PlannerOptions {
    pub no_vision: bool,
    pub re_query_budget: u32,
    pub prune_budget: usize,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        PlannerOptions {
            no_vision: false,
            re_query_budget: 2,
            prune_budget: 60,
        }
    }
}

fn render_statuses(skeleton: &TestSkeleton, state: &ExplorationState) -> String {
    let mut out = String::from("Key step status:\n");
    for step in &skeleton.key_steps {
        let status = state
            .step_status
            .get(&step.step_id)
            .copied()
            .unwrap_or(StepStatus::Pending);
        out.push_str(&format!(
            "  step {}: {} — {:?}\n",
            step.step_id, step.description, status
        ));
    }
    out
}

fn source_final_context(skeleton: &TestSkeleton, opts: &PlannerOptions) -> String {
    let pruned = prune_dom(&skeleton.source_final_page.root, opts.prune_budget);
    format!(
        "Source app final page (activity {:?}):\n{}",
        skeleton.source_final_page.activity,
        describe_page(pruned.as_ref())
    )
}

/// One CC call. The verdict invariant is enforced, not trusted: a reply
/// claiming completeness while a step is pending and non-waived is rejected
/// and re-queried; waivers require a per-step note.
pub fn check_completeness(
    gateway: &Gateway,
    skeleton: &TestSkeleton,
    state: &ExplorationState,
    opts: &PlannerOptions,
) -> Result<CompletenessVerdict, PlannerError> {
    let target_context = format!(
        "Current target page (activity {:?}):\n{}",
        state.current.base.activity,
        describe_page(state.pruned.as_ref())
    );
    let ctx = PromptContext {
        skeleton: Some(format!("{}\n{}", skeleton.render(), render_statuses(skeleton, state))),
        source_context: Some(source_final_context(skeleton, opts)),
        target_context: Some(target_context),
        event_history: Some(state.render_history()),
        images: vec![
            PromptImage {
                label: "source:final".to_string(),
                bytes: skeleton.source_final_page.screenshot.data.clone(),
            },
            PromptImage {
                label: "target:current".to_string(),
                bytes: state.current.base.screenshot.data.clone(),
            },
        ],
        no_vision: opts.no_vision,
    };
    let bundle = assemble_prompt(AgentKind::CompletenessChecker, &ctx)?;
    let known: Vec<u32> = skeleton.key_steps.iter().map(|s| s.step_id).collect();

    let verdict = query(gateway, &bundle, opts.re_query_budget, |reply| {
        let Decision::Completeness(parsed) =
            parse_structured_reply(reply, AgentKind::CompletenessChecker).map_err(|e| e.to_string())?
        else {
            unreachable!()
        };
        // Merge monotonically: terminal statuses never revert.
        let mut merged = state.step_status.clone();
        for item in &parsed.steps {
            if !known.contains(&item.step_id) {
                return Err(format!("unknown step_id {}", item.step_id));
            }
            if item.status == ReplyStepStatus::Waived && item.note.is_empty() {
                return Err(format!(
                    "step {} waived without a necessity-check note",
                    item.step_id
                ));
            }
            let next: StepStatus = item.status.into();
            let entry = merged.entry(item.step_id).or_insert(StepStatus::Pending);
            if !entry.is_terminal() {
                *entry = next;
            }
        }
        if parsed.complete {
            if let Some((id, _)) = merged.iter().find(|(_, s)| !s.is_terminal()) {
                return Err(format!(
                    "reply claims complete while step {id} is pending and not waived"
                ));
            }
            if !parsed.stop_condition_met {
                return Err("reply claims complete without the stop condition met".to_string());
            }
        }
        Ok(CompletenessVerdict {
            complete: parsed.complete,
            stop_condition_met: parsed.stop_condition_met,
            extra_navigation_needed: parsed.extra_navigation_needed,
            note: parsed.note,
            step_status: merged,
        })
    })?;
    Ok(verdict)
}

/// One AG call. The reply's widget label is resolved through the current
/// annotation map into a node-path selector.
pub fn generate_action(
    gateway: &Gateway,
    skeleton: &TestSkeleton,
    state: &ExplorationState,
    rejection_notes: &[String],
    anchor_hint: bool,
    opts: &PlannerOptions,
) -> Result<ActionProposal, PlannerError> {
    let Some(pruned) = state.pruned.as_ref() else {
        return Err(PlannerError::Precondition(
            "current page pruned to nothing".to_string(),
        ));
    };
    let mut target_context = format!(
        "Current target page (activity {:?}):\n{}\n\nPruned DOM tree:\n{}",
        state.current.base.activity,
        describe_page(Some(pruned)),
        crate::device::annotate::render_dom(pruned, &state.current.index_map),
    );
    if anchor_hint {
        target_context.push_str(
            "\n\nThe stop condition is not met on this page; navigate toward the page where the \
             functionality's result is shown.",
        );
    }
    let mut history = format!(
        "{}\n{}",
        state.render_history(),
        render_statuses(skeleton, state)
    );
    if !rejection_notes.is_empty() {
        history.push_str("\nRejected attempts this iteration:\n");
        for note in rejection_notes {
            history.push_str(&format!("  - {note}\n"));
        }
    }
    let ctx = PromptContext {
        skeleton: Some(skeleton.render()),
        target_context: Some(target_context),
        event_history: Some(history),
        images: vec![PromptImage {
            label: "target:annotated".to_string(),
            bytes: state.current.overlay.clone(),
        }],
        no_vision: opts.no_vision,
        ..Default::default()
    };
    let bundle = assemble_prompt(AgentKind::ActionGenerator, &ctx)?;

    let proposal = query(gateway, &bundle, opts.re_query_budget, |reply| {
        let Decision::ActionGen(parsed) =
            parse_structured_reply(reply, AgentKind::ActionGenerator).map_err(|e| e.to_string())?
        else {
            unreachable!()
        };
        match parsed {
            ActionGenReply::NoAction { reason, .. } => Ok(ActionProposal::Stuck { reason }),
            ActionGenReply::Action {
                widget_label,
                action,
                payload,
                rationale,
            } => {
                let selector = match widget_label {
                    Some(label) => match state.current.index_map.get(&label) {
                        Some(path) => Some(Selector::by_path(path.clone())),
                        None => {
                            return Err(format!(
                                "widget_label {label} is not in the annotation map (1..={})",
                                state.current.index_map.len()
                            ))
                        }
                    },
                    None => None,
                };
                if action.needs_selector() && selector.is_none() {
                    return Err(format!("{action} requires widget_label"));
                }
                if matches!(action, ActionKind::SetText) && payload.is_none() {
                    return Err("set_text requires payload".to_string());
                }
                if matches!(action, ActionKind::KeyEvent | ActionKind::Wait) && payload.is_none() {
                    return Err(format!("{action} requires payload"));
                }
                let candidate = Action {
                    kind: action,
                    selector: if action.needs_selector() { selector } else { None },
                    payload,
                };
                Ok(ActionProposal::Action(CandidateAction {
                    action: candidate,
                    rationale,
                    source: CandidateSource::Vlm,
                }))
            }
        }
    })?;
    Ok(proposal)
}

/// Which route produced the closing oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OraclePath {
    Rule,
    Vlm,
}

/// Selector anchored on a widget's most stable attribute.
fn anchor_selector(w: &Widget) -> Option<Selector> {
    if !w.resource_id.is_empty() {
        Some(Selector::by_resource_id(w.resource_id.clone()))
    } else if !w.text.is_empty() {
        Some(Selector::by_text(w.text.clone()))
    } else if !w.content_desc.is_empty() {
        Some(Selector::by_content_desc(w.content_desc.clone()))
    } else {
        None
    }
}

/// Identity match for the rule path: exact equality on the oracle-relevant
/// attribute after trimming surrounding whitespace, case-sensitive.
fn rule_path_anchor(source_oracle: &OracleEvent, page: &GuiPage) -> Option<(OracleEvent, Vec<usize>)> {
    match source_oracle.kind {
        OracleKind::TextEquals | OracleKind::TextContains => {
            let wanted = source_oracle.expected.trim();
            page.root
                .iter_preorder()
                .filter(|w| w.text.trim() == wanted)
                .find_map(|w| {
                    anchor_selector(w).map(|selector| {
                        (
                            OracleEvent {
                                kind: OracleKind::TextEquals,
                                selector,
                                expected: w.text.clone(),
                            },
                            w.node_path.clone(),
                        )
                    })
                })
        }
        OracleKind::Exists => {
            let id = source_oracle.selector.resource_id.as_deref().unwrap_or("");
            let desc = source_oracle.selector.content_desc.as_deref().unwrap_or("");
            page.root
                .iter_preorder()
                .filter(|w| {
                    (!id.is_empty() && w.resource_id == id)
                        || (!desc.is_empty() && w.content_desc == desc)
                })
                .find_map(|w| {
                    anchor_selector(w).map(|selector| {
                        (
                            OracleEvent {
                                kind: OracleKind::Exists,
                                selector,
                                expected: String::new(),
                            },
                            w.node_path.clone(),
                        )
                    })
                })
        }
    }
}

/// Joint rule/VLM strategy. The rule path searches the final page for a
/// widget identical to the source oracle's subject and costs zero gateway
/// calls; otherwise one oracle-generator call produces the event, which must
/// resolve on the final page.
pub fn generate_oracle(
    gateway: &Gateway,
    skeleton: &TestSkeleton,
    source_oracle: &OracleEvent,
    recorded_pages: &[GuiPage],
    final_page: &GuiPage,
    opts: &PlannerOptions,
) -> Result<(OracleEvent, OraclePath), PlannerError> {
    if let Some((oracle, _)) = rule_path_anchor(source_oracle, final_page) {
        return Ok((oracle, OraclePath::Rule));
    }

    let pruned = prune_dom(&final_page.root, opts.prune_budget);
    let mut target_context = format!(
        "Final target page (activity {:?}):\n{}\n\nPruned DOM tree:\n{}",
        final_page.activity,
        describe_page(pruned.as_ref()),
        pruned
            .as_ref()
            .map(|p| crate::device::annotate::render_dom(p, &BTreeMap::new()))
            .unwrap_or_default(),
    );
    // A rule-path near miss on an earlier page is a useful hint.
    if recorded_pages
        .iter()
        .rev()
        .skip(1)
        .any(|p| rule_path_anchor(source_oracle, p).is_some())
    {
        target_context.push_str(
            "\nNote: an exact match for the source oracle's subject appeared on an earlier page \
             but not on the final one.",
        );
    }
    let source_context = format!(
        "{}\nSource terminal oracle: {} {} expected={:?}",
        source_final_context(skeleton, opts),
        source_oracle.kind,
        source_oracle.selector.describe(),
        source_oracle.expected,
    );
    let ctx = PromptContext {
        skeleton: Some(skeleton.render()),
        source_context: Some(source_context),
        target_context: Some(target_context),
        images: vec![
            PromptImage {
                label: "source:final".to_string(),
                bytes: skeleton.source_final_page.screenshot.data.clone(),
            },
            PromptImage {
                label: "target:current".to_string(),
                bytes: final_page.screenshot.data.clone(),
            },
        ],
        no_vision: opts.no_vision,
        ..Default::default()
    };
    let bundle = assemble_prompt(AgentKind::OracleGenerator, &ctx)?;

    let oracle = query(gateway, &bundle, opts.re_query_budget, |reply| {
        let Decision::OracleGen(parsed) =
            parse_structured_reply(reply, AgentKind::OracleGenerator).map_err(|e| e.to_string())?
        else {
            unreachable!()
        };
        let oracle = OracleEvent {
            kind: parsed.kind,
            selector: parsed.selector_attrs.to_selector(),
            expected: parsed.expected,
        };
        if matches!(oracle.kind, OracleKind::TextEquals | OracleKind::TextContains)
            && oracle.expected.is_empty()
        {
            return Err(format!("{} requires non-empty expected", oracle.kind));
        }
        if oracle.selector.resolve(&final_page.root).is_none() {
            return Err(format!(
                "selector {} does not resolve on the final page",
                oracle.selector.describe()
            ));
        }
        Ok(oracle)
    })?;
    Ok((oracle, OraclePath::Vlm))
}
