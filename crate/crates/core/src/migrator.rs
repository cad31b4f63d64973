//! End-to-end orchestration of one migration task: offline analysis, the
//! iterate-check-act-assess loop, then oracle emission. Produces a
//! MigrationResult with a full causal trace.

use crate::analyzer::{build_skeleton, AnalyzerOptions, TestSkeleton};
use crate::device::{DeviceSession, ExecutionOutcome};
use crate::feedback::{apply_truncation, assess_action, reflect_test, FeedbackVerdict, REASON_NOT_EXECUTABLE};
use crate::gateway::Gateway;
use crate::model::{
    Action, Event, GuiPage, MigrationResult, MigrationStatus, TestCase, TraceRecord,
    VisualExecutionLog,
};
use crate::planner::{
    check_completeness, generate_action, generate_oracle, AcceptedStep, ActionProposal,
    ExplorationState, PlannerOptions,
};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::time::Instant;

/// Which gateway backend a run should construct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GatewaySelector {
    Scripted { path: String },
    Remote,
}

/// Which device backend a run should construct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DeviceSelector {
    Sim { path: String },
    Live { url: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MigrationConfig {
    pub max_iterations: u32,
    pub max_rejections_per_iteration: u32,
    pub reflection_threshold: u32,
    pub prune_budget: usize,
    pub re_query_budget: u32,
    pub no_vision: bool,
    pub no_analyzer: bool,
    pub no_feedback: bool,
    pub model: String,
    pub gateway: Option<GatewaySelector>,
    pub device: Option<DeviceSelector>,
    pub seed: u64,
}

impl Default for MigrationConfig {
    fn default() -> Self {
        MigrationConfig {
            max_iterations: 25,
            max_rejections_per_iteration: 5,
            reflection_threshold: 3,
            prune_budget: 60,
            re_query_budget: 2,
            no_vision: false,
            no_analyzer: false,
            no_feedback: false,
            model: "gpt-4o".to_string(),
            gateway: None,
            device: None,
            seed: 0,
        }
    }
}

impl MigrationConfig {
    pub fn planner_options(&self) -> PlannerOptions {
        PlannerOptions {
            no_vision: self.no_vision,
            re_query_budget: self.re_query_budget,
            prune_budget: self.prune_budget,
        }
    }

    pub fn analyzer_options(&self) -> AnalyzerOptions {
        AnalyzerOptions {
            no_vision: self.no_vision,
            degenerate: self.no_analyzer,
            re_query_budget: self.re_query_budget,
        }
    }
}

/// Run clock: wall time for live runs, a logical tick count for scripted
/// ones so traces and reports reproduce byte-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    System,
    Logical,
}

const MS_PER_GATEWAY_CALL: u64 = 1000;
const MS_PER_ACTION: u64 = 500;

struct Tracer<'a> {
    records: Vec<TraceRecord>,
    mode: ClockMode,
    start: Instant,
    gateway: &'a Gateway,
    actions_executed: u64,
}

impl<'a> Tracer<'a> {
    fn new(mode: ClockMode, gateway: &'a Gateway) -> Tracer<'a> {
        Tracer {
            records: Vec::new(),
            mode,
            start: Instant::now(),
            gateway,
            actions_executed: 0,
        }
    }

    fn now_ms(&self) -> u64 {
        match self.mode {
            ClockMode::System => self.start.elapsed().as_millis() as u64,
            ClockMode::Logical => {
                self.gateway.calls() * MS_PER_GATEWAY_CALL + self.actions_executed * MS_PER_ACTION
            }
        }
    }

    fn record(&mut self, kind: &str, payload: serde_json::Value) {
        self.records.push(TraceRecord {
            ts_ms: self.now_ms(),
            kind: kind.to_string(),
            payload,
        });
    }

    /// Pull pending gateway call records into the trace, in causal order.
    fn drain_gateway(&mut self) {
        for call in self.gateway.drain_log() {
            self.record(
                "gateway_call",
                json!({
                    "agent_kind": call.agent_kind.as_str(),
                    "sections": call.sections,
                    "image_labels": call.image_labels,
                    "reply_raw": call.reply_raw,
                }),
            );
        }
    }
}

fn describe_action_on_page(action: &Action, page: &GuiPage) -> String {
    let target = action
        .selector
        .as_ref()
        .and_then(|sel| sel.resolve(&page.root))
        .map(|w| {
            let label = if w.text.is_empty() { &w.content_desc } else { &w.text };
            format!(" on {} '{}'", w.class_name.rsplit('.').next().unwrap_or(""), label)
        })
        .unwrap_or_default();
    let payload = action
        .payload
        .as_ref()
        .map(|p| format!(" {p:?}"))
        .unwrap_or_default();
    format!("{}{}{}", action.kind, payload, target)
}

fn outcome_summary(outcome: &ExecutionOutcome) -> String {
    if !outcome.executed {
        format!("not executed ({})", outcome.failure_reason)
    } else if outcome.before.root == outcome.after.root {
        "executed; page unchanged".to_string()
    } else {
        "executed; page changed".to_string()
    }
}

struct RunState<'a> {
    session: &'a mut DeviceSession,
    recorded_pages: Vec<GuiPage>,
    dialogs: Vec<(GuiPage, GuiPage)>,
}

enum LoopExit {
    Completed,
    BudgetExhausted(String),
    Error(String),
}

/// Migrate one source test onto one target session. Errors surface as
/// `status = error` results carrying the trace so far; the call itself does
/// not fail.
pub fn migrate(
    source: &TestCase,
    log: &VisualExecutionLog,
    session: &mut DeviceSession,
    gateway: &Gateway,
    cfg: &MigrationConfig,
) -> MigrationResult {
    let clock = match cfg.gateway {
        Some(GatewaySelector::Remote) => ClockMode::System,
        _ => ClockMode::Logical,
    };
    let mut tracer = Tracer::new(clock, gateway);
    tracer.record(
        "run_config",
        json!({
            "app_id": session.app_id(),
            "functionality_id": source.functionality_id,
            "max_iterations": cfg.max_iterations,
            "max_rejections_per_iteration": cfg.max_rejections_per_iteration,
            "reflection_threshold": cfg.reflection_threshold,
            "prune_budget": cfg.prune_budget,
            "re_query_budget": cfg.re_query_budget,
            "no_vision": cfg.no_vision,
            "no_analyzer": cfg.no_analyzer,
            "no_feedback": cfg.no_feedback,
            "seed": cfg.seed,
            "clock": clock,
        }),
    );

    let mut run = RunState {
        session,
        recorded_pages: Vec::new(),
        dialogs: Vec::new(),
    };

    let skeleton = match build_skeleton(gateway, source, log, &cfg.analyzer_options()) {
        Ok(s) => s,
        Err(e) => {
            tracer.drain_gateway();
            tracer.record("error", json!({"stage": "analysis", "message": e.to_string()}));
            return finish(
                source,
                run.session,
                gateway,
                tracer,
                Vec::new(),
                None,
                MigrationStatus::Error,
                Vec::new(),
            );
        }
    };
    tracer.drain_gateway();
    tracer.record(
        "skeleton",
        json!({
            "functionality": skeleton.target_functionality,
            "key_steps": skeleton.key_steps.iter().map(|s| json!({
                "step_id": s.step_id,
                "description": s.description,
                "action_range": [s.action_range.0, s.action_range.1],
            })).collect::<Vec<_>>(),
            "stop_condition": skeleton.stop_condition,
            "stop_condition_draft": skeleton.stop_condition_draft,
        }),
    );

    let first_page = match run.session.capture_page() {
        Ok(p) => p,
        Err(e) => {
            tracer.record("error", json!({"stage": "capture", "message": e.to_string()}));
            return finish(
                source,
                run.session,
                gateway,
                tracer,
                Vec::new(),
                None,
                MigrationStatus::Error,
                Vec::new(),
            );
        }
    };
    run.recorded_pages.push(first_page.clone());
    let mut state = ExplorationState::new(&skeleton, &first_page, cfg.prune_budget);

    let (exit, oracle) = explore(&skeleton, &mut state, &mut run, gateway, cfg, &mut tracer, source);

    let status = match exit {
        LoopExit::Completed => MigrationStatus::Completed,
        LoopExit::BudgetExhausted(why) => {
            tracer.record("budget_exhausted", json!({"reason": why}));
            MigrationStatus::BudgetExhausted
        }
        LoopExit::Error(message) => {
            tracer.record("error", json!({"stage": "exploration", "message": message}));
            MigrationStatus::Error
        }
    };
    let history = state.history.clone();
    finish(
        source,
        run.session,
        gateway,
        tracer,
        history,
        oracle,
        status,
        run.recorded_pages,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish(
    source: &TestCase,
    session: &DeviceSession,
    gateway: &Gateway,
    mut tracer: Tracer<'_>,
    history: Vec<AcceptedStep>,
    oracle: Option<crate::model::OracleEvent>,
    status: MigrationStatus,
    recorded_pages: Vec<GuiPage>,
) -> MigrationResult {
    let mut events: Vec<Event> = history.into_iter().map(|h| Event::Action(h.action)).collect();
    if let Some(o) = oracle {
        events.push(Event::Oracle(o));
    }
    let generated = TestCase {
        app_id: session.app_id().to_string(),
        category: source.category.clone(),
        functionality_id: source.functionality_id.clone(),
        events,
    };
    let wall_time_secs = tracer.now_ms() as f64 / 1000.0;
    tracer.record(
        "result",
        json!({
            "status": status,
            "wall_time_secs": wall_time_secs,
            "gateway_calls": gateway.calls(),
            "generated_events": generated.events.len(),
        }),
    );
    MigrationResult {
        generated,
        status,
        trace: tracer.records,
        recorded_pages,
        wall_time_secs,
        gateway_calls: gateway.calls(),
    }
}

#[allow(clippy::too_many_arguments)]
fn explore(
    skeleton: &TestSkeleton,
    state: &mut ExplorationState,
    run: &mut RunState<'_>,
    gateway: &Gateway,
    cfg: &MigrationConfig,
    tracer: &mut Tracer<'_>,
    source: &TestCase,
) -> (LoopExit, Option<crate::model::OracleEvent>) {
    let opts = cfg.planner_options();
    let source_oracle = match source.terminal_oracle() {
        Some(o) => o.clone(),
        None => return (LoopExit::Error("source test has no terminal oracle".into()), None),
    };

    for iteration in 1..=cfg.max_iterations {
        state.iteration = iteration;
        state.consecutive_rejections = 0;
        let mut reflection_none_count = 0u32;

        if iteration > 1 {
            match run.session.capture_page() {
                Ok(page) => {
                    state.observe_page(&page, cfg.prune_budget);
                    run.recorded_pages.push(page);
                }
                Err(e) => return (LoopExit::Error(e.to_string()), None),
            }
        }
        tracer.record(
            "iteration_start",
            json!({"iteration": iteration, "history_len": state.history.len()}),
        );

        let verdict = match check_completeness(gateway, skeleton, state, &opts) {
            Ok(v) => v,
            Err(e) => {
                tracer.drain_gateway();
                return (LoopExit::Error(e.to_string()), None);
            }
        };
        tracer.drain_gateway();
        state.apply_step_statuses(&verdict.step_status);
        tracer.record(
            "completeness_verdict",
            json!({
                "complete": verdict.complete,
                "stop_condition_met": verdict.stop_condition_met,
                "extra_navigation_needed": verdict.extra_navigation_needed,
                "note": verdict.note,
                "step_status": verdict.step_status,
            }),
        );

        if verdict.complete {
            let final_page = &state.current.base;
            match generate_oracle(
                gateway,
                skeleton,
                &source_oracle,
                &run.recorded_pages,
                final_page,
                &opts,
            ) {
                Ok((oracle, path)) => {
                    tracer.drain_gateway();
                    tracer.record(
                        "oracle_emitted",
                        json!({
                            "path": path,
                            "kind": oracle.kind.to_string(),
                            "selector": oracle.selector,
                            "expected": oracle.expected,
                        }),
                    );
                    return (LoopExit::Completed, Some(oracle));
                }
                Err(e) => {
                    tracer.drain_gateway();
                    return (LoopExit::Error(e.to_string()), None);
                }
            }
        }

        // Action attempts within this iteration.
        let mut rejection_notes: Vec<String> = Vec::new();
        let mut attempts = 0u32;
        'inner: loop {
            if attempts > cfg.max_rejections_per_iteration {
                break 'inner; // iteration exhausted, re-check completeness
            }
            let proposal = match generate_action(
                gateway,
                skeleton,
                state,
                &rejection_notes,
                verdict.extra_navigation_needed,
                &opts,
            ) {
                Ok(p) => p,
                Err(e) => {
                    tracer.drain_gateway();
                    return (LoopExit::Error(e.to_string()), None);
                }
            };
            tracer.drain_gateway();

            let candidate = match proposal {
                ActionProposal::Stuck { reason } => {
                    tracer.record("generator_stuck", json!({"reason": reason}));
                    match run_reflection(skeleton, state, run, gateway, cfg, tracer) {
                        Ok(true) => break 'inner, // truncated, restart iteration
                        Ok(false) => {
                            reflection_none_count += 1;
                            if reflection_none_count >= 2 {
                                return (
                                    LoopExit::BudgetExhausted(
                                        "reflection found nothing to truncate twice".into(),
                                    ),
                                    None,
                                );
                            }
                            rejection_notes.push(format!("generator declined: {reason}"));
                            attempts += 1;
                            continue 'inner;
                        }
                        Err(e) => return (LoopExit::Error(e), None),
                    }
                }
                ActionProposal::Action(c) => c,
            };
            tracer.record(
                "candidate_action",
                json!({
                    "action": candidate.action,
                    "rationale": candidate.rationale,
                    "source": candidate.source,
                }),
            );

            let outcome = match run.session.execute_action(&candidate.action) {
                Ok(o) => o,
                Err(e) => return (LoopExit::Error(e.to_string()), None),
            };
            tracer.actions_executed += 1;
            run.recorded_pages.push(outcome.after.clone());
            tracer.record(
                "execution_outcome",
                json!({
                    "executed": outcome.executed,
                    "failure_reason": outcome.failure_reason,
                    "page_changed": outcome.before.root != outcome.after.root,
                }),
            );

            let description = describe_action_on_page(&candidate.action, &outcome.before);
            let verdict_fb = if cfg.no_feedback {
                if outcome.executed {
                    FeedbackVerdict {
                        accepted: true,
                        reason: "feedback disabled".to_string(),
                        suggestions: Vec::new(),
                    }
                } else {
                    FeedbackVerdict {
                        accepted: false,
                        reason: format!("{REASON_NOT_EXECUTABLE}: {}", outcome.failure_reason),
                        suggestions: Vec::new(),
                    }
                }
            } else {
                assess_action(gateway, skeleton, state, &description, &outcome, &opts)
            };
            tracer.drain_gateway();
            tracer.record(
                "feedback_verdict",
                json!({
                    "accepted": verdict_fb.accepted,
                    "reason": verdict_fb.reason,
                    "suggestions": verdict_fb.suggestions,
                }),
            );

            if verdict_fb.accepted {
                state.history.push(AcceptedStep {
                    action: candidate.action.clone(),
                    description,
                    outcome_summary: outcome_summary(&outcome),
                    after_page_seq: outcome.after.sequence_no,
                });
                run.dialogs.push((outcome.before.clone(), outcome.after.clone()));
                state.consecutive_rejections = 0;
                break 'inner; // iteration done: one accepted action
            }

            attempts += 1;
            state.consecutive_rejections += 1;
            rejection_notes.push(format!(
                "\"{}\" was rejected: {}{}",
                description,
                verdict_fb.reason,
                if verdict_fb.suggestions.is_empty() {
                    String::new()
                } else {
                    format!("; suggestions: {}", verdict_fb.suggestions.join(", "))
                }
            ));

            // A rejected but executed action moved the app; restore the
            // accepted-history state so the generated test stays replayable.
            if outcome.executed {
                let actions = state.accepted_actions();
                match run.session.replay_prefix(&actions) {
                    Ok(outcomes)
                        if outcomes.len() == actions.len()
                            && outcomes.iter().all(|o| o.executed) =>
                    {
                        tracer.record("state_restored", json!({"prefix_len": actions.len()}));
                    }
                    Ok(_) => {
                        return (
                            LoopExit::Error("accepted prefix no longer replays".into()),
                            None,
                        )
                    }
                    Err(e) => return (LoopExit::Error(e.to_string()), None),
                }
            }

            if state.consecutive_rejections >= cfg.reflection_threshold {
                match run_reflection(skeleton, state, run, gateway, cfg, tracer) {
                    Ok(true) => break 'inner,
                    Ok(false) => {
                        reflection_none_count += 1;
                        state.consecutive_rejections = 0;
                        if reflection_none_count >= 2 {
                            return (
                                LoopExit::BudgetExhausted(
                                    "reflection found nothing to truncate twice".into(),
                                ),
                                None,
                            );
                        }
                    }
                    Err(e) => return (LoopExit::Error(e), None),
                }
            }
        }
    }
    (
        LoopExit::BudgetExhausted(format!("max_iterations {} reached", cfg.max_iterations)),
        None,
    )
}

/// Run test-level reflection; truncate and replay when it names a misleading
/// action. Returns Ok(true) when the history was truncated.
fn run_reflection(
    skeleton: &TestSkeleton,
    state: &mut ExplorationState,
    run: &mut RunState<'_>,
    cfg_gateway: &Gateway,
    cfg: &MigrationConfig,
    tracer: &mut Tracer<'_>,
) -> Result<bool, String> {
    let opts = cfg.planner_options();
    let reflection = reflect_test(cfg_gateway, skeleton, state, &run.dialogs, &opts)
        .map_err(|e| e.to_string())?;
    tracer.drain_gateway();
    tracer.record(
        "reflection",
        json!({
            "misleading_index": reflection.misleading_index,
            "reason": reflection.reason,
        }),
    );
    let Some(index) = reflection.misleading_index else {
        return Ok(false);
    };
    apply_truncation(state, &reflection, run.session).map_err(|e| e.to_string())?;
    run.dialogs.truncate(state.history.len());
    if let Ok(page) = run.session.capture_page() {
        state.observe_page(&page, cfg.prune_budget);
        run.recorded_pages.push(page);
    }
    tracer.record(
        "truncation",
        json!({
            "misleading_index": index,
            "history_len": state.history.len(),
            "step_status": state.step_status,
        }),
    );
    Ok(true)
}
