//! Offline phase: turn the source test plus its visual execution log into a
//! test skeleton. Three stages — action augmentation, logic-step grouping,
//! key-step extraction — each one VLM call (classification makes two).

use crate::gateway::decision::{parse_structured_reply, Decision, ReplyCategory};
use crate::gateway::{
    assemble_prompt, query, AgentKind, Gateway, PromptContext, PromptImage, QueryError,
};
use crate::model::{
    Event, GuiPage, OracleEvent, OracleKind, TestCase, VisualExecutionLog,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum AnalyzerError {
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error("bad analyzer input: {0}")]
    BadInput(String),
}

/// Natural-language rendering of one source action:
/// "<action> the <widget> to <effect>".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescribedAction {
    pub event_index: usize,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepCategory {
    Key,
    Supporting,
    Unclassified,
}

/// A subtask covering a contiguous range of source actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicStep {
    pub step_id: u32,
    pub description: String,
    /// Inclusive event-index range of the covered actions.
    pub action_range: (usize, usize),
    pub category: StepCategory,
    /// Sequence numbers of the pages around the step in the execution log.
    pub before_page_seq: u64,
    pub after_page_seq: u64,
}

/// The distilled guidance the exploration runs on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSkeleton {
    pub target_functionality: String,
    pub key_steps: Vec<LogicStep>,
    /// Machine-synthesized from the terminal oracle.
    pub stop_condition: String,
    /// The free-form stop condition the augmentation reply drafted.
    pub stop_condition_draft: String,
    pub source_final_page: GuiPage,
}

impl TestSkeleton {
    /// Prompt rendering used in every online-phase call.
    pub fn render(&self) -> String {
        let mut out = format!("Target functionality: {}\n", self.target_functionality);
        out.push_str("Key steps:\n");
        for (i, step) in self.key_steps.iter().enumerate() {
            out.push_str(&format!("  {}. {}\n", i + 1, step.description));
        }
        out.push_str(&format!("Stop condition: {}", self.stop_condition));
        out
    }

    /// Persistence document; field set is fixed.
    pub fn to_document(&self) -> Vec<u8> {
        let key_steps: Vec<serde_json::Value> = self
            .key_steps
            .iter()
            .map(|s| {
                serde_json::json!({
                    "step_id": s.step_id,
                    "description": s.description,
                    "action_range": [s.action_range.0, s.action_range.1],
                })
            })
            .collect();
        let doc = serde_json::json!({
            "functionality": self.target_functionality,
            "key_steps": key_steps,
            "stop_condition": self.stop_condition,
            "source_final_page_ref": self.source_final_page.sequence_no,
        });
        let mut out = serde_json::to_vec_pretty(&doc).expect("skeleton serializes");
        out.push(b'\n');
        out
    }
}

/// Ablation and budget knobs the analyzer honours.
#[derive(Debug, Clone, Copy)]
pub struct AnalyzerOptions {
    pub no_vision: bool,
    /// w/o-analyzer toggle: skip grouping and classification, one key step
    /// per source action.
    pub degenerate: bool,
    pub re_query_budget: u32,
}

impl Default for AnalyzerOptions {
    fn default() -> Self {
        AnalyzerOptions {
            no_vision: false,
            degenerate: false,
            re_query_budget: 2,
        }
    }
}

/// Render the source test script with widget attributes resolved from the
/// log's before-pages; the textual half of the augmentation context.
fn render_script(tc: &TestCase, log: &VisualExecutionLog) -> String {
    let mut out = format!(
        "App: {} (category {}), functionality {}\nEvents:\n",
        tc.app_id, tc.category, tc.functionality_id
    );
    let mut action_no = 0;
    for (i, event) in tc.events.iter().enumerate() {
        match event {
            Event::Action(a) => {
                let mut line = format!("  event {i}: {}", a.kind);
                if let Some(sel) = &a.selector {
                    line.push_str(&format!(" on {}", sel.describe()));
                    if let Some(entry) = log.entries.get(action_no) {
                        if let Some(w) = sel.resolve(&entry.before.root) {
                            line.push_str(&format!(
                                " [class={} id={:?} text={:?} desc={:?}]",
                                w.class_name, w.resource_id, w.text, w.content_desc
                            ));
                        }
                    }
                }
                if let Some(p) = &a.payload {
                    line.push_str(&format!(" payload={p:?}"));
                }
                out.push_str(&line);
                out.push('\n');
                action_no += 1;
            }
            Event::Oracle(o) => {
                out.push_str(&format!(
                    "  event {i}: oracle {} {} expected={:?}\n",
                    o.kind,
                    o.selector.describe(),
                    o.expected
                ));
            }
        }
    }
    out
}

fn dialog_images(log: &VisualExecutionLog) -> Vec<PromptImage> {
    let mut images = Vec::new();
    for (i, entry) in log.entries.iter().enumerate() {
        images.push(PromptImage {
            label: format!("source:before:{i}"),
            bytes: entry.before.screenshot.data.clone(),
        });
        images.push(PromptImage {
            label: format!("source:after:{i}"),
            bytes: entry.after.screenshot.data.clone(),
        });
    }
    images
}

/// Synthesize the machine-checkable stop condition from the terminal oracle.
pub fn stop_condition_from_oracle(oracle: &OracleEvent) -> String {
    match oracle.kind {
        OracleKind::Exists => format!("the page shows {}", oracle.selector.describe()),
        OracleKind::TextEquals => format!(
            "the page shows \"{}\" on {}",
            oracle.expected,
            oracle.selector.describe()
        ),
        OracleKind::TextContains => format!(
            "the page shows text containing \"{}\" on {}",
            oracle.expected,
            oracle.selector.describe()
        ),
    }
}

/// Stage 1: one augmentation call describing every action, the overall
/// functionality, and a stop-condition draft.
pub fn augment_actions(
    gateway: &Gateway,
    tc: &TestCase,
    log: &VisualExecutionLog,
    opts: &AnalyzerOptions,
) -> Result<(Vec<DescribedAction>, String, String), AnalyzerError> {
    if log.entries.len() != tc.action_count() {
        return Err(AnalyzerError::BadInput(format!(
            "log has {} entries for {} actions",
            log.entries.len(),
            tc.action_count()
        )));
    }
    let action_indices: Vec<usize> = tc.actions().map(|(i, _)| i).collect();
    let ctx = PromptContext {
        source_context: Some(render_script(tc, log)),
        images: dialog_images(log),
        no_vision: opts.no_vision,
        ..Default::default()
    };
    let bundle = assemble_prompt(AgentKind::AnalyzerAugment, &ctx)?;
    let reply = query(gateway, &bundle, opts.re_query_budget, |reply| {
        let Decision::Augment(parsed) = parse_structured_reply(reply, AgentKind::AnalyzerAugment)
            .map_err(|e| e.to_string())?
        else {
            unreachable!("parser returns the kind it was asked for")
        };
        let mut got: Vec<usize> = parsed.actions.iter().map(|a| a.index).collect();
        got.sort_unstable();
        if got != action_indices {
            return Err(format!(
                "descriptions must cover action indices {action_indices:?}, got {got:?}"
            ));
        }
        if parsed.actions.iter().any(|a| a.description.is_empty()) {
            return Err("descriptions must be non-empty".to_string());
        }
        Ok(parsed)
    })?;
    let mut items = reply.actions;
    items.sort_by_key(|a| a.index);
    let described = items
        .into_iter()
        .map(|a| DescribedAction {
            event_index: a.index,
            description: a.description,
        })
        .collect();
    Ok((described, reply.functionality, reply.stop_condition))
}

fn render_described(described: &[DescribedAction]) -> String {
    let mut out = String::from("Described source actions:\n");
    for d in described {
        out.push_str(&format!("  event {}: {}\n", d.event_index, d.description));
    }
    out
}

/// Stage 2: one grouping call; returned ranges must partition the action
/// sequence in order.
pub fn group_logic_steps(
    gateway: &Gateway,
    described: &[DescribedAction],
    log: &VisualExecutionLog,
    opts: &AnalyzerOptions,
) -> Result<Vec<LogicStep>, AnalyzerError> {
    if described.is_empty() {
        return Err(AnalyzerError::BadInput("nothing to group".to_string()));
    }
    let action_indices: Vec<usize> = described.iter().map(|d| d.event_index).collect();
    let ctx = PromptContext {
        source_context: Some(render_described(described)),
        no_vision: opts.no_vision,
        ..Default::default()
    };
    let bundle = assemble_prompt(AgentKind::AnalyzerGroup, &ctx)?;
    let items = query(gateway, &bundle, opts.re_query_budget, |reply| {
        let Decision::Group(items) = parse_structured_reply(reply, AgentKind::AnalyzerGroup)
            .map_err(|e| e.to_string())?
        else {
            unreachable!()
        };
        validate_partition(&items, &action_indices)?;
        Ok(items)
    })?;
    Ok(items
        .into_iter()
        .map(|item| {
            let (first, last) = (item.action_range[0], item.action_range[1]);
            LogicStep {
                step_id: item.step_id,
                description: item.description,
                action_range: (first, last),
                category: StepCategory::Unclassified,
                before_page_seq: page_seq_before(log, &action_indices, first),
                after_page_seq: page_seq_after(log, &action_indices, last),
            }
        })
        .collect())
}

/// Ordered, non-overlapping, endpoints on actions, covering every action.
fn validate_partition(
    items: &[crate::gateway::decision::GroupItem],
    action_indices: &[usize],
) -> Result<(), String> {
    if items.is_empty() {
        return Err("at least one step required".to_string());
    }
    let mut covered = Vec::new();
    let mut prev_end: Option<usize> = None;
    for item in items {
        let [first, last] = item.action_range;
        if first > last {
            return Err(format!("step {} range is reversed", item.step_id));
        }
        if !action_indices.contains(&first) || !action_indices.contains(&last) {
            return Err(format!("step {} range endpoints must be actions", item.step_id));
        }
        if let Some(end) = prev_end {
            if first <= end {
                return Err(format!("step {} overlaps the previous step", item.step_id));
            }
        }
        prev_end = Some(last);
        covered.extend(action_indices.iter().copied().filter(|i| *i >= first && *i <= last));
    }
    if covered != action_indices {
        return Err(format!(
            "ranges must partition the action sequence {action_indices:?}, covered {covered:?}"
        ));
    }
    Ok(())
}

fn log_position(action_indices: &[usize], event_index: usize) -> usize {
    action_indices
        .iter()
        .position(|i| *i == event_index)
        .expect("validated endpoint")
}

fn page_seq_before(log: &VisualExecutionLog, action_indices: &[usize], first: usize) -> u64 {
    log.entries[log_position(action_indices, first)].before.sequence_no
}

fn page_seq_after(log: &VisualExecutionLog, action_indices: &[usize], last: usize) -> u64 {
    log.entries[log_position(action_indices, last)].after.sequence_no
}

/// Stage 3: two independent classification calls; a step is removed iff both
/// replies label it supporting, every survivor becomes a key step.
pub fn classify_steps(
    gateway: &Gateway,
    steps: Vec<LogicStep>,
    tc: &TestCase,
    log: &VisualExecutionLog,
    opts: &AnalyzerOptions,
) -> Result<Vec<LogicStep>, AnalyzerError> {
    let action_indices: Vec<usize> = tc.actions().map(|(i, _)| i).collect();
    let mut rendered = String::from("Logic steps:\n");
    for s in &steps {
        rendered.push_str(&format!(
            "  step {}: {} (events {}..={})\n",
            s.step_id, s.description, s.action_range.0, s.action_range.1
        ));
    }
    let mut images = Vec::new();
    for s in &steps {
        let before = &log.entries[log_position(&action_indices, s.action_range.0)].before;
        let after = &log.entries[log_position(&action_indices, s.action_range.1)].after;
        images.push(PromptImage {
            label: format!("source:step:{}:before", s.step_id),
            bytes: before.screenshot.data.clone(),
        });
        images.push(PromptImage {
            label: format!("source:step:{}:after", s.step_id),
            bytes: after.screenshot.data.clone(),
        });
    }
    let ctx = PromptContext {
        source_context: Some(rendered),
        images,
        no_vision: opts.no_vision,
        ..Default::default()
    };
    let bundle = assemble_prompt(AgentKind::AnalyzerClassify, &ctx)?;

    let step_ids: Vec<u32> = steps.iter().map(|s| s.step_id).collect();
    let vote = |_round: u32| -> Result<Vec<ReplyCategory>, AnalyzerError> {
        let items = query(gateway, &bundle, opts.re_query_budget, |reply| {
            let Decision::Classify(items) =
                parse_structured_reply(reply, AgentKind::AnalyzerClassify).map_err(|e| e.to_string())?
            else {
                unreachable!()
            };
            let mut got: Vec<u32> = items.iter().map(|i| i.step_id).collect();
            got.sort_unstable();
            let mut want = step_ids.clone();
            want.sort_unstable();
            if got != want {
                return Err(format!("classification must cover steps {want:?}, got {got:?}"));
            }
            Ok(items)
        })?;
        Ok(step_ids
            .iter()
            .map(|id| items.iter().find(|i| i.step_id == *id).unwrap().category)
            .collect())
    };
    let first = vote(1)?;
    let second = vote(2)?;

    Ok(steps
        .into_iter()
        .enumerate()
        .filter_map(|(i, mut step)| {
            let both_supporting =
                first[i] == ReplyCategory::Supporting && second[i] == ReplyCategory::Supporting;
            if both_supporting {
                None
            } else {
                step.category = StepCategory::Key;
                Some(step)
            }
        })
        .collect())
}

/// Compose the offline phase. Under the degenerate (w/o analyzer) toggle the
/// skeleton carries one key step per source action, straight from the
/// augmentation call.
pub fn build_skeleton(
    gateway: &Gateway,
    tc: &TestCase,
    log: &VisualExecutionLog,
    opts: &AnalyzerOptions,
) -> Result<TestSkeleton, AnalyzerError> {
    let terminal = tc
        .terminal_oracle()
        .ok_or_else(|| AnalyzerError::BadInput("test case has no terminal oracle".to_string()))?;
    let (described, functionality, draft) = augment_actions(gateway, tc, log, opts)?;
    let action_indices: Vec<usize> = tc.actions().map(|(i, _)| i).collect();

    let key_steps = if opts.degenerate {
        described
            .iter()
            .enumerate()
            .map(|(i, d)| LogicStep {
                step_id: i as u32 + 1,
                description: d.description.clone(),
                action_range: (d.event_index, d.event_index),
                category: StepCategory::Key,
                before_page_seq: page_seq_before(log, &action_indices, d.event_index),
                after_page_seq: page_seq_after(log, &action_indices, d.event_index),
            })
            .collect()
    } else {
        let grouped = group_logic_steps(gateway, &described, log, opts)?;
        classify_steps(gateway, grouped, tc, log, opts)?
    };

    let source_final_page = log
        .final_page()
        .ok_or_else(|| AnalyzerError::BadInput("empty execution log".to_string()))?
        .clone();

    Ok(TestSkeleton {
        target_functionality: functionality,
        key_steps,
        stop_condition: stop_condition_from_oracle(terminal),
        stop_condition_draft: draft,
        source_final_page,
    })
}
