//! Prompt assembly. Every agent kind owns a fixed set of sections, a fixed
//! chain-of-thought, and a fixed instruction block; section order is always
//! skeleton, source context, target context, history, chain-of-thought,
//! instruction.

use super::GatewayError;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    AnalyzerAugment,
    AnalyzerGroup,
    AnalyzerClassify,
    CompletenessChecker,
    ActionGenerator,
    FeedbackAction,
    FeedbackReflect,
    OracleGenerator,
}

impl AgentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AgentKind::AnalyzerAugment => "analyzer_augment",
            AgentKind::AnalyzerGroup => "analyzer_group",
            AgentKind::AnalyzerClassify => "analyzer_classify",
            AgentKind::CompletenessChecker => "completeness_checker",
            AgentKind::ActionGenerator => "action_generator",
            AgentKind::FeedbackAction => "feedback_action",
            AgentKind::FeedbackReflect => "feedback_reflect",
            AgentKind::OracleGenerator => "oracle_generator",
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const ALL_AGENT_KINDS: [AgentKind; 8] = [
    AgentKind::AnalyzerAugment,
    AgentKind::AnalyzerGroup,
    AgentKind::AnalyzerClassify,
    AgentKind::CompletenessChecker,
    AgentKind::ActionGenerator,
    AgentKind::FeedbackAction,
    AgentKind::FeedbackReflect,
    AgentKind::OracleGenerator,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionName {
    TestSkeleton,
    SourceContext,
    TargetContext,
    EventHistory,
    ChainOfThought,
    Instruction,
}

impl SectionName {
    pub fn title(&self) -> &'static str {
        match self {
            SectionName::TestSkeleton => "Test Skeleton",
            SectionName::SourceContext => "Source App Context",
            SectionName::TargetContext => "Target App Context",
            SectionName::EventHistory => "Event History",
            SectionName::ChainOfThought => "Think Step By Step",
            SectionName::Instruction => "Instruction",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptImage {
    pub label: String,
    pub bytes: Vec<u8>,
}

/// Caller-supplied material for one prompt. Sections not required by the
/// agent kind are ignored; required ones must be present.
#[derive(Debug, Clone, Default)]
pub struct PromptContext {
    pub skeleton: Option<String>,
    pub source_context: Option<String>,
    pub target_context: Option<String>,
    pub event_history: Option<String>,
    pub images: Vec<PromptImage>,
    pub no_vision: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub agent_kind: AgentKind,
    pub sections: Vec<(SectionName, String)>,
    pub images: Vec<PromptImage>,
}

impl PromptBundle {
    pub fn section_names(&self) -> Vec<SectionName> {
        self.sections.iter().map(|(n, _)| *n).collect()
    }

    pub fn section(&self, name: SectionName) -> Option<&str> {
        self.sections
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, s)| s.as_str())
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (name, content) in &self.sections {
            out.push_str("## ");
            out.push_str(name.title());
            out.push('\n');
            out.push_str(content);
            out.push_str("\n\n");
        }
        out
    }
}

/// Context sections each agent kind consumes, besides the chain-of-thought
/// and instruction it always carries.
pub fn required_sections(kind: AgentKind) -> &'static [SectionName] {
    use SectionName::*;
    match kind {
        AgentKind::AnalyzerAugment => &[SourceContext],
        AgentKind::AnalyzerGroup => &[SourceContext],
        AgentKind::AnalyzerClassify => &[SourceContext],
        AgentKind::CompletenessChecker => &[TestSkeleton, SourceContext, TargetContext, EventHistory],
        AgentKind::ActionGenerator => &[TestSkeleton, TargetContext, EventHistory],
        AgentKind::FeedbackAction => &[TestSkeleton, TargetContext, EventHistory],
        AgentKind::FeedbackReflect => &[TestSkeleton, EventHistory],
        AgentKind::OracleGenerator => &[TestSkeleton, SourceContext, TargetContext],
    }
}

/// Image labels that must be attached when vision is enabled.
fn required_image_labels(kind: AgentKind) -> &'static [&'static str] {
    match kind {
        AgentKind::CompletenessChecker => &["source:final", "target:current"],
        AgentKind::ActionGenerator => &["target:annotated"],
        AgentKind::FeedbackAction => &["target:before", "target:after"],
        AgentKind::OracleGenerator => &["source:final", "target:current"],
        _ => &[],
    }
}

fn chain_of_thought(kind: AgentKind) -> &'static str {
    match kind {
        AgentKind::AnalyzerAugment => {
            "1. Read each source action together with its before/after screenshots.\n\
             2. Infer what the touched widget does from its attributes and appearance.\n\
             3. Summarize the functionality the whole test exercises and what its final oracle checks."
        }
        AgentKind::AnalyzerGroup => {
            "1. Read the action descriptions in order.\n\
             2. Merge consecutive actions that realize one intention into a single step."
        }
        AgentKind::AnalyzerClassify => {
            "1. Re-read each step against the target functionality.\n\
             2. Decide whether the step realizes the functionality itself or handles app-specific behaviour."
        }
        AgentKind::CompletenessChecker => {
            "1. Check step completeness.\n\
             2. Check stop condition.\n\
             3. Infer navigation to anchor page."
        }
        AgentKind::ActionGenerator => {
            "1. Check step completeness.\n\
             2. Infer step undergoing.\n\
             3. Infer step to start.\n\
             4. Infer connection action to next step."
        }
        AgentKind::FeedbackAction => {
            "1. Describe current action consequences.\n\
             2. Check action relatedness to functionality."
        }
        AgentKind::FeedbackReflect => {
            "1. Walk the accepted actions in order.\n\
             2. Find the earliest action that led the exploration away from the functionality."
        }
        AgentKind::OracleGenerator => {
            "1. Compare the source final page with the target final page.\n\
             2. Choose the anchor widget that proves the functionality was triggered."
        }
    }
}

fn instruction(kind: AgentKind) -> &'static str {
    match kind {
        AgentKind::AnalyzerAugment => {
            "Describe every source action as \"<action> the <widget> to <effect>\".\n\
             Reply with a fenced JSON block: {\"functionality\": string, \"stop_condition\": string, \
             \"actions\": [{\"index\": int, \"description\": string}]}"
        }
        AgentKind::AnalyzerGroup => {
            "Group the described actions into high-level logic steps covering the whole sequence.\n\
             Reply with a fenced JSON block: [{\"step_id\": int, \"description\": string, \
             \"action_range\": [first, last]}]"
        }
        AgentKind::AnalyzerClassify => {
            "Categorize each step as \"key\" (realizes the target functionality) or \"supporting\" \
             (sets up the environment or handles app-specific behaviour).\n\
             Reply with a fenced JSON block: [{\"step_id\": int, \"category\": \"key\"|\"supporting\", \
             \"reason\": string}]"
        }
        AgentKind::CompletenessChecker => {
            "1. Time to generate oracle?\n\
             2. Extra actions to reach anchor page?\n\
             Reply with a fenced JSON block: {\"steps\": [{\"step_id\": int, \"status\": \
             \"pending\"|\"in_progress\"|\"done\"|\"waived\", \"note\": string}], \
             \"stop_condition_met\": bool, \"complete\": bool, \"extra_navigation_needed\": bool, \
             \"note\": string}"
        }
        AgentKind::ActionGenerator => {
            "1. Select a widget to interact with.\n\
             2. Select an action to perform.\n\
             Reply with a fenced JSON block: {\"widget_label\": int?, \"action\": \
             \"tap\"|\"long_tap\"|\"swipe\"|\"set_text\"|\"key_event\"|\"wait\", \"payload\": string?, \
             \"rationale\": string} or {\"no_action\": true, \"reason\": string}"
        }
        AgentKind::FeedbackAction => {
            "1. Accept the action or not?\n\
             2. Suggest alternative actions.\n\
             Reply with a fenced JSON block: {\"accept\": bool, \"reason\": string, \
             \"suggestions\": [string]}"
        }
        AgentKind::FeedbackReflect => {
            "Identify the earliest accepted action that misled the exploration, if any.\n\
             Reply with a fenced JSON block: {\"misleading_index\": int|null, \"reason\": string}"
        }
        AgentKind::OracleGenerator => {
            "Emit exactly one oracle event over the final page's widget attributes.\n\
             Reply with a fenced JSON block: {\"kind\": \"exists\"|\"text_equals\"|\"text_contains\", \
             \"selector_attrs\": {\"resource_id\"?: string, \"text\"?: string, \"content_desc\"?: string}, \
             \"expected\": string}"
        }
    }
}

/// Build the bundle for one agent call. Sections are exactly the kind's
/// required set plus chain-of-thought and instruction; images are dropped
/// entirely under the no-vision toggle.
pub fn assemble_prompt(kind: AgentKind, ctx: &PromptContext) -> Result<PromptBundle, GatewayError> {
    let mut sections = Vec::new();
    for name in required_sections(kind) {
        let content = match name {
            SectionName::TestSkeleton => &ctx.skeleton,
            SectionName::SourceContext => &ctx.source_context,
            SectionName::TargetContext => &ctx.target_context,
            SectionName::EventHistory => &ctx.event_history,
            _ => unreachable!("generated sections are not in required sets"),
        };
        match content {
            Some(text) => sections.push((*name, text.clone())),
            None => {
                return Err(GatewayError::MissingSection {
                    agent_kind: kind,
                    section: name.title().to_string(),
                })
            }
        }
    }
    sections.push((SectionName::ChainOfThought, chain_of_thought(kind).to_string()));
    sections.push((SectionName::Instruction, instruction(kind).to_string()));

    let images = if ctx.no_vision {
        Vec::new()
    } else {
        for label in required_image_labels(kind) {
            if !ctx.images.iter().any(|img| img.label == *label) {
                return Err(GatewayError::MissingSection {
                    agent_kind: kind,
                    section: format!("image \"{label}\""),
                });
            }
        }
        ctx.images.clone()
    };

    Ok(PromptBundle {
        agent_kind: kind,
        sections,
        images,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_context() -> PromptContext {
        PromptContext {
            skeleton: Some("skeleton".into()),
            source_context: Some("source".into()),
            target_context: Some("target".into()),
            event_history: Some("history".into()),
            images: vec![
                PromptImage {
                    label: "source:final".into(),
                    bytes: vec![1],
                },
                PromptImage {
                    label: "target:current".into(),
                    bytes: vec![2],
                },
                PromptImage {
                    label: "target:annotated".into(),
                    bytes: vec![3],
                },
                PromptImage {
                    label: "target:before".into(),
                    bytes: vec![4],
                },
                PromptImage {
                    label: "target:after".into(),
                    bytes: vec![5],
                },
            ],
            no_vision: false,
        }
    }

    #[test]
    fn sections_match_component_table_for_every_kind() {
        use SectionName::*;
        let expect: &[(AgentKind, &[SectionName])] = &[
            (AgentKind::AnalyzerAugment, &[SourceContext]),
            (AgentKind::AnalyzerGroup, &[SourceContext]),
            (AgentKind::AnalyzerClassify, &[SourceContext]),
            (
                AgentKind::CompletenessChecker,
                &[TestSkeleton, SourceContext, TargetContext, EventHistory],
            ),
            (AgentKind::ActionGenerator, &[TestSkeleton, TargetContext, EventHistory]),
            (AgentKind::FeedbackAction, &[TestSkeleton, TargetContext, EventHistory]),
            (AgentKind::FeedbackReflect, &[TestSkeleton, EventHistory]),
            (
                AgentKind::OracleGenerator,
                &[TestSkeleton, SourceContext, TargetContext],
            ),
        ];
        for (kind, wanted) in expect {
            let bundle = assemble_prompt(*kind, &full_context()).unwrap();
            let mut names = wanted.to_vec();
            names.push(ChainOfThought);
            names.push(Instruction);
            assert_eq!(bundle.section_names(), names, "{kind}");
        }
    }

    #[test]
    fn completeness_checker_carries_source_final_and_target_current() {
        let bundle = assemble_prompt(AgentKind::CompletenessChecker, &full_context()).unwrap();
        let labels: Vec<&str> = bundle.images.iter().map(|i| i.label.as_str()).collect();
        assert!(labels.contains(&"source:final"));
        assert!(labels.contains(&"target:current"));
    }

    #[test]
    fn no_vision_strips_all_images_but_keeps_sections() {
        let mut ctx = full_context();
        ctx.no_vision = true;
        let bundle = assemble_prompt(AgentKind::ActionGenerator, &ctx).unwrap();
        assert!(bundle.images.is_empty());
        assert!(bundle.section(SectionName::TargetContext).is_some());
    }

    #[test]
    fn missing_required_section_names_it() {
        let ctx = PromptContext {
            skeleton: Some("s".into()),
            target_context: Some("t".into()),
            ..Default::default()
        };
        let err = assemble_prompt(AgentKind::ActionGenerator, &ctx).unwrap_err();
        assert!(err.to_string().contains("Event History"), "{err}");
    }

    #[test]
    fn feedback_instruction_asks_both_questions() {
        let bundle = assemble_prompt(AgentKind::FeedbackAction, &full_context()).unwrap();
        let text = bundle.section(SectionName::Instruction).unwrap();
        assert!(text.contains("Accept the action or not?"));
        assert!(text.contains("Suggest alternative actions."));
    }

    #[test]
    fn cot_order_is_fixed_for_completeness_checker() {
        let bundle = assemble_prompt(AgentKind::CompletenessChecker, &full_context()).unwrap();
        let cot = bundle.section(SectionName::ChainOfThought).unwrap();
        let steps: Vec<&str> = cot.lines().collect();
        assert_eq!(steps[0], "1. Check step completeness.");
        assert_eq!(steps[1], "2. Check stop condition.");
        assert_eq!(steps[2], "3. Infer navigation to anchor page.");
    }
}
