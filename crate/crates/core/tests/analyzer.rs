//! Offline-phase tests: augmentation, grouping, two-vote pruning, and
//! skeleton assembly against the tip-calculator and todo fixtures.

use testferry::analyzer::{
    augment_actions, build_skeleton, classify_steps, group_logic_steps, AnalyzerOptions,
    StepCategory,
};
use testferry::device::record_execution_log;
use testferry::gateway::{AgentKind, Gateway, QueryError, TranscriptEntry};
use testferry::model::VisualExecutionLog;
use testferry::testkit::{entry, fixture_session, load_fixture_test};

const AUGMENT_TIPCALC: &str = r#"{
    "functionality": "calculate the total bill amount with a 15% tip",
    "stop_condition": "the total 65.09 is displayed",
    "actions": [
        {"index": 0, "description": "tap the button '5' to append the first digit of the bill amount"},
        {"index": 1, "description": "tap the button '6' to append the second digit of the bill amount"},
        {"index": 2, "description": "tap the button '6' to append the third digit of the bill amount"},
        {"index": 3, "description": "tap the button '0' to append the last digit of the bill amount"}
    ]
}"#;

const GROUP_TIPCALC: &str =
    r#"[{"step_id": 1, "description": "input the bill amount 56.60", "action_range": [0, 3]}]"#;

const CLASSIFY_KEY: &str =
    r#"[{"step_id": 1, "category": "key", "reason": "provides the bill amount"}]"#;

fn tipcalc_source() -> (testferry::model::TestCase, VisualExecutionLog) {
    let tc = load_fixture_test("tip_calculator", "tipcalc_keypad", "tip_total");
    let mut session = fixture_session("tip_calculator", "tipcalc_keypad");
    let log = record_execution_log(&mut session, &tc).unwrap();
    (tc, log)
}

#[test]
fn augment_passes_descriptions_through_in_order() {
    let (tc, log) = tipcalc_source();
    let gw = Gateway::scripted(vec![entry(AgentKind::AnalyzerAugment, AUGMENT_TIPCALC)]);
    let (described, functionality, draft) =
        augment_actions(&gw, &tc, &log, &AnalyzerOptions::default()).unwrap();
    assert_eq!(described.len(), 4);
    assert_eq!(
        described[0].description,
        "tap the button '5' to append the first digit of the bill amount"
    );
    assert!(described.iter().all(|d| !d.description.is_empty()));
    assert!(functionality.contains("tip"));
    assert!(draft.contains("65.09"), "stop draft mentions the total: {draft}");
}

#[test]
fn augment_rejects_mismatched_log() {
    let (tc, log) = tipcalc_source();
    let truncated = VisualExecutionLog {
        entries: log.entries[..2].to_vec(),
    };
    let gw = Gateway::scripted(vec![]);
    let err = augment_actions(&gw, &tc, &truncated, &AnalyzerOptions::default()).unwrap_err();
    assert!(err.to_string().contains("2 entries for 4 actions"), "{err}");
}

#[test]
fn four_digit_taps_group_into_one_step() {
    let (tc, log) = tipcalc_source();
    let gw = Gateway::scripted(vec![
        entry(AgentKind::AnalyzerAugment, AUGMENT_TIPCALC),
        entry(AgentKind::AnalyzerGroup, GROUP_TIPCALC),
    ]);
    let (described, _, _) = augment_actions(&gw, &tc, &log, &AnalyzerOptions::default()).unwrap();
    let steps = group_logic_steps(&gw, &described, &log, &AnalyzerOptions::default()).unwrap();
    assert_eq!(steps.len(), 1);
    assert_eq!(steps[0].description, "input the bill amount 56.60");
    assert_eq!(steps[0].action_range, (0, 3));
    assert_eq!(steps[0].category, StepCategory::Unclassified);
    assert_eq!(steps[0].before_page_seq, log.entries[0].before.sequence_no);
    assert_eq!(steps[0].after_page_seq, log.entries[3].after.sequence_no);
}

#[test]
fn single_action_test_groups_into_single_step() {
    let tc = load_fixture_test("todo_list", "todo_plain", "add_item");
    let mut session = fixture_session("todo_list", "todo_plain");
    let log = record_execution_log(&mut session, &tc).unwrap();
    let gw = Gateway::scripted(vec![entry(
        AgentKind::AnalyzerGroup,
        r#"[{"step_id": 1, "description": "enter the task name", "action_range": [0, 0]},
            {"step_id": 2, "description": "save the task", "action_range": [1, 1]}]"#,
    )]);
    let described = vec![
        testferry::analyzer::DescribedAction {
            event_index: 0,
            description: "set_text the task field to name the task".into(),
        },
        testferry::analyzer::DescribedAction {
            event_index: 1,
            description: "tap the ADD button to save the task".into(),
        },
    ];
    let steps = group_logic_steps(&gw, &described, &log, &AnalyzerOptions::default()).unwrap();
    assert_eq!(steps.len(), 2);
    assert_eq!(steps[1].action_range, (1, 1));
}

#[test]
fn overlapping_ranges_requery_then_hard_error() {
    let (tc, log) = tipcalc_source();
    let overlapping = r#"[
        {"step_id": 1, "description": "a", "action_range": [0, 2]},
        {"step_id": 2, "description": "b", "action_range": [2, 3]}
    ]"#;
    let gw = Gateway::scripted(vec![
        entry(AgentKind::AnalyzerAugment, AUGMENT_TIPCALC),
        entry(AgentKind::AnalyzerGroup, overlapping),
        entry(AgentKind::AnalyzerGroup, overlapping),
    ]);
    let opts = AnalyzerOptions {
        re_query_budget: 1,
        ..Default::default()
    };
    let (described, _, _) = augment_actions(&gw, &tc, &log, &opts).unwrap();
    let err = group_logic_steps(&gw, &described, &log, &opts).unwrap_err();
    match err {
        testferry::analyzer::AnalyzerError::Query(QueryError::Rejected { attempts, .. }) => {
            assert_eq!(attempts, 2, "one re-query after the initial attempt");
        }
        other => panic!("expected rejection, got {other}"),
    }
    assert_eq!(gw.calls_for(AgentKind::AnalyzerGroup), 2);
}

fn todo_steps_and_inputs() -> (
    testferry::model::TestCase,
    VisualExecutionLog,
    Vec<testferry::analyzer::LogicStep>,
) {
    let tc = load_fixture_test("todo_list", "todo_tutorial", "add_item");
    let mut session = fixture_session("todo_list", "todo_tutorial");
    let log = record_execution_log(&mut session, &tc).unwrap();
    let gw = Gateway::scripted(vec![entry(
        AgentKind::AnalyzerGroup,
        r#"[{"step_id": 1, "description": "dismiss the tutorial", "action_range": [0, 0]},
            {"step_id": 2, "description": "enter the task Buy milk", "action_range": [1, 1]},
            {"step_id": 3, "description": "save the task", "action_range": [2, 2]}]"#,
    )]);
    let described: Vec<_> = (0..3)
        .map(|i| testferry::analyzer::DescribedAction {
            event_index: i,
            description: format!("described action {i}"),
        })
        .collect();
    let steps = group_logic_steps(&gw, &described, &log, &AnalyzerOptions::default()).unwrap();
    (tc, log, steps)
}

fn classify_reply(categories: [&str; 3]) -> String {
    format!(
        r#"[{{"step_id": 1, "category": "{}", "reason": "r1"}},
            {{"step_id": 2, "category": "{}", "reason": "r2"}},
            {{"step_id": 3, "category": "{}", "reason": "r3"}}]"#,
        categories[0], categories[1], categories[2]
    )
}

#[test]
fn step_removed_only_when_both_votes_say_supporting() {
    let (tc, log, steps) = todo_steps_and_inputs();

    // (supporting, supporting) -> removed
    let gw = Gateway::scripted(vec![
        entry(AgentKind::AnalyzerClassify, &classify_reply(["supporting", "key", "key"])),
        entry(AgentKind::AnalyzerClassify, &classify_reply(["supporting", "key", "key"])),
    ]);
    let kept = classify_steps(&gw, steps.clone(), &tc, &log, &AnalyzerOptions::default()).unwrap();
    assert_eq!(kept.len(), 2);
    assert!(kept.iter().all(|s| s.category == StepCategory::Key));
    assert!(!kept.iter().any(|s| s.description.contains("tutorial")));

    // (supporting, key) -> retained as key
    let gw = Gateway::scripted(vec![
        entry(AgentKind::AnalyzerClassify, &classify_reply(["supporting", "key", "key"])),
        entry(AgentKind::AnalyzerClassify, &classify_reply(["key", "key", "key"])),
    ]);
    let kept = classify_steps(&gw, steps.clone(), &tc, &log, &AnalyzerOptions::default()).unwrap();
    assert_eq!(kept.len(), 3);
    assert_eq!(kept[0].category, StepCategory::Key);

    // (key, key) -> retained
    let gw = Gateway::scripted(vec![
        entry(AgentKind::AnalyzerClassify, &classify_reply(["key", "key", "key"])),
        entry(AgentKind::AnalyzerClassify, &classify_reply(["key", "key", "key"])),
    ]);
    let kept = classify_steps(&gw, steps, &tc, &log, &AnalyzerOptions::default()).unwrap();
    assert_eq!(kept.len(), 3);
}

fn tipcalc_skeleton_transcript() -> Vec<TranscriptEntry> {
    vec![
        entry(AgentKind::AnalyzerAugment, AUGMENT_TIPCALC),
        entry(AgentKind::AnalyzerGroup, GROUP_TIPCALC),
        entry(AgentKind::AnalyzerClassify, CLASSIFY_KEY),
        entry(AgentKind::AnalyzerClassify, CLASSIFY_KEY),
    ]
}

#[test]
fn tipcalc_skeleton_matches_motivating_shape() {
    let (tc, log) = tipcalc_source();
    let gw = Gateway::scripted(tipcalc_skeleton_transcript());
    let skeleton = build_skeleton(&gw, &tc, &log, &AnalyzerOptions::default()).unwrap();
    assert!(skeleton.target_functionality.contains("tip"));
    assert_eq!(skeleton.key_steps.len(), 1);
    assert_eq!(skeleton.key_steps[0].description, "input the bill amount 56.60");
    assert!(skeleton.stop_condition.contains("65.09"));
    assert!(skeleton.stop_condition_draft.contains("65.09"));
    assert_eq!(
        skeleton.source_final_page.sequence_no,
        log.final_page().unwrap().sequence_no
    );
    assert_eq!(skeleton.source_final_page.root, log.final_page().unwrap().root);
}

#[test]
fn degenerate_skeleton_has_one_key_step_per_action() {
    let (tc, log) = tipcalc_source();
    let gw = Gateway::scripted(vec![entry(AgentKind::AnalyzerAugment, AUGMENT_TIPCALC)]);
    let opts = AnalyzerOptions {
        degenerate: true,
        ..Default::default()
    };
    let skeleton = build_skeleton(&gw, &tc, &log, &opts).unwrap();
    assert_eq!(skeleton.key_steps.len(), 4);
    assert_eq!(gw.calls(), 1, "degenerate skeleton costs exactly the augment call");
    assert_eq!(skeleton.key_steps[2].action_range, (2, 2));
    assert!(skeleton.stop_condition.contains("65.09"));
}

#[test]
fn skeleton_document_is_stable() {
    let (tc, log) = tipcalc_source();
    let gw = Gateway::scripted(tipcalc_skeleton_transcript());
    let skeleton = build_skeleton(&gw, &tc, &log, &AnalyzerOptions::default()).unwrap();
    let doc = String::from_utf8(skeleton.to_document()).unwrap();
    assert!(doc.contains("\"functionality\""));
    assert!(doc.contains("\"key_steps\""));
    assert!(doc.contains("\"stop_condition\""));
    assert!(doc.contains("\"source_final_page_ref\""));
    let again = build_skeleton(
        &Gateway::scripted(tipcalc_skeleton_transcript()),
        &tc,
        &log,
        &AnalyzerOptions::default(),
    )
    .unwrap();
    assert_eq!(skeleton.to_document(), again.to_document());
}
