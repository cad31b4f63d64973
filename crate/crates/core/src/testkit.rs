//! Test support: fixture loading and transcript builders shared by the unit,
//! integration, and acceptance suites. Not used by the engine itself.

use crate::device::{load_app_model, AppModel, DeviceSession};
use crate::gateway::{AgentKind, Matcher, TranscriptEntry};
use crate::model::{load_test_case, TestCase};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Workspace fixtures directory (`fixtures/` next to the crates).
pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn dataset_dir() -> PathBuf {
    fixtures_dir().join("dataset")
}

pub fn load_fixture_model(category: &str, app_id: &str) -> Arc<AppModel> {
    let path = dataset_dir().join(category).join(app_id).join("model.json");
    let bytes = std::fs::read(&path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    Arc::new(load_app_model(&bytes).unwrap_or_else(|e| panic!("load {}: {e}", path.display())))
}

pub fn load_fixture_test(category: &str, app_id: &str, functionality_id: &str) -> TestCase {
    let path = dataset_dir()
        .join(category)
        .join(app_id)
        .join("tests")
        .join(format!("{functionality_id}.json"));
    let bytes = std::fs::read(&path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()));
    load_test_case(&bytes).unwrap_or_else(|e| panic!("load {}: {e}", path.display()))
}

pub fn fixture_session(category: &str, app_id: &str) -> DeviceSession {
    DeviceSession::simulated(app_id, load_fixture_model(category, app_id))
}

/// Source test plus its execution log, recorded on the keypad tip
/// calculator.
pub fn tipcalc_source_inputs() -> (TestCase, crate::model::VisualExecutionLog) {
    let tc = load_fixture_test("tip_calculator", "tipcalc_keypad", "tip_total");
    let mut session = fixture_session("tip_calculator", "tipcalc_keypad");
    let log = crate::device::record_execution_log(&mut session, &tc).unwrap();
    (tc, log)
}

/// Hand-built skeleton for tests that exercise the online phase alone.
pub fn skeleton_with_steps(
    functionality: &str,
    stop_condition: &str,
    steps: &[(u32, &str)],
    source_final_page: crate::model::GuiPage,
) -> crate::analyzer::TestSkeleton {
    crate::analyzer::TestSkeleton {
        target_functionality: functionality.to_string(),
        key_steps: steps
            .iter()
            .enumerate()
            .map(|(i, (id, desc))| crate::analyzer::LogicStep {
                step_id: *id,
                description: desc.to_string(),
                action_range: (i, i),
                category: crate::analyzer::StepCategory::Key,
                before_page_seq: 0,
                after_page_seq: 0,
            })
            .collect(),
        stop_condition: stop_condition.to_string(),
        stop_condition_draft: stop_condition.to_string(),
        source_final_page,
    }
}

/// Transcript entry with a fenced JSON reply, the shape scripted fixtures use.
pub fn entry(kind: AgentKind, reply_json: &str) -> TranscriptEntry {
    TranscriptEntry {
        matcher: Matcher {
            agent_kind: kind,
            contains: None,
        },
        reply: format!("Reasoning elided.\n```json\n{reply_json}\n```\n"),
    }
}

/// Same, but guarded on a prompt substring.
pub fn entry_containing(kind: AgentKind, contains: &str, reply_json: &str) -> TranscriptEntry {
    TranscriptEntry {
        matcher: Matcher {
            agent_kind: kind,
            contains: Some(contains.to_string()),
        },
        reply: format!("Reasoning elided.\n```json\n{reply_json}\n```\n"),
    }
}
