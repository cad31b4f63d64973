//! Test replay on a device session: actions injected in order, oracle events
//! checked against the page current at that point.

use super::{DeviceError, DeviceSession, ExecutionOutcome};
use crate::model::{Event, GuiPage, LogEntry, TestCase, VisualExecutionLog};

#[derive(Debug, Clone)]
pub struct OracleCheck {
    pub event_index: usize,
    pub passed: bool,
}

#[derive(Debug)]
pub struct ReplayReport {
    pub outcomes: Vec<ExecutionOutcome>,
    pub oracle_checks: Vec<OracleCheck>,
    /// Every action executed and every oracle held.
    pub passed: bool,
    /// Why the replay failed, when it did.
    pub failure: Option<String>,
}

impl ReplayReport {
    pub fn final_page(&self) -> Option<&GuiPage> {
        self.outcomes.last().map(|o| &o.after)
    }
}

/// Reset the app and run a whole test case, actions and oracles both.
pub fn replay_test(session: &mut DeviceSession, tc: &TestCase) -> Result<ReplayReport, DeviceError> {
    session.reset()?;
    let mut report = ReplayReport {
        outcomes: Vec::new(),
        oracle_checks: Vec::new(),
        passed: true,
        failure: None,
    };
    for (i, event) in tc.events.iter().enumerate() {
        match event {
            Event::Action(action) => {
                let outcome = session.execute_action(action)?;
                let executed = outcome.executed;
                let reason = outcome.failure_reason.clone();
                report.outcomes.push(outcome);
                if !executed {
                    report.passed = false;
                    report.failure = Some(format!("action {i} not executable: {reason}"));
                    return Ok(report);
                }
            }
            Event::Oracle(oracle) => {
                let tree = session.peek_tree()?;
                let passed = oracle.evaluate(&tree);
                report.oracle_checks.push(OracleCheck {
                    event_index: i,
                    passed,
                });
                if !passed {
                    report.passed = false;
                    report.failure = Some(format!(
                        "oracle {i} failed: {} {} {:?}",
                        oracle.kind,
                        oracle.selector.describe(),
                        oracle.expected
                    ));
                    return Ok(report);
                }
            }
        }
    }
    Ok(report)
}

/// Produce the visual execution log of a source test by replaying it on the
/// source app: one before/after pair per action.
pub fn record_execution_log(
    session: &mut DeviceSession,
    tc: &TestCase,
) -> Result<VisualExecutionLog, DeviceError> {
    let report = replay_test(session, tc)?;
    if !report.passed {
        return Err(DeviceError::SourceReplay(
            report.failure.unwrap_or_else(|| "source test failed".to_string()),
        ));
    }
    Ok(VisualExecutionLog {
        entries: report
            .outcomes
            .into_iter()
            .map(|o| LogEntry {
                before: o.before,
                after: o.after,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{load_app_model, DeviceSession};
    use crate::model::{Action, Event, OracleEvent, OracleKind, Selector, TestCase};
    use std::sync::Arc;

    fn counter_model() -> DeviceSession {
        let doc = r#"{
            "screen": {"w": 100, "h": 100},
            "variables": {"n": {"type": "string", "initial": ""}},
            "pages": {"main": {"widgets": [
                {"resource_id": "display", "text": {"var": "n"}, "class_name": "android.widget.TextView",
                 "bounds": [0, 0, 100, 20], "flags": {"enabled": true, "visible": true}},
                {"resource_id": "one", "text": "1", "class_name": "android.widget.Button",
                 "bounds": [0, 30, 40, 60], "flags": {"clickable": true, "enabled": true, "visible": true}}
            ]}},
            "transitions": [
                {"page": "main", "selector": {"resource_id": "one"}, "action": "tap",
                 "effects": [{"append_digit": {"var": "n", "digit": "1"}}]}
            ],
            "initial_page": "main"
        }"#;
        DeviceSession::simulated("counter", Arc::new(load_app_model(doc.as_bytes()).unwrap()))
    }

    fn test_case(expected: &str) -> TestCase {
        TestCase {
            app_id: "counter".into(),
            category: "demo".into(),
            functionality_id: "count".into(),
            events: vec![
                Event::Action(Action::tap(Selector::by_resource_id("one"))),
                Event::Action(Action::tap(Selector::by_resource_id("one"))),
                Event::Oracle(OracleEvent {
                    kind: OracleKind::TextEquals,
                    selector: Selector::by_resource_id("display"),
                    expected: expected.into(),
                }),
            ],
        }
    }

    #[test]
    fn replay_checks_actions_and_oracles() {
        let mut session = counter_model();
        let report = replay_test(&mut session, &test_case("11")).unwrap();
        assert!(report.passed);
        assert_eq!(report.outcomes.len(), 2);
        assert_eq!(report.oracle_checks.len(), 1);
    }

    #[test]
    fn failing_oracle_stops_replay() {
        let mut session = counter_model();
        let report = replay_test(&mut session, &test_case("99")).unwrap();
        assert!(!report.passed);
        assert!(report.failure.unwrap().contains("oracle 2 failed"));
    }

    #[test]
    fn log_has_one_entry_per_action() {
        let mut session = counter_model();
        let log = record_execution_log(&mut session, &test_case("11")).unwrap();
        assert_eq!(log.entries.len(), 2);
        let final_text = Selector::by_resource_id("display")
            .resolve(&log.final_page().unwrap().root)
            .unwrap()
            .text
            .clone();
        assert_eq!(final_text, "11");
    }
}
