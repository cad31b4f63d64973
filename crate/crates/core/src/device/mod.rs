//! Uniform device/app abstraction: a live automation-bridge backend and a
//! deterministic simulator behind one session type, plus the page-context
//! operations (pruning, annotation, description) prompts are built from.

pub mod annotate;
pub mod app_model;
pub mod decimal;
pub mod live;
pub mod prune;
pub mod raster;
pub mod replay;
pub mod sim;

pub use annotate::{annotate_screenshot, describe_page, AnnotatedPage};
pub use app_model::{load_app_model, AppModel, AppModelError};
pub use prune::prune_dom;
pub use replay::{record_execution_log, replay_test, ReplayReport};

use crate::model::{Action, GuiPage, Widget};
use live::LiveBridgeClient;
use sim::SimState;
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum DeviceError {
    #[error("bridge transport failure: {0}")]
    Transport(String),
    #[error("hierarchy parse failure: {0}")]
    HierarchyParse(String),
    #[error("source test does not replay on its own app: {0}")]
    SourceReplay(String),
}

/// Outcome of one injected action. `executed == false` always leaves the
/// page unchanged (`after == before`).
#[derive(Debug, Clone)]
pub struct ExecutionOutcome {
    pub executed: bool,
    pub failure_reason: String,
    pub before: GuiPage,
    pub after: GuiPage,
}

enum Backend {
    Simulated(SimState),
    Live(LiveBridgeClient),
}

/// Single-owner handle on one app under test. The capture counter is
/// monotonic for the whole session, across resets.
pub struct DeviceSession {
    app_id: String,
    backend: Backend,
    captures: u64,
}

impl DeviceSession {
    pub fn simulated(app_id: impl Into<String>, model: Arc<AppModel>) -> DeviceSession {
        DeviceSession {
            app_id: app_id.into(),
            backend: Backend::Simulated(SimState::new(model)),
            captures: 0,
        }
    }

    pub fn live(app_id: impl Into<String>, base_url: impl Into<String>) -> DeviceSession {
        DeviceSession {
            app_id: app_id.into(),
            backend: Backend::Live(LiveBridgeClient::new(base_url)),
            captures: 0,
        }
    }

    pub fn app_id(&self) -> &str {
        &self.app_id
    }

    pub fn captures(&self) -> u64 {
        self.captures
    }

    /// Capture hierarchy and screenshot, incrementing the capture counter.
    pub fn capture_page(&mut self) -> Result<GuiPage, DeviceError> {
        self.captures += 1;
        match &mut self.backend {
            Backend::Simulated(state) => Ok(state.render_page(self.captures)),
            Backend::Live(client) => {
                let root = client.fetch_hierarchy()?;
                let png = client.fetch_screenshot()?;
                let (w, h) = (root.bounds.x2, root.bounds.y2);
                Ok(GuiPage {
                    sequence_no: self.captures,
                    activity: String::new(),
                    root,
                    screenshot: crate::model::Screenshot {
                        width: w,
                        height: h,
                        format: "png".to_string(),
                        data: png,
                    },
                })
            }
        }
    }

    /// Execute one action, capturing pages around the injection.
    pub fn execute_action(&mut self, action: &Action) -> Result<ExecutionOutcome, DeviceError> {
        let before = self.capture_page()?;
        let (executed, failure_reason) = match &mut self.backend {
            Backend::Simulated(state) => state.apply(action),
            Backend::Live(client) => {
                let injected = client.inject(action, &before.root)?;
                if injected {
                    (true, String::new())
                } else {
                    (false, "selector unresolved".to_string())
                }
            }
        };
        let after = if executed {
            self.capture_page()?
        } else {
            before.clone()
        };
        Ok(ExecutionOutcome {
            executed,
            failure_reason,
            before,
            after,
        })
    }

    /// Reset the app to its initial state (bindings and page for the
    /// simulator, app restart for the bridge).
    pub fn reset(&mut self) -> Result<(), DeviceError> {
        match &mut self.backend {
            Backend::Simulated(state) => {
                state.reset();
                Ok(())
            }
            Backend::Live(client) => client.restart_app(),
        }
    }

    /// Reset, then execute actions in order, stopping at the first one that
    /// does not execute.
    pub fn replay_prefix(&mut self, actions: &[Action]) -> Result<Vec<ExecutionOutcome>, DeviceError> {
        self.reset()?;
        let mut outcomes = Vec::with_capacity(actions.len());
        for action in actions {
            let outcome = self.execute_action(action)?;
            let stop = !outcome.executed;
            outcomes.push(outcome);
            if stop {
                break;
            }
        }
        Ok(outcomes)
    }

    /// The current page tree without advancing the capture counter. Used by
    /// oracle checks that must not disturb capture numbering.
    pub fn peek_tree(&self) -> Result<Widget, DeviceError> {
        match &self.backend {
            Backend::Simulated(state) => Ok(state.build_tree()),
            Backend::Live(client) => client.fetch_hierarchy(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Selector;

    fn tipcalc_source_model() -> Arc<AppModel> {
        let doc = r#"{
            "screen": {"w": 200, "h": 400},
            "variables": {
                "bill": {"type": "string", "initial": ""},
                "tip": {"type": "decimal", "initial": "15.00"},
                "total": {"type": "decimal", "initial": "0.00"}
            },
            "pages": {
                "main": {
                    "activity": "KeypadActivity",
                    "widgets": [
                        {"resource_id": "bill_display", "text": {"var": "bill"}, "class_name": "android.widget.TextView",
                         "bounds": [10, 10, 190, 40], "flags": {"enabled": true, "visible": true}},
                        {"resource_id": "total", "text": {"var": "total"}, "class_name": "android.widget.TextView",
                         "bounds": [10, 50, 190, 80], "flags": {"enabled": true, "visible": true}},
                        {"resource_id": "btn_5", "text": "5", "class_name": "android.widget.Button",
                         "bounds": [10, 100, 60, 140], "flags": {"clickable": true, "enabled": true, "visible": true}},
                        {"resource_id": "btn_6", "text": "6", "class_name": "android.widget.Button",
                         "bounds": [70, 100, 120, 140], "flags": {"clickable": true, "enabled": true, "visible": true}},
                        {"resource_id": "btn_0", "text": "0", "class_name": "android.widget.Button",
                         "bounds": [130, 100, 180, 140], "flags": {"clickable": true, "enabled": true, "visible": true}}
                    ]
                }
            },
            "transitions": [
                {"page": "main", "selector": {"resource_id": "btn_5"}, "action": "tap",
                 "effects": [{"append_digit": {"var": "bill", "digit": "5"}},
                             {"set": {"var": "total", "expr": "bill / 100 * (1 + tip / 100)"}}]},
                {"page": "main", "selector": {"resource_id": "btn_6"}, "action": "tap",
                 "effects": [{"append_digit": {"var": "bill", "digit": "6"}},
                             {"set": {"var": "total", "expr": "bill / 100 * (1 + tip / 100)"}}]},
                {"page": "main", "selector": {"resource_id": "btn_0"}, "action": "tap",
                 "effects": [{"append_digit": {"var": "bill", "digit": "0"}},
                             {"set": {"var": "total", "expr": "bill / 100 * (1 + tip / 100)"}}]}
            ],
            "initial_page": "main"
        }"#;
        Arc::new(load_app_model(doc.as_bytes()).unwrap())
    }

    fn tipcalc_target_model() -> Arc<AppModel> {
        let doc = r#"{
            "screen": {"w": 200, "h": 400},
            "variables": {
                "bill": {"type": "string", "initial": ""},
                "tip": {"type": "decimal", "initial": "15.00"},
                "total": {"type": "decimal", "initial": "0.00"}
            },
            "pages": {
                "main": {
                    "widgets": [
                        {"resource_id": "bill", "text": {"var": "bill"}, "content_desc": "bill amount",
                         "class_name": "android.widget.EditText", "bounds": [10, 10, 190, 50],
                         "flags": {"editable": true, "enabled": true, "visible": true}},
                        {"resource_id": "calculate", "text": "CALCULATE", "class_name": "android.widget.Button",
                         "bounds": [10, 60, 190, 100], "flags": {"clickable": true, "enabled": true, "visible": true}},
                        {"resource_id": "total", "text": {"var": "total"}, "class_name": "android.widget.TextView",
                         "bounds": [10, 110, 190, 150], "flags": {"enabled": true, "visible": true}}
                    ]
                }
            },
            "transitions": [
                {"page": "main", "selector": {"resource_id": "calculate"}, "action": "tap",
                 "effects": [{"set": {"var": "total", "expr": "bill * (1 + tip / 100)"}}]}
            ],
            "initial_page": "main"
        }"#;
        Arc::new(load_app_model(doc.as_bytes()).unwrap())
    }

    #[test]
    fn initial_capture_shows_empty_bill_and_calculate() {
        let mut session = DeviceSession::simulated("tipcalc_target", tipcalc_target_model());
        let page = session.capture_page().unwrap();
        let bill = Selector::by_resource_id("bill").resolve(&page.root).unwrap();
        assert_eq!(bill.text, "");
        assert!(bill.flags.editable);
        assert!(Selector::by_text("CALCULATE").resolve(&page.root).is_some());
    }

    #[test]
    fn consecutive_captures_identical_trees_and_bytes() {
        let mut session = DeviceSession::simulated("tipcalc_target", tipcalc_target_model());
        let a = session.capture_page().unwrap();
        let b = session.capture_page().unwrap();
        assert_eq!(a.root, b.root);
        assert_eq!(a.screenshot.data, b.screenshot.data);
        assert!(b.sequence_no > a.sequence_no);
    }

    #[test]
    fn set_text_updates_bill_field() {
        let mut session = DeviceSession::simulated("tipcalc_target", tipcalc_target_model());
        let outcome = session
            .execute_action(&Action::set_text(Selector::by_resource_id("bill"), "56.60"))
            .unwrap();
        assert!(outcome.executed);
        let bill = Selector::by_resource_id("bill").resolve(&outcome.after.root).unwrap();
        assert_eq!(bill.text, "56.60");
    }

    #[test]
    fn keypad_tap_appends_digit() {
        let mut session = DeviceSession::simulated("tipcalc_source", tipcalc_source_model());
        let outcome = session
            .execute_action(&Action::tap(Selector::by_text("5")))
            .unwrap();
        assert!(outcome.executed);
        let display = Selector::by_resource_id("bill_display")
            .resolve(&outcome.after.root)
            .unwrap();
        assert_eq!(display.text, "5");
    }

    #[test]
    fn calculate_produces_exact_total() {
        let mut session = DeviceSession::simulated("tipcalc_target", tipcalc_target_model());
        session
            .execute_action(&Action::set_text(Selector::by_resource_id("bill"), "56.60"))
            .unwrap();
        let outcome = session
            .execute_action(&Action::tap(Selector::by_resource_id("calculate")))
            .unwrap();
        let total = Selector::by_resource_id("total").resolve(&outcome.after.root).unwrap();
        assert_eq!(total.text, "65.09");
    }

    #[test]
    fn keypad_sequence_reaches_paper_total() {
        let mut session = DeviceSession::simulated("tipcalc_source", tipcalc_source_model());
        for digit in ["5", "6", "6", "0"] {
            let outcome = session
                .execute_action(&Action::tap(Selector::by_text(digit)))
                .unwrap();
            assert!(outcome.executed);
        }
        let tree = session.peek_tree().unwrap();
        let total = Selector::by_resource_id("total").resolve(&tree).unwrap();
        assert_eq!(total.text, "65.09");
    }

    #[test]
    fn unresolved_selector_fails_without_state_change() {
        let mut session = DeviceSession::simulated("tipcalc_target", tipcalc_target_model());
        let outcome = session
            .execute_action(&Action::tap(Selector::by_text("NO SUCH BUTTON")))
            .unwrap();
        assert!(!outcome.executed);
        assert_eq!(outcome.failure_reason, "selector unresolved");
        assert_eq!(outcome.before.root, outcome.after.root);
        assert_eq!(outcome.before.screenshot.data, outcome.after.screenshot.data);
    }

    #[test]
    fn replay_prefix_is_deterministic() {
        let actions = vec![
            Action::set_text(Selector::by_resource_id("bill"), "56.60"),
            Action::tap(Selector::by_resource_id("calculate")),
        ];
        let mut session = DeviceSession::simulated("tipcalc_target", tipcalc_target_model());
        let first = session.replay_prefix(&actions).unwrap();
        let second = session.replay_prefix(&actions).unwrap();
        assert_eq!(first.len(), 2);
        assert_eq!(first.last().unwrap().after.root, second.last().unwrap().after.root);
        assert_eq!(
            first.last().unwrap().after.screenshot.data,
            second.last().unwrap().after.screenshot.data
        );
    }

    #[test]
    fn replay_of_empty_prefix_resets_to_initial() {
        let mut session = DeviceSession::simulated("tipcalc_target", tipcalc_target_model());
        session
            .execute_action(&Action::set_text(Selector::by_resource_id("bill"), "9"))
            .unwrap();
        let outcomes = session.replay_prefix(&[]).unwrap();
        assert!(outcomes.is_empty());
        let tree = session.peek_tree().unwrap();
        assert_eq!(Selector::by_resource_id("bill").resolve(&tree).unwrap().text, "");
    }

    #[test]
    fn replay_truncates_at_unresolvable_action() {
        let actions = vec![
            Action::set_text(Selector::by_resource_id("bill"), "1.00"),
            Action::tap(Selector::by_text("GHOST")),
            Action::tap(Selector::by_resource_id("calculate")),
        ];
        let mut session = DeviceSession::simulated("tipcalc_target", tipcalc_target_model());
        let outcomes = session.replay_prefix(&actions).unwrap();
        assert_eq!(outcomes.len(), 2);
        assert!(!outcomes[1].executed);
        assert_eq!(outcomes[1].failure_reason, "selector unresolved");
    }
}
