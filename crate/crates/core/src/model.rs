//! Shared domain types: widgets, pages, recorded tests, and the test-case
//! document codec. Everything here is an immutable value; operations are pure.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Pixel rectangle, inclusive corners, `x1 <= x2` and `y1 <= y2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bounds {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl Bounds {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        Bounds { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> u32 {
        self.x2.saturating_sub(self.x1)
    }

    pub fn height(&self) -> u32 {
        self.y2.saturating_sub(self.y1)
    }

    pub fn center(&self) -> (u32, u32) {
        (self.x1 + self.width() / 2, self.y1 + self.height() / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct WidgetFlags {
    pub clickable: bool,
    pub long_clickable: bool,
    pub editable: bool,
    pub scrollable: bool,
    pub checkable: bool,
    pub enabled: bool,
    pub visible: bool,
}

/// One node of a captured UI hierarchy. `node_path` is the sequence of child
/// indices from the root; the root carries an empty path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widget {
    pub node_path: Vec<usize>,
    pub resource_id: String,
    pub text: String,
    pub content_desc: String,
    pub class_name: String,
    pub bounds: Bounds,
    pub flags: WidgetFlags,
    #[serde(default)]
    pub children: Vec<Widget>,
}

impl Widget {
    /// A widget a user can act on: any interaction flag set, and enabled.
    pub fn is_interactive(&self) -> bool {
        let f = &self.flags;
        f.enabled
            && (f.clickable || f.long_clickable || f.editable || f.scrollable || f.checkable)
    }

    /// Pre-order traversal over the whole subtree, self first.
    pub fn iter_preorder(&self) -> PreorderIter<'_> {
        PreorderIter { stack: vec![self] }
    }

    pub fn node_count(&self) -> usize {
        self.iter_preorder().count()
    }

    /// Follow a node path of child indices starting at this node.
    pub fn descendant(&self, path: &[usize]) -> Option<&Widget> {
        let mut cur = self;
        for &idx in path {
            cur = cur.children.get(idx)?;
        }
        Some(cur)
    }

    /// Recompute `node_path` on every node from the tree structure.
    pub fn assign_node_paths(&mut self) {
        fn walk(w: &mut Widget, path: &mut Vec<usize>) {
            w.node_path = path.clone();
            for (i, c) in w.children.iter_mut().enumerate() {
                path.push(i);
                walk(c, path);
                path.pop();
            }
        }
        walk(self, &mut Vec::new());
    }
}

pub struct PreorderIter<'a> {
    stack: Vec<&'a Widget>,
}

impl<'a> Iterator for PreorderIter<'a> {
    type Item = &'a Widget;

    fn next(&mut self) -> Option<&'a Widget> {
        let w = self.stack.pop()?;
        for c in w.children.iter().rev() {
            self.stack.push(c);
        }
        Some(w)
    }
}

/// Widget selector: a node path, or an attribute query. Resolution order is
/// node_path first, then resource_id, text, content_desc by exact string
/// equality; the first pre-order match wins.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Selector {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node_path: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resource_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub content_desc: Option<String>,
}

impl Selector {
    pub fn by_path(path: Vec<usize>) -> Self {
        Selector {
            node_path: Some(path),
            ..Default::default()
        }
    }

    pub fn by_resource_id(id: impl Into<String>) -> Self {
        Selector {
            resource_id: Some(id.into()),
            ..Default::default()
        }
    }

    pub fn by_text(text: impl Into<String>) -> Self {
        Selector {
            text: Some(text.into()),
            ..Default::default()
        }
    }

    pub fn by_content_desc(desc: impl Into<String>) -> Self {
        Selector {
            content_desc: Some(desc.into()),
            ..Default::default()
        }
    }

    pub fn is_attribute_query(&self) -> bool {
        self.node_path.is_none()
            && (self.resource_id.is_some() || self.text.is_some() || self.content_desc.is_some())
    }

    pub fn is_empty(&self) -> bool {
        self.node_path.is_none()
            && self.resource_id.is_none()
            && self.text.is_none()
            && self.content_desc.is_none()
    }

    /// Resolve against a widget tree. Returns the first match in pre-order.
    pub fn resolve<'a>(&self, root: &'a Widget) -> Option<&'a Widget> {
        if let Some(path) = &self.node_path {
            return root.descendant(path);
        }
        if let Some(id) = &self.resource_id {
            if let Some(w) = root.iter_preorder().find(|w| &w.resource_id == id) {
                return Some(w);
            }
        }
        if let Some(text) = &self.text {
            if let Some(w) = root.iter_preorder().find(|w| &w.text == text) {
                return Some(w);
            }
        }
        if let Some(desc) = &self.content_desc {
            if let Some(w) = root.iter_preorder().find(|w| &w.content_desc == desc) {
                return Some(w);
            }
        }
        None
    }

    /// Short human-readable description, used in stop conditions and traces.
    pub fn describe(&self) -> String {
        if let Some(path) = &self.node_path {
            return format!("the widget at node path {:?}", path);
        }
        if let Some(id) = &self.resource_id {
            return format!("the widget with resource id \"{id}\"");
        }
        if let Some(text) = &self.text {
            return format!("the widget with text \"{text}\"");
        }
        if let Some(desc) = &self.content_desc {
            return format!("the widget described as \"{desc}\"");
        }
        "an unspecified widget".to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Tap,
    LongTap,
    Swipe,
    SetText,
    KeyEvent,
    Wait,
}

impl ActionKind {
    pub fn needs_selector(&self) -> bool {
        matches!(
            self,
            ActionKind::Tap | ActionKind::LongTap | ActionKind::Swipe | ActionKind::SetText
        )
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ActionKind::Tap => "tap",
            ActionKind::LongTap => "long_tap",
            ActionKind::Swipe => "swipe",
            ActionKind::SetText => "set_text",
            ActionKind::KeyEvent => "key_event",
            ActionKind::Wait => "wait",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub kind: ActionKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selector: Option<Selector>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
}

impl Action {
    pub fn tap(selector: Selector) -> Self {
        Action {
            kind: ActionKind::Tap,
            selector: Some(selector),
            payload: None,
        }
    }

    pub fn long_tap(selector: Selector) -> Self {
        Action {
            kind: ActionKind::LongTap,
            selector: Some(selector),
            payload: None,
        }
    }

    pub fn swipe(selector: Selector, direction: impl Into<String>) -> Self {
        Action {
            kind: ActionKind::Swipe,
            selector: Some(selector),
            payload: Some(direction.into()),
        }
    }

    pub fn set_text(selector: Selector, text: impl Into<String>) -> Self {
        Action {
            kind: ActionKind::SetText,
            selector: Some(selector),
            payload: Some(text.into()),
        }
    }

    pub fn key_event(key: impl Into<String>) -> Self {
        Action {
            kind: ActionKind::KeyEvent,
            selector: None,
            payload: Some(key.into()),
        }
    }

    pub fn wait(millis: u64) -> Self {
        Action {
            kind: ActionKind::Wait,
            selector: None,
            payload: Some(millis.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Exists,
    TextEquals,
    TextContains,
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            OracleKind::Exists => "exists",
            OracleKind::TextEquals => "text_equals",
            OracleKind::TextContains => "text_contains",
        };
        f.write_str(s)
    }
}

/// Assertion over the GUI state: existence or text of an anchor widget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleEvent {
    pub kind: OracleKind,
    pub selector: Selector,
    pub expected: String,
}

impl OracleEvent {
    /// Evaluate against a page tree. Exists checks resolution; the text kinds
    /// compare the resolved widget's text exactly.
    pub fn evaluate(&self, root: &Widget) -> bool {
        match self.selector.resolve(root) {
            None => false,
            Some(w) => match self.kind {
                OracleKind::Exists => true,
                OracleKind::TextEquals => w.text == self.expected,
                OracleKind::TextContains => w.text.contains(&self.expected),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Action(Action),
    Oracle(OracleEvent),
}

impl Event {
    pub fn as_action(&self) -> Option<&Action> {
        match self {
            Event::Action(a) => Some(a),
            Event::Oracle(_) => None,
        }
    }

    pub fn as_oracle(&self) -> Option<&OracleEvent> {
        match self {
            Event::Oracle(o) => Some(o),
            Event::Action(_) => None,
        }
    }
}

/// A recorded interaction script with a terminal assertion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub app_id: String,
    pub category: String,
    pub functionality_id: String,
    pub events: Vec<Event>,
}

impl TestCase {
    pub fn actions(&self) -> impl Iterator<Item = (usize, &Action)> {
        self.events
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.as_action().map(|a| (i, a)))
    }

    pub fn action_count(&self) -> usize {
        self.actions().count()
    }

    /// The terminal oracle, when the test is well-formed.
    pub fn terminal_oracle(&self) -> Option<&OracleEvent> {
        self.events.last().and_then(Event::as_oracle)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screenshot {
    pub width: u32,
    pub height: u32,
    /// Format tag: "ppm" for simulator rasters, "png" for live captures.
    pub format: String,
    #[serde(with = "b64_bytes")]
    pub data: Vec<u8>,
}

mod b64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(data: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&STANDARD.encode(data))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(de)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

/// Captured UI hierarchy plus screenshot bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuiPage {
    pub sequence_no: u64,
    pub activity: String,
    pub root: Widget,
    pub screenshot: Screenshot,
}

/// Before/after page pairs recorded around each source action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualExecutionLog {
    pub entries: Vec<LogEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub before: GuiPage,
    pub after: GuiPage,
}

impl VisualExecutionLog {
    pub fn final_page(&self) -> Option<&GuiPage> {
        self.entries.last().map(|e| &e.after)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrationStatus {
    Completed,
    BudgetExhausted,
    Error,
}

/// One record of the migration run trace. `ts_ms` comes from the run clock
/// (logical under scripted backends, so traces reproduce byte-exactly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub ts_ms: u64,
    pub kind: String,
    pub payload: serde_json::Value,
}

/// Final product of one migration task: the generated test, the full trace,
/// and every page observed along the way.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MigrationResult {
    pub generated: TestCase,
    pub status: MigrationStatus,
    pub trace: Vec<TraceRecord>,
    pub recorded_pages: Vec<GuiPage>,
    pub wall_time_secs: f64,
    pub gateway_calls: u64,
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// A single invariant violation. Data, not an error: `validate_test_case`
/// never fails.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub event_index: Option<usize>,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.event_index {
            Some(i) => write!(f, "event {}: {}", i, self.rule),
            None => f.write_str(&self.rule),
        }
    }
}

fn violation(event_index: Option<usize>, rule: impl Into<String>) -> Violation {
    Violation {
        event_index,
        rule: rule.into(),
    }
}

const SWIPE_DIRECTIONS: [&str; 4] = ["up", "down", "left", "right"];

/// Check every TestCase/Action/Oracle invariant. Empty list iff valid.
pub fn validate_test_case(tc: &TestCase) -> Vec<Violation> {
    let mut out = Vec::new();
    if tc.events.is_empty() {
        out.push(violation(None, "test case must contain at least one event"));
        return out;
    }
    if tc.events.last().and_then(Event::as_oracle).is_none() {
        out.push(violation(
            Some(tc.events.len() - 1),
            "terminal event must be oracle",
        ));
    }
    for (i, event) in tc.events.iter().enumerate() {
        match event {
            Event::Action(a) => {
                if a.kind.needs_selector() && a.selector.is_none() {
                    out.push(violation(Some(i), format!("{} requires a selector", a.kind)));
                }
                if let Some(sel) = &a.selector {
                    if matches!(a.kind, ActionKind::KeyEvent | ActionKind::Wait) {
                        out.push(violation(
                            Some(i),
                            format!("{} must not carry a selector", a.kind),
                        ));
                    } else if sel.is_empty() {
                        out.push(violation(Some(i), "selector must not be empty"));
                    }
                }
                match a.kind {
                    ActionKind::SetText => {
                        if a.payload.is_none() {
                            out.push(violation(Some(i), "set_text requires payload"));
                        }
                    }
                    ActionKind::Swipe => match a.payload.as_deref() {
                        Some(d) if SWIPE_DIRECTIONS.contains(&d) => {}
                        Some(d) => out.push(violation(
                            Some(i),
                            format!("swipe direction must be up/down/left/right, got \"{d}\""),
                        )),
                        None => out.push(violation(Some(i), "swipe requires a direction payload")),
                    },
                    ActionKind::Wait => match a.payload.as_deref() {
                        Some(ms) if ms.parse::<u64>().is_ok() => {}
                        Some(ms) => out.push(violation(
                            Some(i),
                            format!("wait payload must be milliseconds, got \"{ms}\""),
                        )),
                        None => out.push(violation(Some(i), "wait requires a milliseconds payload")),
                    },
                    ActionKind::KeyEvent => {
                        if a.payload.is_none() {
                            out.push(violation(Some(i), "key_event requires a key name payload"));
                        }
                    }
                    _ => {}
                }
            }
            Event::Oracle(o) => {
                if !o.selector.is_attribute_query() {
                    out.push(violation(
                        Some(i),
                        "oracle selector must be an attribute query",
                    ));
                }
                match o.kind {
                    OracleKind::TextEquals | OracleKind::TextContains => {
                        if o.expected.is_empty() {
                            out.push(violation(
                                Some(i),
                                format!("{} requires non-empty expected", o.kind),
                            ));
                        }
                    }
                    OracleKind::Exists => {
                        if !o.expected.is_empty() {
                            out.push(violation(Some(i), "exists oracle must have empty expected"));
                        }
                    }
                }
            }
        }
    }
    out
}

/// Page-level invariants: root path empty, node paths unique and consistent,
/// bounds ordered. O(n) over the tree.
pub fn validate_page(page: &GuiPage) -> Vec<Violation> {
    let mut out = Vec::new();
    if !page.root.node_path.is_empty() {
        out.push(violation(None, "root node_path must be empty"));
    }
    let mut seen = std::collections::HashSet::new();
    for w in page.root.iter_preorder() {
        if !seen.insert(w.node_path.clone()) {
            out.push(violation(
                None,
                format!("duplicate node_path {:?}", w.node_path),
            ));
        }
        if w.bounds.x1 > w.bounds.x2 || w.bounds.y1 > w.bounds.y2 {
            out.push(violation(
                None,
                format!("bounds not ordered at node_path {:?}", w.node_path),
            ));
        }
        if page.root.descendant(&w.node_path) != Some(w) {
            out.push(violation(
                None,
                format!("node_path {:?} inconsistent with tree position", w.node_path),
            ));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Codec
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("malformed test-case document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("invalid test case: {}", format_violations(.0))]
    Invalid(Vec<Violation>),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(Violation::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parse a UTF-8 JSON test-case document and check its invariants.
pub fn load_test_case(document: &[u8]) -> Result<TestCase, CodecError> {
    let tc: TestCase = serde_json::from_slice(document)?;
    let violations = validate_test_case(&tc);
    if violations.is_empty() {
        Ok(tc)
    } else {
        Err(CodecError::Invalid(violations))
    }
}

/// Serialize to the test-case document format. Output re-parses to an equal
/// TestCase.
pub fn save_test_case(tc: &TestCase) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(tc).expect("test case serializes");
    out.push(b'\n');
    out
}
