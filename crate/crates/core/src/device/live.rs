//! Thin client for a live automation bridge: UI-hierarchy dumps
//! (UIAutomator XML) plus input injection over HTTP. Desk-scale runs never
//! need this backend; the wire contract is exercised by parser tests.

use super::DeviceError;
use crate::model::{Action, ActionKind, Bounds, Widget, WidgetFlags};

/// Bridge endpoints, relative to a base URL:
///   GET  /hierarchy    -> UIAutomator-dump XML
///   GET  /screenshot   -> PNG bytes
///   POST /input        -> {"kind", "x"?, "y"?, "x2"?, "y2"?, "text"?, "key"?}
///   POST /app/restart  -> resets the app to its launch state
#[derive(Debug, Clone)]
pub struct LiveBridgeClient {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl LiveBridgeClient {
    pub fn new(base_url: impl Into<String>) -> LiveBridgeClient {
        LiveBridgeClient {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn fetch_hierarchy(&self) -> Result<Widget, DeviceError> {
        let xml = self
            .client
            .get(format!("{}/hierarchy", self.base_url))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.text())
            .map_err(|e| DeviceError::Transport(e.to_string()))?;
        parse_hierarchy(&xml)
    }

    pub fn fetch_screenshot(&self) -> Result<Vec<u8>, DeviceError> {
        let bytes = self
            .client
            .get(format!("{}/screenshot", self.base_url))
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.bytes())
            .map_err(|e| DeviceError::Transport(e.to_string()))?;
        Ok(bytes.to_vec())
    }

    pub fn restart_app(&self) -> Result<(), DeviceError> {
        self.client
            .post(format!("{}/app/restart", self.base_url))
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| DeviceError::Transport(e.to_string()))?;
        Ok(())
    }

    /// Inject one action, resolving the selector to coordinates on `tree`.
    pub fn inject(&self, action: &Action, tree: &Widget) -> Result<bool, DeviceError> {
        let body = match injection_body(action, tree) {
            Some(b) => b,
            None => return Ok(false), // selector unresolved
        };
        self.client
            .post(format!("{}/input", self.base_url))
            .json(&body)
            .send()
            .and_then(|r| r.error_for_status())
            .map_err(|e| DeviceError::Transport(e.to_string()))?;
        Ok(true)
    }
}

fn injection_body(action: &Action, tree: &Widget) -> Option<serde_json::Value> {
    use serde_json::json;
    let target = match &action.selector {
        Some(sel) => Some(sel.resolve(tree)?),
        None => None,
    };
    let center = target.map(|w| w.bounds.center());
    Some(match action.kind {
        ActionKind::Tap | ActionKind::LongTap => {
            let (x, y) = center?;
            json!({"kind": action.kind, "x": x, "y": y})
        }
        ActionKind::SetText => {
            let (x, y) = center?;
            json!({"kind": "set_text", "x": x, "y": y, "text": action.payload.clone().unwrap_or_default()})
        }
        ActionKind::Swipe => {
            let w = target?;
            let (cx, cy) = w.bounds.center();
            let (dx, dy): (i64, i64) = match action.payload.as_deref() {
                Some("up") => (0, -(w.bounds.height() as i64) / 2),
                Some("down") => (0, w.bounds.height() as i64 / 2),
                Some("left") => (-(w.bounds.width() as i64) / 2, 0),
                _ => (w.bounds.width() as i64 / 2, 0),
            };
            json!({
                "kind": "swipe",
                "x": cx, "y": cy,
                "x2": (cx as i64 + dx).max(0), "y2": (cy as i64 + dy).max(0),
            })
        }
        ActionKind::KeyEvent => json!({"kind": "key_event", "key": action.payload.clone().unwrap_or_default()}),
        ActionKind::Wait => json!({"kind": "wait", "ms": action.payload.clone().unwrap_or_default()}),
    })
}

/// Parse a UIAutomator dump into a widget tree. Multiple top-level nodes are
/// wrapped under a synthetic root.
pub fn parse_hierarchy(xml: &str) -> Result<Widget, DeviceError> {
    let doc = roxmltree::Document::parse(xml)
        .map_err(|e| DeviceError::HierarchyParse(e.to_string()))?;
    let hierarchy = doc.root_element();
    let mut roots: Vec<Widget> = hierarchy
        .children()
        .filter(|n| n.is_element())
        .map(parse_node)
        .collect::<Result<_, _>>()?;
    let mut root = match roots.len() {
        0 => return Err(DeviceError::HierarchyParse("empty hierarchy".to_string())),
        1 => roots.remove(0),
        _ => {
            let bounds = roots
                .iter()
                .fold(Bounds::new(u32::MAX, u32::MAX, 0, 0), |acc, w| Bounds {
                    x1: acc.x1.min(w.bounds.x1),
                    y1: acc.y1.min(w.bounds.y1),
                    x2: acc.x2.max(w.bounds.x2),
                    y2: acc.y2.max(w.bounds.y2),
                });
            Widget {
                node_path: Vec::new(),
                resource_id: String::new(),
                text: String::new(),
                content_desc: String::new(),
                class_name: "android.widget.FrameLayout".to_string(),
                bounds,
                flags: WidgetFlags {
                    enabled: true,
                    visible: true,
                    ..Default::default()
                },
                children: roots,
            }
        }
    };
    root.assign_node_paths();
    Ok(root)
}

fn parse_node(node: roxmltree::Node<'_, '_>) -> Result<Widget, DeviceError> {
    let attr = |name: &str| node.attribute(name).unwrap_or("");
    let flag = |name: &str| attr(name) == "true";
    let class_name = attr("class").to_string();
    let bounds = parse_bounds(attr("bounds"))
        .ok_or_else(|| DeviceError::HierarchyParse(format!("bad bounds {:?}", attr("bounds"))))?;
    let children = node
        .children()
        .filter(|n| n.is_element())
        .map(parse_node)
        .collect::<Result<_, _>>()?;
    Ok(Widget {
        node_path: Vec::new(),
        resource_id: attr("resource-id").to_string(),
        text: attr("text").to_string(),
        content_desc: attr("content-desc").to_string(),
        flags: WidgetFlags {
            clickable: flag("clickable"),
            long_clickable: flag("long-clickable"),
            editable: flag("editable") || class_name.contains("EditText"),
            scrollable: flag("scrollable"),
            checkable: flag("checkable"),
            enabled: flag("enabled"),
            // Dumps only contain on-screen nodes unless they opt in.
            visible: node.attribute("visible-to-user").map_or(true, |v| v == "true"),
        },
        class_name,
        bounds,
        children,
    })
}

/// `"[x1,y1][x2,y2]"`, clamping negatives to zero.
fn parse_bounds(raw: &str) -> Option<Bounds> {
    let nums: Vec<i64> = raw
        .split(|c| ['[', ']', ','].contains(&c))
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<i64>())
        .collect::<Result<_, _>>()
        .ok()?;
    if nums.len() != 4 {
        return None;
    }
    let clamp = |v: i64| v.max(0) as u32;
    Some(Bounds::new(clamp(nums[0]), clamp(nums[1]), clamp(nums[2]), clamp(nums[3])))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DUMP: &str = r#"<?xml version='1.0' encoding='UTF-8' standalone='yes' ?>
<hierarchy rotation="0">
  <node index="0" text="" resource-id="" class="android.widget.FrameLayout" package="com.example"
        content-desc="" checkable="false" checked="false" clickable="false" enabled="true"
        focusable="false" focused="false" scrollable="false" long-clickable="false"
        password="false" selected="false" bounds="[0,0][1080,1920]">
    <node index="0" text="56.60" resource-id="com.example:id/bill" class="android.widget.EditText"
          package="com.example" content-desc="bill amount" checkable="false" checked="false"
          clickable="true" enabled="true" focusable="true" focused="true" scrollable="false"
          long-clickable="true" password="false" selected="false" bounds="[40,200][1040,320]"/>
    <node index="1" text="CALCULATE" resource-id="com.example:id/calc" class="android.widget.Button"
          package="com.example" content-desc="" checkable="false" checked="false" clickable="true"
          enabled="true" focusable="true" focused="false" scrollable="false" long-clickable="false"
          password="false" selected="false" bounds="[40,400][1040,520]"/>
  </node>
</hierarchy>"#;

    #[test]
    fn parses_uiautomator_dump() {
        let root = parse_hierarchy(DUMP).unwrap();
        assert_eq!(root.class_name, "android.widget.FrameLayout");
        assert_eq!(root.children.len(), 2);
        let bill = &root.children[0];
        assert_eq!(bill.resource_id, "com.example:id/bill");
        assert_eq!(bill.text, "56.60");
        assert_eq!(bill.content_desc, "bill amount");
        assert!(bill.flags.editable, "EditText implies editable");
        assert!(bill.flags.long_clickable);
        assert_eq!(bill.bounds, Bounds::new(40, 200, 1040, 320));
        assert_eq!(bill.node_path, vec![0]);
        let calc = &root.children[1];
        assert!(calc.flags.clickable);
        assert_eq!(calc.node_path, vec![1]);
    }

    #[test]
    fn bad_bounds_is_a_parse_error() {
        let xml = DUMP.replace("[40,200][1040,320]", "oops");
        let err = parse_hierarchy(&xml).unwrap_err();
        assert!(matches!(err, DeviceError::HierarchyParse(_)));
    }

    #[test]
    fn negative_bounds_clamp_to_zero() {
        assert_eq!(
            parse_bounds("[-8,-4][100,50]").unwrap(),
            Bounds::new(0, 0, 100, 50)
        );
    }

    #[test]
    fn injection_bodies_use_widget_centers() {
        let tree = parse_hierarchy(DUMP).unwrap();
        let action = Action::tap(crate::model::Selector::by_text("CALCULATE"));
        let body = injection_body(&action, &tree).unwrap();
        assert_eq!(body["kind"], "tap");
        assert_eq!(body["x"], 540);
        assert_eq!(body["y"], 460);
        let missing = Action::tap(crate::model::Selector::by_text("nope"));
        assert!(injection_body(&missing, &tree).is_none());
    }
}
