//! Screenshot annotation and page description. Labels are assigned to the
//! interactive widgets of the pruned tree in pre-order, 1..N; the overlay
//! draws one numbered box per label.

use super::prune::interactive_widgets;
use super::raster::{Canvas, FORMAT_PPM};
use crate::model::{GuiPage, Widget};
use std::collections::BTreeMap;

const BOX_COLOR: [u8; 3] = [220, 30, 30];

#[derive(Debug, Clone)]
pub struct AnnotatedPage {
    pub base: GuiPage,
    /// Screenshot bytes with numbered boxes; equals the base screenshot when
    /// there is nothing to annotate or the format is opaque.
    pub overlay: Vec<u8>,
    /// Label -> node path in the original page tree. Bijective onto the
    /// interactive widgets of the pruned tree, labels contiguous from 1.
    pub index_map: BTreeMap<u32, Vec<usize>>,
}

impl AnnotatedPage {
    pub fn label_for(&self, node_path: &[usize]) -> Option<u32> {
        self.index_map
            .iter()
            .find(|(_, p)| p.as_slice() == node_path)
            .map(|(l, _)| *l)
    }
}

/// Draw one numbered box per interactive visible widget of the pruned tree.
/// Deterministic: equal inputs produce byte-identical overlays. Only the
/// simulator's PPM format is drawable; opaque formats keep the base bytes.
pub fn annotate_screenshot(page: &GuiPage, pruned: Option<&Widget>) -> AnnotatedPage {
    let widgets = pruned.map(interactive_widgets).unwrap_or_default();
    let mut index_map = BTreeMap::new();
    for (i, w) in widgets.iter().enumerate() {
        index_map.insert(i as u32 + 1, w.node_path.clone());
    }

    let overlay = if widgets.is_empty() || page.screenshot.format != FORMAT_PPM {
        page.screenshot.data.clone()
    } else {
        match Canvas::decode(&page.screenshot.data) {
            None => page.screenshot.data.clone(),
            Some(mut canvas) => {
                for (i, w) in widgets.iter().enumerate() {
                    canvas.stroke_rect(w.bounds, 2, BOX_COLOR);
                    canvas.draw_number(
                        w.bounds.x1 + 4,
                        w.bounds.y1 + 4,
                        i as u32 + 1,
                        3,
                        BOX_COLOR,
                    );
                }
                canvas.encode()
            }
        }
    };

    AnnotatedPage {
        base: page.clone(),
        overlay,
        index_map,
    }
}

/// One line per interactive widget: `label N: <role> '<text|content_desc>'
/// at <region>`. Region is a 3x3 grid over the root extent.
pub fn describe_page(pruned: Option<&Widget>) -> String {
    let Some(root) = pruned else {
        return String::new();
    };
    let extent = root.bounds;
    interactive_widgets(root)
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let label_text = if w.text.is_empty() {
                &w.content_desc
            } else {
                &w.text
            };
            format!(
                "label {}: {} '{}' at {}",
                i + 1,
                widget_role(&w.class_name),
                label_text,
                region(w, extent.x2.max(1), extent.y2.max(1)),
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Indented text rendering of a pruned tree for prompts, with annotation
/// labels inlined where the index map has them.
pub fn render_dom(pruned: &Widget, index_map: &BTreeMap<u32, Vec<usize>>) -> String {
    fn walk(w: &Widget, depth: usize, index_map: &BTreeMap<u32, Vec<usize>>, out: &mut String) {
        let label = index_map
            .iter()
            .find(|(_, p)| p.as_slice() == w.node_path.as_slice())
            .map(|(l, _)| format!("[{l}] "))
            .unwrap_or_default();
        out.push_str(&"  ".repeat(depth));
        out.push_str(&format!(
            "- {label}{} id={:?} text={:?} desc={:?}{}\n",
            w.class_name.rsplit('.').next().unwrap_or(&w.class_name),
            w.resource_id,
            w.text,
            w.content_desc,
            if w.is_interactive() { " (interactive)" } else { "" },
        ));
        for c in &w.children {
            walk(c, depth + 1, index_map, out);
        }
    }
    let mut out = String::new();
    walk(pruned, 0, index_map, &mut out);
    out
}

fn widget_role(class_name: &str) -> &'static str {
    let last = class_name.rsplit('.').next().unwrap_or(class_name);
    if last.contains("EditText") {
        "input"
    } else if last.contains("ImageButton") || last.contains("Button") {
        "button"
    } else if last.contains("CheckBox") {
        "checkbox"
    } else if last.contains("Switch") {
        "switch"
    } else if last.contains("SeekBar") {
        "slider"
    } else if last.contains("Image") {
        "image"
    } else if last.contains("RecyclerView") || last.contains("ListView") {
        "list"
    } else if last.contains("Text") {
        "text"
    } else {
        "widget"
    }
}

fn region(w: &Widget, screen_w: u32, screen_h: u32) -> String {
    let (cx, cy) = w.bounds.center();
    let col = match (cx * 3 / screen_w).min(2) {
        0 => "left",
        1 => "center",
        _ => "right",
    };
    let row = match (cy * 3 / screen_h).min(2) {
        0 => "top",
        1 => "middle",
        _ => "bottom",
    };
    format!("{row}-{col}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bounds, WidgetFlags};

    fn widget(class: &str, text: &str, desc: &str, bounds: Bounds, interactive: bool) -> Widget {
        Widget {
            node_path: Vec::new(),
            resource_id: String::new(),
            text: text.to_string(),
            content_desc: desc.to_string(),
            class_name: class.to_string(),
            bounds,
            flags: WidgetFlags {
                clickable: interactive,
                enabled: true,
                visible: true,
                ..Default::default()
            },
            children: Vec::new(),
        }
    }

    fn page_with(children: Vec<Widget>) -> (GuiPage, Widget) {
        let mut root = widget(
            "android.widget.FrameLayout",
            "",
            "",
            Bounds::new(0, 0, 90, 90),
            false,
        );
        root.children = children;
        root.assign_node_paths();
        let shot = super::super::sim::render_screenshot(&root, 90, 90);
        let page = GuiPage {
            sequence_no: 1,
            activity: "main".into(),
            root: root.clone(),
            screenshot: shot,
        };
        (page, root)
    }

    #[test]
    fn three_buttons_get_contiguous_labels() {
        let (page, root) = page_with(vec![
            widget("android.widget.Button", "A", "", Bounds::new(0, 0, 20, 20), true),
            widget("android.widget.Button", "B", "", Bounds::new(30, 0, 50, 20), true),
            widget("android.widget.Button", "C", "", Bounds::new(60, 0, 80, 20), true),
        ]);
        let annotated = annotate_screenshot(&page, Some(&root));
        assert_eq!(
            annotated.index_map.keys().copied().collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert_eq!(annotated.index_map[&2], vec![1]);
        assert_ne!(annotated.overlay, page.screenshot.data);
    }

    #[test]
    fn zero_interactive_widgets_keeps_base_bytes() {
        let (page, root) = page_with(vec![widget(
            "android.widget.TextView",
            "hello",
            "",
            Bounds::new(0, 0, 20, 20),
            false,
        )]);
        let annotated = annotate_screenshot(&page, Some(&root));
        assert!(annotated.index_map.is_empty());
        assert_eq!(annotated.overlay, page.screenshot.data);
    }

    #[test]
    fn annotation_is_deterministic() {
        let (page, root) = page_with(vec![widget(
            "android.widget.Button",
            "GO",
            "",
            Bounds::new(10, 10, 40, 30),
            true,
        )]);
        let a = annotate_screenshot(&page, Some(&root));
        let b = annotate_screenshot(&page, Some(&root));
        assert_eq!(a.overlay, b.overlay);
    }

    #[test]
    fn describe_centered_button() {
        let (_, root) = page_with(vec![widget(
            "android.widget.Button",
            "CALCULATE",
            "",
            Bounds::new(30, 30, 60, 60),
            true,
        )]);
        assert_eq!(
            describe_page(Some(&root)),
            "label 1: button 'CALCULATE' at middle-center"
        );
    }

    #[test]
    fn describe_falls_back_to_content_desc() {
        let (_, root) = page_with(vec![{
            let mut w = widget(
                "android.widget.EditText",
                "",
                "bill amount",
                Bounds::new(0, 0, 30, 20),
                false,
            );
            w.flags.editable = true;
            w
        }]);
        assert_eq!(
            describe_page(Some(&root)),
            "label 1: input 'bill amount' at top-left"
        );
    }

    #[test]
    fn describe_of_empty_tree_is_empty() {
        assert_eq!(describe_page(None), "");
    }
}
