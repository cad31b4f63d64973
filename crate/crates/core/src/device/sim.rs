//! Deterministic app simulator: applies transitions to typed state and
//! renders pages as widget trees plus PPM screenshots. Equal (model, state,
//! action) always yields equal effects, trees, and screenshot bytes.

use super::app_model::{AppModel, Effect, VarType, VarValue};
use super::raster::{widget_fill, Canvas, FORMAT_PPM};
use crate::model::{Action, ActionKind, GuiPage, Screenshot, Widget};
use std::collections::BTreeMap;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct SimState {
    pub model: Arc<AppModel>,
    pub current_page: String,
    pub bindings: BTreeMap<String, VarValue>,
}

impl SimState {
    pub fn new(model: Arc<AppModel>) -> SimState {
        let current_page = model.initial_page_id().to_string();
        let bindings = model.initial_bindings();
        SimState {
            model,
            current_page,
            bindings,
        }
    }

    pub fn reset(&mut self) {
        self.current_page = self.model.initial_page_id().to_string();
        self.bindings = self.model.initial_bindings();
    }

    pub fn activity(&self) -> String {
        self.model.pages[&self.current_page]
            .activity
            .clone()
            .unwrap_or_else(|| self.current_page.clone())
    }

    pub fn build_tree(&self) -> Widget {
        self.model.build_tree(&self.current_page, &self.bindings)
    }

    pub fn render_page(&self, sequence_no: u64) -> GuiPage {
        let root = self.build_tree();
        let screenshot = render_screenshot(&root, self.model.screen.w, self.model.screen.h);
        GuiPage {
            sequence_no,
            activity: self.activity(),
            root,
            screenshot,
        }
    }

    /// Inject one action. Returns (executed, failure_reason).
    pub fn apply(&mut self, action: &Action) -> (bool, String) {
        let tree = self.build_tree();
        let target = match &action.selector {
            Some(sel) => match sel.resolve(&tree) {
                Some(w) => Some(w.node_path.clone()),
                None => return (false, "selector unresolved".to_string()),
            },
            None => {
                if action.kind.needs_selector() {
                    return (false, format!("{} requires a selector", action.kind));
                }
                None
            }
        };

        let transition = self.model.transitions.iter().find(|t| {
            if t.page != self.current_page || t.action != action.kind {
                return false;
            }
            let selector_matches = match (&t.selector, &target) {
                (Some(tsel), Some(path)) => {
                    tsel.resolve(&tree).map(|w| &w.node_path) == Some(path)
                }
                (None, None) => true,
                _ => false,
            };
            let payload_matches = match &t.payload {
                Some(p) => action.payload.as_deref() == Some(p.as_str()),
                None => true,
            };
            selector_matches && payload_matches
        });

        if let Some(t) = transition {
            let effects = t.effects.clone();
            for effect in &effects {
                self.apply_effect(effect);
            }
            return (true, String::new());
        }

        // No scripted transition: built-in behaviour.
        match action.kind {
            ActionKind::SetText => {
                let path = target.expect("set_text resolved above");
                let widget = tree.descendant(&path).expect("resolved path");
                if !widget.flags.editable {
                    return (false, "widget is not editable".to_string());
                }
                let var = self
                    .template_var_for(&path)
                    .expect("editable widgets bind a variable");
                let text = action.payload.clone().unwrap_or_default();
                let decl_ty = self.model.variables[&var].ty;
                match decl_ty {
                    VarType::String => {
                        self.bindings.insert(var, VarValue::Str(text));
                    }
                    VarType::Decimal => match text.parse() {
                        Ok(d) => {
                            self.bindings.insert(var, VarValue::Dec(d));
                        }
                        Err(_) => return (false, format!("\"{text}\" is not a decimal")),
                    },
                    VarType::Boolean => return (false, "cannot type into a boolean".to_string()),
                }
                (true, String::new())
            }
            // Resolvable target (or selector-less kind) with no transition:
            // the injection happens but the app does not react.
            _ => (true, String::new()),
        }
    }

    /// The variable bound to a page widget's text, looked up by node path.
    fn template_var_for(&self, path: &[usize]) -> Option<String> {
        let idx = *path.first()?;
        let page = &self.model.pages[&self.current_page];
        page.widgets
            .get(idx)?
            .text
            .var_name()
            .map(str::to_string)
    }

    fn apply_effect(&mut self, effect: &Effect) {
        match effect {
            Effect::Set {
                var,
                value,
                expr,
                from,
            } => {
                let ty = self.model.variables[var].ty;
                let raw_text = if let Some(raw) = value {
                    Some(raw.clone())
                } else {
                    from.as_ref()
                        .map(|src| self.bindings.get(src).map(VarValue::render).unwrap_or_default())
                };
                let next = if let Some(raw) = raw_text {
                    match ty {
                        VarType::String => VarValue::Str(raw),
                        VarType::Decimal => {
                            VarValue::Dec(raw.parse().unwrap_or(super::decimal::Decimal2::ZERO))
                        }
                        VarType::Boolean => VarValue::Bool(raw == "true"),
                    }
                } else {
                    let ast = super::app_model::parse_expr(expr.as_ref().expect("validated"))
                        .expect("validated expression");
                    let result = ast.eval(&self.bindings).unwrap_or(super::decimal::Decimal2::ZERO);
                    match ty {
                        VarType::Decimal => VarValue::Dec(result),
                        VarType::String => VarValue::Str(result.to_string()),
                        VarType::Boolean => VarValue::Bool(result != super::decimal::Decimal2::ZERO),
                    }
                };
                self.bindings.insert(var.clone(), next);
            }
            Effect::AppendDigit { var, digit } => {
                if let Some(VarValue::Str(s)) = self.bindings.get_mut(var) {
                    s.push_str(digit);
                }
            }
            Effect::Goto { page } => {
                self.current_page = page.clone();
            }
            Effect::Toggle { var } => {
                if let Some(VarValue::Bool(b)) = self.bindings.get_mut(var) {
                    *b = !*b;
                }
            }
        }
    }
}

/// Solid background, one filled rectangle per visible widget in pre-order,
/// 1-pixel black border. No glyphs.
pub fn render_screenshot(root: &Widget, width: u32, height: u32) -> Screenshot {
    let mut canvas = Canvas::new(width, height, [255, 255, 255]);
    for w in root.iter_preorder() {
        if !w.flags.visible {
            continue;
        }
        canvas.fill_rect(w.bounds, widget_fill(&w.class_name, &w.text));
        canvas.stroke_rect(w.bounds, 1, [0, 0, 0]);
    }
    Screenshot {
        width,
        height,
        format: FORMAT_PPM.to_string(),
        data: canvas.encode(),
    }
}
