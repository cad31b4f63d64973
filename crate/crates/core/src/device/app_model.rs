//! Deterministic app models: pages of widget templates, typed state
//! variables, and transitions with effects. A loaded model is the complete
//! behavioural description of a simulated app.

use super::decimal::Decimal2;
use crate::model::{ActionKind, Bounds, Selector, Widget, WidgetFlags};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarType {
    String,
    Decimal,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarValue {
    Str(String),
    Dec(Decimal2),
    Bool(bool),
}

impl VarValue {
    pub fn render(&self) -> String {
        match self {
            VarValue::Str(s) => s.clone(),
            VarValue::Dec(d) => d.to_string(),
            VarValue::Bool(b) => b.to_string(),
        }
    }

    fn parse(ty: VarType, raw: &str) -> Result<VarValue, String> {
        match ty {
            VarType::String => Ok(VarValue::Str(raw.to_string())),
            VarType::Decimal => raw
                .parse::<Decimal2>()
                .map(VarValue::Dec)
                .map_err(|e| e.to_string()),
            VarType::Boolean => match raw {
                "true" => Ok(VarValue::Bool(true)),
                "false" => Ok(VarValue::Bool(false)),
                other => Err(format!("not a boolean: \"{other}\"")),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarDecl {
    #[serde(rename = "type")]
    pub ty: VarType,
    pub initial: String,
}

/// Widget text is either a literal or a reference to a state variable,
/// optionally wrapped in a format string with a `{}` placeholder.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TextSpec {
    Literal(String),
    VarRef {
        var: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        format: Option<String>,
    },
}

impl TextSpec {
    pub fn var_name(&self) -> Option<&str> {
        match self {
            TextSpec::Literal(_) => None,
            TextSpec::VarRef { var, .. } => Some(var),
        }
    }

    pub fn render(&self, bindings: &BTreeMap<String, VarValue>) -> String {
        match self {
            TextSpec::Literal(s) => s.clone(),
            TextSpec::VarRef { var, format } => {
                let value = bindings
                    .get(var)
                    .map(VarValue::render)
                    .unwrap_or_default();
                match format {
                    Some(f) => f.replacen("{}", &value, 1),
                    None => value,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WidgetTemplate {
    #[serde(default)]
    pub resource_id: String,
    #[serde(default = "TextSpec::empty")]
    pub text: TextSpec,
    #[serde(default)]
    pub content_desc: String,
    pub class_name: String,
    pub bounds: [u32; 4],
    #[serde(default)]
    pub flags: WidgetFlags,
}

impl TextSpec {
    fn empty() -> TextSpec {
        TextSpec::Literal(String::new())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PageTemplate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activity: Option<String>,
    pub widgets: Vec<WidgetTemplate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    /// Assign a variable from a literal, another variable's rendered value,
    /// or an arithmetic expression over variables (fixed-point, two fraction
    /// digits, half-up rounding).
    Set {
        var: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        value: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        expr: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        from: Option<String>,
    },
    /// Append one digit to a string variable (keypad-style entry).
    AppendDigit { var: String, digit: String },
    Goto { page: String },
    Toggle { var: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transition {
    pub page: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<Selector>,
    pub action: ActionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    pub effects: Vec<Effect>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InitialPageSpec {
    One(String),
    Many(Vec<String>),
}

impl Serialize for InitialPageSpec {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        match self {
            InitialPageSpec::One(p) => ser.serialize_str(p),
            InitialPageSpec::Many(ps) => ps.serialize(ser),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScreenSpec {
    pub w: u32,
    pub h: u32,
}

/// A deterministic simulated app.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AppModel {
    pub screen: ScreenSpec,
    pub variables: BTreeMap<String, VarDecl>,
    pub pages: BTreeMap<String, PageTemplate>,
    pub transitions: Vec<Transition>,
    pub initial_page: InitialPageSpec,
}

impl AppModel {
    pub fn initial_page_id(&self) -> &str {
        match &self.initial_page {
            InitialPageSpec::One(p) => p,
            InitialPageSpec::Many(ps) => ps.first().map(String::as_str).unwrap_or(""),
        }
    }

    pub fn initial_bindings(&self) -> BTreeMap<String, VarValue> {
        self.variables
            .iter()
            .map(|(name, decl)| {
                let value = VarValue::parse(decl.ty, &decl.initial)
                    .expect("validated initial value");
                (name.clone(), value)
            })
            .collect()
    }

    /// Build the widget tree of a page under the given bindings. The tree has
    /// a synthetic full-screen root with the page widgets as children.
    pub fn build_tree(&self, page_id: &str, bindings: &BTreeMap<String, VarValue>) -> Widget {
        let page = &self.pages[page_id];
        let mut root = Widget {
            node_path: Vec::new(),
            resource_id: String::new(),
            text: String::new(),
            content_desc: String::new(),
            class_name: "android.widget.FrameLayout".to_string(),
            bounds: Bounds::new(0, 0, self.screen.w, self.screen.h),
            flags: WidgetFlags {
                enabled: true,
                visible: true,
                ..Default::default()
            },
            children: page
                .widgets
                .iter()
                .map(|t| Widget {
                    node_path: Vec::new(),
                    resource_id: t.resource_id.clone(),
                    text: t.text.render(bindings),
                    content_desc: t.content_desc.clone(),
                    class_name: t.class_name.clone(),
                    bounds: Bounds::new(t.bounds[0], t.bounds[1], t.bounds[2], t.bounds[3]),
                    flags: t.flags,
                    children: Vec::new(),
                })
                .collect(),
        };
        root.assign_node_paths();
        root
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AppModelError {
    #[error("malformed app-model document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("invalid app model:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

/// Parse and validate an app-model document, listing every dangling
/// reference rather than stopping at the first.
pub fn load_app_model(document: &[u8]) -> Result<AppModel, AppModelError> {
    let model: AppModel = serde_json::from_slice(document)?;
    let mut problems = Vec::new();

    match &model.initial_page {
        InitialPageSpec::One(p) => {
            if !model.pages.contains_key(p) {
                problems.push(format!("initial page \"{p}\" is not defined"));
            }
        }
        InitialPageSpec::Many(ps) => {
            problems.push(format!(
                "exactly one initial page required, got {}",
                ps.len()
            ));
        }
    }

    for (name, decl) in &model.variables {
        if let Err(e) = VarValue::parse(decl.ty, &decl.initial) {
            problems.push(format!("variable \"{name}\": bad initial value: {e}"));
        }
    }

    for (page_id, page) in &model.pages {
        for (i, w) in page.widgets.iter().enumerate() {
            if let Some(var) = w.text.var_name() {
                if !model.variables.contains_key(var) {
                    problems.push(format!(
                        "page \"{page_id}\" widget {i}: text references undeclared variable \"{var}\""
                    ));
                }
            }
            if w.bounds[0] > w.bounds[2] || w.bounds[1] > w.bounds[3] {
                problems.push(format!("page \"{page_id}\" widget {i}: bounds not ordered"));
            }
            if w.flags.editable && w.text.var_name().is_none() {
                problems.push(format!(
                    "page \"{page_id}\" widget {i}: editable widget text must reference a variable"
                ));
            }
        }
    }

    let initial_bindings: BTreeMap<String, VarValue> = model
        .variables
        .iter()
        .filter_map(|(name, decl)| {
            VarValue::parse(decl.ty, &decl.initial)
                .ok()
                .map(|v| (name.clone(), v))
        })
        .collect();

    for (i, t) in model.transitions.iter().enumerate() {
        let page = match model.pages.get(&t.page) {
            Some(p) => Some(p),
            None => {
                problems.push(format!("transition {i}: page \"{}\" is not defined", t.page));
                None
            }
        };
        match (&t.selector, t.action.needs_selector()) {
            (None, true) => {
                problems.push(format!("transition {i}: action {} needs a selector", t.action))
            }
            (Some(sel), _) => {
                if page.is_some() {
                    let tree = model.build_tree(&t.page, &initial_bindings);
                    if sel.resolve(&tree).is_none() {
                        problems.push(format!(
                            "transition {i}: selector {} does not resolve on page \"{}\"",
                            sel.describe(),
                            t.page
                        ));
                    }
                }
            }
            (None, false) => {}
        }
        for (j, effect) in t.effects.iter().enumerate() {
            check_effect(&model, effect, &mut problems, || format!("transition {i} effect {j}"));
        }
    }

    if problems.is_empty() {
        Ok(model)
    } else {
        Err(AppModelError::Invalid(problems))
    }
}

fn check_effect(
    model: &AppModel,
    effect: &Effect,
    problems: &mut Vec<String>,
    ctx: impl Fn() -> String,
) {
    let check_var = |name: &str, problems: &mut Vec<String>| {
        if !model.variables.contains_key(name) {
            problems.push(format!("{}: undeclared variable \"{name}\"", ctx()));
        }
    };
    match effect {
        Effect::Set {
            var,
            value,
            expr,
            from,
        } => {
            check_var(var, problems);
            match (value, expr, from) {
                (None, None, None) => {
                    problems.push(format!("{}: set needs value, expr, or from", ctx()))
                }
                (None, Some(e), None) => match parse_expr(e) {
                    Ok(ast) => {
                        for v in ast.variables() {
                            check_var(&v, problems);
                        }
                    }
                    Err(err) => problems.push(format!("{}: {err}", ctx())),
                },
                (Some(_), None, None) => {}
                (None, None, Some(src)) => check_var(src, problems),
                _ => problems.push(format!(
                    "{}: set takes exactly one of value, expr, from",
                    ctx()
                )),
            }
        }
        Effect::AppendDigit { var, digit } => {
            check_var(var, problems);
            if digit.len() != 1 || !digit.chars().all(|c| c.is_ascii_digit()) {
                problems.push(format!("{}: digit must be a single 0-9, got \"{digit}\"", ctx()));
            }
        }
        Effect::Goto { page } => {
            if !model.pages.contains_key(page) {
                problems.push(format!("{}: goto undefined page \"{page}\"", ctx()));
            }
        }
        Effect::Toggle { var } => check_var(var, problems),
    }
}

// ---------------------------------------------------------------------------
// Expressions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(Decimal2),
    Var(String),
    Neg(Box<Expr>),
    Bin(Box<Expr>, BinOp, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ExprError {
    #[error("bad expression at offset {0}: {1}")]
    Syntax(usize, String),
    #[error("unknown variable \"{0}\"")]
    UnknownVar(String),
    #[error("division by zero")]
    DivByZero,
}

impl Expr {
    pub fn variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut Vec<String>) {
        match self {
            Expr::Literal(_) => {}
            Expr::Var(v) => out.push(v.clone()),
            Expr::Neg(e) => e.collect_vars(out),
            Expr::Bin(a, _, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Evaluate under bindings. String variables are parsed as decimals
    /// (keypad digit strings become whole numbers), booleans as 0/1.
    pub fn eval(&self, bindings: &BTreeMap<String, VarValue>) -> Result<Decimal2, ExprError> {
        match self {
            Expr::Literal(d) => Ok(*d),
            Expr::Var(name) => match bindings.get(name) {
                None => Err(ExprError::UnknownVar(name.clone())),
                Some(VarValue::Dec(d)) => Ok(*d),
                Some(VarValue::Str(s)) => s
                    .parse()
                    .map_err(|_| ExprError::Syntax(0, format!("variable \"{name}\" is not numeric"))),
                Some(VarValue::Bool(b)) => Ok(if *b { Decimal2::ONE } else { Decimal2::ZERO }),
            },
            Expr::Neg(e) => Ok(Decimal2::ZERO.sub(e.eval(bindings)?)),
            Expr::Bin(a, op, b) => {
                let a = a.eval(bindings)?;
                let b = b.eval(bindings)?;
                match op {
                    BinOp::Add => Ok(a.add(b)),
                    BinOp::Sub => Ok(a.sub(b)),
                    BinOp::Mul => Ok(a.mul(b)),
                    BinOp::Div => a.div(b).ok_or(ExprError::DivByZero),
                }
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

/// Recursive-descent parser for `+ - * /`, parens, decimal literals, and
/// variable names.
pub fn parse_expr(src: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        src: src.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(ExprError::Syntax(p.pos, "trailing input".to_string()));
    }
    Ok(e)
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Expr::Bin(Box::new(lhs), BinOp::Add, Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Expr::Bin(Box::new(lhs), BinOp::Sub, Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Expr::Bin(Box::new(lhs), BinOp::Mul, Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Expr::Bin(Box::new(lhs), BinOp::Div, Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(ExprError::Syntax(self.pos, "expected ')'".to_string()));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            other => Err(ExprError::Syntax(
                self.pos,
                format!("unexpected {:?}", other.map(char::from)),
            )),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_digit() || *c == b'.')
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        text.parse()
            .map(Expr::Literal)
            .map_err(|e| ExprError::Syntax(start, e.to_string()))
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self
            .src
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        Ok(Expr::Var(text.to_string()))
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(d) => write!(f, "{d}"),
            Expr::Var(v) => f.write_str(v),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Bin(a, op, b) => {
                let op = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                };
                write!(f, "({a} {op} {b})")
            }
        }
    }
}
