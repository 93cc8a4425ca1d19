//! Output dialects: deterministic emitters from scene IR to source text and
//! the matching parsers.
//!
//! Every emitted event carries a comment marker `@@anchor:<id>@@` followed
//! by its verb, start, duration and targets, so later passes can read the
//! timeline back out of the code.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};

use crate::canon;
use crate::model::{AnimationEvent, ElementKind, SceneElement, SceneProgram, Stage, Verb};

pub const IR_JSON: &str = "ir-json";
pub const MANIM_CE: &str = "manim-ce";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseSupport {
    None,
    /// Anchors, verbs, targets and timing only.
    AnchorsOnly,
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialectSpec {
    pub name: String,
    pub can_emit: bool,
    pub parse: ParseSupport,
}

impl DialectSpec {
    pub fn ir_json() -> Self {
        DialectSpec {
            name: IR_JSON.into(),
            can_emit: true,
            parse: ParseSupport::Full,
        }
    }

    pub fn manim_ce() -> Self {
        DialectSpec {
            name: MANIM_CE.into(),
            can_emit: true,
            parse: ParseSupport::AnchorsOnly,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DialectError {
    #[error("dialect {0:?} is not registered")]
    Unknown(String),
    #[error("dialect {0:?} is already registered")]
    Duplicate(String),
    #[error("dialect {0:?} cannot emit")]
    NoEmit(String),
    #[error("dialect {0:?} cannot parse")]
    NoParse(String),
    #[error("id {0:?} cannot be encoded in a marker (no whitespace, '@' or ',')")]
    UnencodableId(String),
    #[error("ir-json encoding failed: {0}")]
    Encode(String),
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

/// Registered dialects, each name at most once.
#[derive(Debug, Clone)]
pub struct DialectRegistry {
    specs: Vec<DialectSpec>,
}

impl Default for DialectRegistry {
    fn default() -> Self {
        DialectRegistry {
            specs: vec![DialectSpec::ir_json(), DialectSpec::manim_ce()],
        }
    }
}

impl DialectRegistry {
    pub fn register(&mut self, spec: DialectSpec) -> Result<(), DialectError> {
        if self.get(&spec.name).is_some() {
            return Err(DialectError::Duplicate(spec.name));
        }
        self.specs.push(spec);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&DialectSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn resolve(&self, name: &str) -> Result<&DialectSpec, DialectError> {
        self.get(name)
            .ok_or_else(|| DialectError::Unknown(name.to_string()))
    }
}

/// The part of a scene that ir-json carries; `source_text` is the document
/// itself.
#[derive(Serialize, Deserialize)]
struct IrDocument {
    dialect: String,
    page_index: usize,
    stage: Stage,
    elements: Vec<SceneElement>,
    events: Vec<AnimationEvent>,
}

pub fn emit(scene: &SceneProgram, dialect: &DialectSpec) -> Result<String, DialectError> {
    if !dialect.can_emit {
        return Err(DialectError::NoEmit(dialect.name.clone()));
    }
    match dialect.name.as_str() {
        IR_JSON => emit_ir_json(scene),
        MANIM_CE => emit_manim(scene),
        other => Err(DialectError::NoEmit(other.to_string())),
    }
}

/// Emits with a built-in dialect by name.
pub fn emit_named(scene: &SceneProgram, name: &str) -> Result<String, DialectError> {
    emit(scene, DialectRegistry::default().resolve(name)?)
}

/// Re-emits `source_text` in the given dialect.
pub fn refresh_source(scene: &mut SceneProgram, name: &str) -> Result<(), DialectError> {
    scene.source_text = emit_named(scene, name)?;
    Ok(())
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ParseEmittedError {
    #[error(transparent)]
    Dialect(#[from] DialectError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// For ir-json the full inverse of [`emit`]. For manim-ce the result holds
/// the events (anchor, verb, targets, start, duration) and no elements.
pub fn parse_emitted(src: &str, dialect: &DialectSpec) -> Result<SceneProgram, ParseEmittedError> {
    match (dialect.parse, dialect.name.as_str()) {
        (ParseSupport::None, _) => Err(DialectError::NoParse(dialect.name.clone()).into()),
        (_, IR_JSON) => Ok(parse_ir_json(src)?),
        (_, MANIM_CE) => Ok(parse_manim(src)?),
        _ => Err(DialectError::NoParse(dialect.name.clone()).into()),
    }
}

fn emit_ir_json(scene: &SceneProgram) -> Result<String, DialectError> {
    let doc = IrDocument {
        dialect: IR_JSON.into(),
        page_index: scene.page_index,
        stage: scene.stage,
        elements: scene.elements.clone(),
        events: scene.events.clone(),
    };
    canon::to_string(&doc).map_err(|e| DialectError::Encode(e.to_string()))
}

fn parse_ir_json(src: &str) -> Result<SceneProgram, ParseError> {
    let doc: IrDocument = canon::from_str(src).map_err(|e| match e {
        canon::CanonError::Parse { line, message, .. } => ParseError { line, message },
        other => ParseError {
            line: 0,
            message: other.to_string(),
        },
    })?;
    if doc.dialect != IR_JSON {
        return Err(ParseError {
            line: 1,
            message: format!("document dialect is {:?}", doc.dialect),
        });
    }
    Ok(SceneProgram {
        page_index: doc.page_index,
        elements: doc.elements,
        events: doc.events,
        source_text: src.to_string(),
        stage: doc.stage,
    })
}

const MANIM_TEMPLATES: &[(&str, &str)] = &[
    (
        "header",
        include_str!("../../assets/dialects/manim-ce/header.tmpl"),
    ),
    (
        "element_text",
        include_str!("../../assets/dialects/manim-ce/element_text.tmpl"),
    ),
    (
        "element_formula",
        include_str!("../../assets/dialects/manim-ce/element_formula.tmpl"),
    ),
    (
        "element_shape",
        include_str!("../../assets/dialects/manim-ce/element_shape.tmpl"),
    ),
    (
        "element_image_placeholder",
        include_str!("../../assets/dialects/manim-ce/element_image_placeholder.tmpl"),
    ),
    (
        "element_group",
        include_str!("../../assets/dialects/manim-ce/element_group.tmpl"),
    ),
    (
        "template_plain_text_box",
        include_str!("../../assets/dialects/manim-ce/template_plain_text_box.tmpl"),
    ),
    (
        "template_labeled_rect",
        include_str!("../../assets/dialects/manim-ce/template_labeled_rect.tmpl"),
    ),
    (
        "template_gray_labeled_rect",
        include_str!("../../assets/dialects/manim-ce/template_gray_labeled_rect.tmpl"),
    ),
    (
        "verb_appear",
        include_str!("../../assets/dialects/manim-ce/verb_appear.tmpl"),
    ),
    (
        "verb_disappear",
        include_str!("../../assets/dialects/manim-ce/verb_disappear.tmpl"),
    ),
    (
        "verb_highlight",
        include_str!("../../assets/dialects/manim-ce/verb_highlight.tmpl"),
    ),
    (
        "verb_transform",
        include_str!("../../assets/dialects/manim-ce/verb_transform.tmpl"),
    ),
    (
        "verb_transform_single",
        include_str!("../../assets/dialects/manim-ce/verb_transform_single.tmpl"),
    ),
    (
        "verb_wait",
        include_str!("../../assets/dialects/manim-ce/verb_wait.tmpl"),
    ),
];

fn fill(name: &str, vars: &[(&str, String)]) -> String {
    let mut out = MANIM_TEMPLATES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| t.trim_end_matches('\n').to_string())
        .unwrap_or_else(|| panic!("missing manim-ce template {name}"));
    for (k, v) in vars {
        out = out.replace(&format!("{{{{{k}}}}}"), v);
    }
    out
}

/// Shortest round-trip float form; also valid Python.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn py_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always encode")
}

fn encodable(id: &str) -> bool {
    !id.is_empty()
        && !id
            .chars()
            .any(|c| c.is_whitespace() || c == '@' || c == ',')
}

pub const ANCHOR_MARK: &str = "@@anchor:";
pub const ELEMENT_MARK: &str = "@@element:";

struct ManimWriter<'a> {
    scene: &'a SceneProgram,
    vars: BTreeMap<&'a str, String>,
    built: HashSet<&'a str>,
    lines: Vec<String>,
}

impl<'a> ManimWriter<'a> {
    fn push(&mut self, line: String) {
        self.lines.push(format!("        {line}"));
    }

    fn var(&self, id: &str) -> String {
        self.vars.get(id).cloned().unwrap_or_else(|| "None".into())
    }

    fn build(&mut self, id: &'a str, depth: usize) {
        if self.built.contains(id) || depth > self.scene.elements.len() {
            return;
        }
        let Some(el) = self.scene.element(id) else {
            return;
        };
        self.built.insert(id);
        if el.kind == ElementKind::Group {
            for c in &el.children {
                self.build(c.as_str(), depth + 1);
            }
        }
        let b = el.bbox;
        let label_h = fmt_f64((b.h * 0.5).min(0.5));
        let mut vars = vec![
            ("var", self.var(id)),
            ("content", py_str(&el.content)),
            ("cx", fmt_f64(b.cx)),
            ("cy", fmt_f64(b.cy)),
            ("w", fmt_f64(b.w)),
            ("h", fmt_f64(b.h)),
            ("label_h", label_h),
        ];
        let template = match (el.template(), el.kind) {
            (Some(t), _) => format!("template_{t}"),
            (None, ElementKind::Text) => "element_text".into(),
            (None, ElementKind::Formula) => "element_formula".into(),
            (None, ElementKind::Shape) => "element_shape".into(),
            (None, ElementKind::ImagePlaceholder) => "element_image_placeholder".into(),
            (None, ElementKind::Group) => {
                let kids: Vec<String> = el.children.iter().map(|c| self.var(c)).collect();
                vars.push(("children", kids.join(", ")));
                "element_group".into()
            }
        };
        let kind = serde_json::to_value(el.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let tag = match el.template() {
            Some(t) => format!("  # {ELEMENT_MARK}{id}@@ kind={kind} template={t}"),
            None => format!("  # {ELEMENT_MARK}{id}@@ kind={kind}"),
        };
        let line = fill(&template, &vars) + &tag;
        self.push(line);
    }
}

fn emit_manim(scene: &SceneProgram) -> Result<String, DialectError> {
    for el in &scene.elements {
        if !encodable(&el.id) {
            return Err(DialectError::UnencodableId(el.id.clone()));
        }
    }
    for ev in &scene.events {
        if !encodable(&ev.anchor_id) {
            return Err(DialectError::UnencodableId(ev.anchor_id.clone()));
        }
    }
    let mut vars = BTreeMap::new();
    for (i, el) in scene.elements.iter().enumerate() {
        let clean: String = el
            .id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        vars.insert(el.id.as_str(), format!("e{i}_{clean}"));
    }
    let stage = serde_json::to_value(scene.stage)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let mut w = ManimWriter {
        scene,
        vars,
        built: HashSet::new(),
        lines: Vec::new(),
    };
    let header = fill(
        "header",
        &[("page", scene.page_index.to_string()), ("stage", stage)],
    );

    // Elements no event touches are built up front; the rest right under the
    // first anchor that targets them, so a construction error localizes.
    let targeted: HashSet<&str> = scene
        .events
        .iter()
        .flat_map(|e| e.target_ids.iter().map(String::as_str))
        .collect();
    let mut in_targeted_group = HashSet::new();
    for el in &scene.elements {
        if el.kind == ElementKind::Group && targeted.contains(el.id.as_str()) {
            for c in &el.children {
                in_targeted_group.insert(c.as_str());
            }
        }
    }
    for el in &scene.elements {
        if !targeted.contains(el.id.as_str()) && !in_targeted_group.contains(el.id.as_str()) {
            w.build(el.id.as_str(), 0);
        }
    }
    for ev in &scene.events {
        let start = ev.start_s.map_or_else(|| "-".to_string(), fmt_f64);
        w.push(format!(
            "# {ANCHOR_MARK}{}@@ verb={} t={} d={} targets={}",
            ev.anchor_id,
            ev.verb.as_str(),
            start,
            fmt_f64(ev.duration_s),
            ev.target_ids.join(",")
        ));
        for t in &ev.target_ids {
            w.build(t.as_str(), 0);
        }
        let targets: Vec<String> = ev.target_ids.iter().map(|t| w.var(t)).collect();
        let d = fmt_f64(ev.duration_s);
        let instant = ev.duration_s <= 0.0;
        let stmt = match ev.verb {
            Verb::Wait if instant => "pass".to_string(),
            Verb::Wait => fill("verb_wait", &[("d", d)]),
            _ if targets.is_empty() => "pass".to_string(),
            Verb::Appear if instant => format!("self.add({})", targets.join(", ")),
            Verb::Disappear if instant => format!("self.remove({})", targets.join(", ")),
            _ if instant => "pass".to_string(),
            Verb::Appear => fill("verb_appear", &[("targets", targets.join(", ")), ("d", d)]),
            Verb::Disappear => fill(
                "verb_disappear",
                &[("targets", targets.join(", ")), ("d", d)],
            ),
            Verb::Highlight => fill(
                "verb_highlight",
                &[("targets", targets.join(", ")), ("d", d)],
            ),
            Verb::Transform if targets.len() >= 2 => fill(
                "verb_transform",
                &[("targets", targets[..2].join(", ")), ("d", d)],
            ),
            Verb::Transform => fill(
                "verb_transform_single",
                &[("targets", targets[0].clone()), ("d", d)],
            ),
        };
        w.push(stmt);
    }
    if w.lines.is_empty() {
        w.push("pass".into());
    }
    let mut out = header.trim_end_matches('\n').to_string();
    out.push('\n');
    for l in &w.lines {
        out.push_str(l);
        out.push('\n');
    }
    Ok(out)
}

/// One event as recovered from a manim-ce marker line.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedEvent {
    pub line: usize,
    pub event: AnimationEvent,
}

fn parse_num(s: &str, line: usize, what: &str) -> Result<f64, ParseError> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| ParseError {
            line,
            message: format!("bad {what} value {s:?}"),
        })
}

/// Extracts every anchor marker, in source order. Line numbers are 1-based.
pub fn extract_markers(src: &str) -> Result<Vec<MarkedEvent>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let Some(pos) = raw.find(ANCHOR_MARK) else {
            continue;
        };
        let bad = |m: &str| ParseError {
            line,
            message: m.to_string(),
        };
        let rest = &raw[pos + ANCHOR_MARK.len()..];
        let end = rest
            .find("@@")
            .ok_or_else(|| bad("unterminated anchor marker"))?;
        let anchor = &rest[..end];
        if !encodable(anchor) {
            return Err(bad(&format!("malformed anchor id {anchor:?}")));
        }
        let mut verb = None;
        let mut start = None;
        let mut duration = None;
        let mut targets = Vec::new();
        for field in rest[end + 2..].split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| bad(&format!("bad marker field {field:?}")))?;
            match k {
                "verb" => {
                    verb = Some(Verb::parse(v).ok_or_else(|| bad(&format!("unknown verb {v:?}")))?)
                }
                "t" if v == "-" => start = None,
                "t" => start = Some(parse_num(v, line, "t")?),
                "d" => duration = Some(parse_num(v, line, "d")?),
                "targets" => {
                    targets = v
                        .split(',')
                        .filter(|s| !s.is_empty())
                        .map(str::to_string)
                        .collect()
                }
                _ => return Err(bad(&format!("unknown marker field {k:?}"))),
            }
        }
        out.push(MarkedEvent {
            line,
            event: AnimationEvent {
                anchor_id: anchor.to_string(),
                verb: verb.ok_or_else(|| bad("marker lacks verb"))?,
                target_ids: targets,
                duration_s: duration.ok_or_else(|| bad("marker lacks duration"))?,
                start_s: start,
            },
        });
    }
    Ok(out)
}

/// Durations of the `self.wait(...)` statements, in order.
pub fn extract_waits(src: &str) -> Result<Vec<f64>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let t = raw.trim();
        if let Some(arg) = t
            .strip_prefix("self.wait(")
            .and_then(|r| r.strip_suffix(')'))
        {
            out.push(parse_num(arg, i + 1, "wait")?);
        }
    }
    Ok(out)
}

/// Nearest anchor marker at or above `line` (1-based).
pub fn anchor_above(src: &str, line: usize) -> Option<String> {
    let markers = extract_markers(src).ok()?;
    markers
        .iter()
        .rev()
        .find(|m| m.line <= line)
        .map(|m| m.event.anchor_id.clone())
}

fn header_field<'s>(src: &'s str, key: &str) -> Option<&'s str> {
    src.lines().take(8).find_map(|l| {
        l.strip_prefix("# ")
            .and_then(|r| r.strip_prefix(key))
            .and_then(|r| r.strip_prefix(": "))
    })
}

fn parse_manim(src: &str) -> Result<SceneProgram, ParseError> {
    let page_index = header_field(src, "page")
        .and_then(|p| p.trim().parse().ok())
        .unwrap_or(0);
    let stage = header_field(src, "stage")
        .and_then(|s| serde_json::from_value(serde_json::Value::String(s.trim().to_string())).ok())
        .unwrap_or(Stage::Generated);
    let events: Vec<AnimationEvent> = extract_markers(src)?.into_iter().map(|m| m.event).collect();
    let waits = extract_waits(src)?;
    let marked_waits: Vec<f64> = events
        .iter()
        .filter(|e| e.verb == Verb::Wait && e.duration_s > 0.0)
        .map(|e| e.duration_s)
        .collect();
    if waits != marked_waits {
        return Err(ParseError {
            line: 0,
            message: format!(
                "wait statements {waits:?} disagree with wait markers {marked_waits:?}"
            ),
        });
    }
    Ok(SceneProgram {
        page_index,
        elements: Vec::new(),
        events,
        source_text: src.to_string(),
        stage,
    })
}
