//! Shared domain types and structural validation.
//!
//! Every type here is a plain value: passes consume one and return a new
//! one. Geometry uses scene units on a frame centered at the origin with +x
//! right and +y up.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use crate::words::count_words;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("outline has no topic keywords")]
    NoKeywords,
    #[error("invalid language tag {0:?}")]
    BadLanguage(String),
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("invalid skeleton: {0}")]
    BadSkeleton(String),
    #[error("invalid manuscript: {0}")]
    BadManuscript(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudienceLevel {
    Intro,
    Intermediate,
    Advanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LectureOutline {
    pub topic_keywords: Vec<String>,
    pub audience_level: AudienceLevel,
    pub language: String,
    #[serde(default)]
    pub free_notes: Option<String>,
}

impl LectureOutline {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.topic_keywords.iter().all(|k| k.trim().is_empty()) {
            return Err(ModelError::NoKeywords);
        }
        if !is_language_tag(&self.language) {
            return Err(ModelError::BadLanguage(self.language.clone()));
        }
        Ok(())
    }
}

/// Syntactic BCP-47 check: a 2-3 or 5-8 letter primary subtag followed by
/// 1-8 character alphanumeric subtags.
pub fn is_language_tag(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let Some(primary) = parts.next() else {
        return false;
    };
    let primary_ok =
        matches!(primary.len(), 2..=3 | 5..=8) && primary.chars().all(|c| c.is_ascii_alphabetic());
    primary_ok
        && parts.all(|p| (1..=8).contains(&p.len()) && p.chars().all(|c| c.is_ascii_alphanumeric()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub width_u: f64,
    pub height_u: f64,
}

impl Default for FrameSpec {
    fn default() -> Self {
        FrameSpec {
            width_u: 16.0,
            height_u: 9.0,
        }
    }
}

impl FrameSpec {
    pub fn left(&self) -> f64 {
        -self.width_u / 2.0
    }
    pub fn right(&self) -> f64 {
        self.width_u / 2.0
    }
    pub fn top(&self) -> f64 {
        self.height_u / 2.0
    }
    pub fn bottom(&self) -> f64 {
        -self.height_u / 2.0
    }
}

/// An external command backend (renderer or muxer). Commands are argv
/// templates whose `{source}`, `{output}`, `{audio}` and `{list}`
/// placeholders are substituted per invocation. `check_command` is the
/// renderer's compile-only mode; `concat_command` joins muxed segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommandBackend {
    pub backend: String,
    pub command: Vec<String>,
    pub check_command: Vec<String>,
    pub concat_command: Vec<String>,
    pub timeout_s: f64,
}

impl Default for CommandBackend {
    fn default() -> Self {
        CommandBackend {
            backend: "null".into(),
            command: Vec::new(),
            check_command: Vec::new(),
            concat_command: Vec::new(),
            timeout_s: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub target_duration_s: f64,
    pub words_per_minute_default: f64,
    pub frame: FrameSpec,
    pub page_density_max: u32,
    pub retry_threshold: u32,
    pub margin_u: f64,
    pub seed: u64,
    pub voice_id: String,
    pub dialect: String,
    pub segment_word_budget: usize,
    pub grid_cell_u: f64,
    pub parallelism: usize,
    pub review_enabled: bool,
    pub tts_backend: String,
    pub renderer: CommandBackend,
    pub muxer: CommandBackend,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            target_duration_s: 600.0,
            words_per_minute_default: 160.0,
            frame: FrameSpec::default(),
            page_density_max: 8,
            retry_threshold: 3,
            margin_u: 0.1,
            seed: 0,
            voice_id: "default".into(),
            dialect: "manim-ce".into(),
            segment_word_budget: 1200,
            grid_cell_u: 0.25,
            parallelism: 4,
            review_enabled: false,
            tts_backend: "mock".into(),
            renderer: CommandBackend::default(),
            muxer: CommandBackend::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::BadConfig(m.to_string()));
        if !(self.target_duration_s > 0.0 && self.target_duration_s.is_finite()) {
            return bad("target_duration_s must be positive");
        }
        if !(self.words_per_minute_default > 0.0 && self.words_per_minute_default.is_finite()) {
            return bad("words_per_minute_default must be positive");
        }
        if !(self.frame.width_u > 0.0 && self.frame.height_u > 0.0) {
            return bad("frame dimensions must be positive");
        }
        if self.page_density_max == 0 {
            return bad("page_density_max must be positive");
        }
        if self.retry_threshold < 1 {
            return bad("retry_threshold must be at least 1");
        }
        if !(self.margin_u >= 0.0 && self.margin_u.is_finite()) {
            return bad("margin_u must be non-negative");
        }
        if !(self.grid_cell_u > 0.0 && self.grid_cell_u.is_finite()) {
            return bad("grid_cell_u must be positive");
        }
        if self.segment_word_budget == 0 {
            return bad("segment_word_budget must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub id: String,
    pub title: String,
    pub one_line_gist: String,
    #[serde(default)]
    pub depends_on: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub concepts: Vec<Concept>,
}

impl Skeleton {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.concepts.is_empty() {
            return Err(ModelError::BadSkeleton("no concepts".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.concepts {
            if c.id.trim().is_empty() || c.title.trim().is_empty() {
                return Err(ModelError::BadSkeleton(
                    "concept with empty id or title".into(),
                ));
            }
            for dep in &c.depends_on {
                if !seen.contains(dep.as_str()) {
                    return Err(ModelError::BadSkeleton(format!(
                        "concept {:?} depends on {:?}, which is not an earlier concept",
                        c.id, dep
                    )));
                }
            }
            if !seen.insert(c.id.as_str()) {
                return Err(ModelError::BadSkeleton(format!(
                    "duplicate concept id {:?}",
                    c.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub concept_id: String,
    pub heading: String,
    pub body: String,
    #[serde(default)]
    pub formal_expressions: Vec<String>,
    #[serde(default)]
    pub examples: Vec<String>,
}

impl Section {
    /// Spoken words: the body only.
    pub fn word_count(&self) -> usize {
        count_words(&self.body)
    }

    /// Plain-text rendering; the manuscript text is the concatenation of
    /// these in section order.
    pub fn text(&self) -> String {
        let mut out = format!("## {}\n\n{}\n\n", self.heading, self.body);
        for expr in &self.formal_expressions {
            out.push_str("$$ ");
            out.push_str(expr);
            out.push_str(" $$\n\n");
        }
        for ex in &self.examples {
            out.push_str("Example: ");
            out.push_str(ex);
            out.push_str("\n\n");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manuscript {
    pub sections: Vec<Section>,
    pub word_count: usize,
}

impl Manuscript {
    pub fn new(sections: Vec<Section>) -> Self {
        let word_count = sections.iter().map(Section::word_count).sum();
        Manuscript {
            sections,
            word_count,
        }
    }

    pub fn recount(&self) -> usize {
        self.sections.iter().map(Section::word_count).sum()
    }

    pub fn text(&self) -> String {
        self.sections.iter().map(Section::text).collect()
    }

    pub fn span_text(&self, span: SectionSpan) -> String {
        self.sections[span.start..span.end]
            .iter()
            .map(Section::text)
            .collect()
    }

    pub fn validate(&self, skeleton: Option<&Skeleton>) -> Result<(), ModelError> {
        if self.word_count != self.recount() {
            return Err(ModelError::BadManuscript(format!(
                "stored word_count {} but sections hold {}",
                self.word_count,
                self.recount()
            )));
        }
        if let Some(sk) = skeleton {
            let ids: HashSet<_> = sk.concepts.iter().map(|c| c.id.as_str()).collect();
            for s in &self.sections {
                if !ids.contains(s.concept_id.as_str()) {
                    return Err(ModelError::BadManuscript(format!(
                        "unknown concept {:?}",
                        s.concept_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Half-open range of manuscript section indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SectionSpan {
    pub start: usize,
    pub end: usize,
}

impl SectionSpan {
    pub fn new(start: usize, end: usize) -> Self {
        SectionSpan { start, end }
    }
    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }
    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
    pub fn within(&self, outer: SectionSpan) -> bool {
        self.start >= outer.start && self.end <= outer.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub index: usize,
    pub section_span: SectionSpan,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentKind {
    Formula,
    Diagram,
    ImagePlaceholder,
    Table,
    PlainText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualIntent {
    pub kind: IntentKind,
    pub payload: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageBlueprint {
    pub page_index: usize,
    pub title: String,
    #[serde(default)]
    pub bullet_points: Vec<String>,
    #[serde(default)]
    pub visual_intents: Vec<VisualIntent>,
    pub source_span: SectionSpan,
    pub est_density: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Text,
    Formula,
    Shape,
    ImagePlaceholder,
    Group,
}

/// Axis-aligned box given by center and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox { cx, cy, w, h }
    }

    pub fn from_edges(left: f64, bottom: f64, right: f64, top: f64) -> Self {
        BBox {
            cx: (left + right) / 2.0,
            cy: (bottom + top) / 2.0,
            w: right - left,
            h: top - bottom,
        }
    }

    pub fn left(&self) -> f64 {
        self.cx - self.w / 2.0
    }
    pub fn right(&self) -> f64 {
        self.cx + self.w / 2.0
    }
    pub fn top(&self) -> f64 {
        self.cy + self.h / 2.0
    }
    pub fn bottom(&self) -> f64 {
        self.cy - self.h / 2.0
    }

    pub fn is_well_formed(&self) -> bool {
        [self.cx, self.cy, self.w, self.h]
            .iter()
            .all(|v| v.is_finite())
            && self.w > 0.0
            && self.h > 0.0
    }

    /// Area of the intersection, zero when disjoint or merely touching.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let dx = self.right().min(other.right()) - self.left().max(other.left());
        let dy = self.top().min(other.top()) - self.bottom().max(other.bottom());
        if dx > 0.0 && dy > 0.0 {
            dx * dy
        } else {
            0.0
        }
    }

    pub fn contains(&self, other: &BBox) -> bool {
        const EPS: f64 = 1e-9;
        other.left() >= self.left() - EPS
            && other.right() <= self.right() + EPS
            && other.bottom() >= self.bottom() - EPS
            && other.top() <= self.top() + EPS
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox::from_edges(
            self.left().min(other.left()),
            self.bottom().min(other.bottom()),
            self.right().max(other.right()),
            self.top().max(other.top()),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneElement {
    pub id: String,
    pub kind: ElementKind,
    pub content: String,
    pub bbox: BBox,
    #[serde(default)]
    pub style: BTreeMap<String, String>,
    #[serde(default)]
    pub children: Vec<String>,
}

impl SceneElement {
    pub fn new(
        id: impl Into<String>,
        kind: ElementKind,
        content: impl Into<String>,
        bbox: BBox,
    ) -> Self {
        SceneElement {
            id: id.into(),
            kind,
            content: content.into(),
            bbox,
            style: BTreeMap::new(),
            children: Vec::new(),
        }
    }

    /// Name of the fallback template this element was replaced with, if any.
    pub fn template(&self) -> Option<&str> {
        self.style.get(TEMPLATE_STYLE_KEY).map(String::as_str)
    }
}

/// Style key marking an element produced by the fallback template library.
pub const TEMPLATE_STYLE_KEY: &str = "template";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verb {
    Appear,
    Transform,
    Highlight,
    Disappear,
    Wait,
}

impl Verb {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verb::Appear => "appear",
            Verb::Transform => "transform",
            Verb::Highlight => "highlight",
            Verb::Disappear => "disappear",
            Verb::Wait => "wait",
        }
    }

    pub fn parse(s: &str) -> Option<Verb> {
        Some(match s {
            "appear" => Verb::Appear,
            "transform" => Verb::Transform,
            "highlight" => Verb::Highlight,
            "disappear" => Verb::Disappear,
            "wait" => Verb::Wait,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnimationEvent {
    pub anchor_id: String,
    pub verb: Verb,
    #[serde(default)]
    pub target_ids: Vec<String>,
    pub duration_s: f64,
    #[serde(default)]
    pub start_s: Option<f64>,
}

impl AnimationEvent {
    pub fn new(
        anchor_id: impl Into<String>,
        verb: Verb,
        targets: &[&str],
        duration_s: f64,
    ) -> Self {
        AnimationEvent {
            anchor_id: anchor_id.into(),
            verb,
            target_ids: targets.iter().map(|s| s.to_string()).collect(),
            duration_s,
            start_s: None,
        }
    }
}

/// Pipeline stage of a scene. Ordering follows the pass order and a scene
/// only ever moves forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generated,
    Synced,
    Debugged,
    LaidOut,
    Final,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneProgram {
    pub page_index: usize,
    pub elements: Vec<SceneElement>,
    pub events: Vec<AnimationEvent>,
    #[serde(default)]
    pub source_text: String,
    pub stage: Stage,
}

impl SceneProgram {
    pub fn empty(page_index: usize) -> Self {
        SceneProgram {
            page_index,
            elements: Vec::new(),
            events: Vec::new(),
            source_text: String::new(),
            stage: Stage::Generated,
        }
    }

    pub fn element(&self, id: &str) -> Option<&SceneElement> {
        self.elements.iter().find(|e| e.id == id)
    }

    pub fn element_mut(&mut self, id: &str) -> Option<&mut SceneElement> {
        self.elements.iter_mut().find(|e| e.id == id)
    }

    pub fn event(&self, anchor: &str) -> Option<&AnimationEvent> {
        self.events.iter().find(|e| e.anchor_id == anchor)
    }

    pub fn anchors(&self) -> Vec<&str> {
        self.events.iter().map(|e| e.anchor_id.as_str()).collect()
    }

    /// Moves the stage forward; never backwards.
    pub fn advance(&mut self, stage: Stage) {
        self.stage = self.stage.max(stage);
    }

    /// Recomputes the bbox of every group whose children are given, as the
    /// union of its children's boxes. Nested groups are resolved inner first.
    pub fn recompute_groups(&mut self) {
        let index: HashMap<String, usize> = self
            .elements
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.clone(), i))
            .collect();
        let mut done = HashSet::new();
        fn visit(
            scene: &mut SceneProgram,
            idx: &HashMap<String, usize>,
            i: usize,
            done: &mut HashSet<usize>,
            depth: usize,
        ) {
            if done.contains(&i) || depth > scene.elements.len() {
                return;
            }
            if scene.elements[i].kind == ElementKind::Group
                && !scene.elements[i].children.is_empty()
            {
                let kids: Vec<usize> = scene.elements[i]
                    .children
                    .iter()
                    .filter_map(|c| idx.get(c).copied())
                    .collect();
                for &k in &kids {
                    visit(scene, idx, k, done, depth + 1);
                }
                let mut acc: Option<BBox> = None;
                for &k in &kids {
                    let b = scene.elements[k].bbox;
                    acc = Some(acc.map_or(b, |a| a.union(&b)));
                }
                if let Some(b) = acc {
                    scene.elements[i].bbox = b;
                }
            }
            done.insert(i);
        }
        for i in 0..self.elements.len() {
            visit(self, &index, i, &mut done, 0);
        }
    }

    /// Every structural invariant violation; empty means the scene is valid.
    pub fn validate(&self) -> Vec<Violation> {
        validate_scene(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    DuplicateElement { id: String },
    MalformedBbox { id: String },
    DanglingChild { group: String, child: String },
    ChildrenOnNonGroup { id: String },
    GroupContainment { group: String },
    DuplicateAnchor { anchor: String },
    EmptyAnchor,
    DanglingTarget { anchor: String, target: String },
    BadDuration { anchor: String },
    Unscheduled { anchor: String },
    UnsortedEvents,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateElement { id } => write!(f, "duplicate-element {id:?}"),
            Violation::MalformedBbox { id } => write!(f, "malformed-bbox {id:?}"),
            Violation::DanglingChild { group, child } => {
                write!(f, "dangling-child {child:?} in {group:?}")
            }
            Violation::ChildrenOnNonGroup { id } => write!(f, "children-on-non-group {id:?}"),
            Violation::GroupContainment { group } => write!(f, "group-containment {group:?}"),
            Violation::DuplicateAnchor { anchor } => write!(f, "duplicate-anchor {anchor:?}"),
            Violation::EmptyAnchor => write!(f, "empty-anchor"),
            Violation::DanglingTarget { target, .. } => write!(f, "dangling-target {target:?}"),
            Violation::BadDuration { anchor } => write!(f, "bad-duration {anchor:?}"),
            Violation::Unscheduled { anchor } => write!(f, "unscheduled {anchor:?}"),
            Violation::UnsortedEvents => write!(f, "unsorted-events"),
        }
    }
}

pub fn validate_scene(scene: &SceneProgram) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    for el in &scene.elements {
        if !ids.insert(el.id.as_str()) {
            out.push(Violation::DuplicateElement { id: el.id.clone() });
        }
        if !el.bbox.is_well_formed() {
            out.push(Violation::MalformedBbox { id: el.id.clone() });
        }
    }
    for el in &scene.elements {
        if el.kind != ElementKind::Group {
            if !el.children.is_empty() {
                out.push(Violation::ChildrenOnNonGroup { id: el.id.clone() });
            }
            continue;
        }
        let mut contained = true;
        for child in &el.children {
            match scene.element(child) {
                None => out.push(Violation::DanglingChild {
                    group: el.id.clone(),
                    child: child.clone(),
                }),
                Some(c) => contained &= el.bbox.contains(&c.bbox),
            }
        }
        if !contained {
            out.push(Violation::GroupContainment {
                group: el.id.clone(),
            });
        }
    }
    let mut anchors = HashSet::new();
    for ev in &scene.events {
        if ev.anchor_id.is_empty() {
            out.push(Violation::EmptyAnchor);
        } else if !anchors.insert(ev.anchor_id.as_str()) {
            out.push(Violation::DuplicateAnchor {
                anchor: ev.anchor_id.clone(),
            });
        }
        for t in &ev.target_ids {
            if !ids.contains(t.as_str()) {
                out.push(Violation::DanglingTarget {
                    anchor: ev.anchor_id.clone(),
                    target: t.clone(),
                });
            }
        }
        let start_ok = ev.start_s.is_none_or(|s| s.is_finite() && s >= 0.0);
        if !(ev.duration_s.is_finite() && ev.duration_s >= 0.0) || !start_ok {
            out.push(Violation::BadDuration {
                anchor: ev.anchor_id.clone(),
            });
        }
    }
    if scene.stage >= Stage::Synced {
        let mut prev = f64::NEG_INFINITY;
        let mut sorted = true;
        for ev in &scene.events {
            match ev.start_s {
                None => out.push(Violation::Unscheduled {
                    anchor: ev.anchor_id.clone(),
                }),
                Some(s) => {
                    if s < prev {
                        sorted = false;
                    }
                    prev = s;
                }
            }
        }
        if !sorted {
            out.push(Violation::UnsortedEvents);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationUnit {
    pub unit_id: String,
    pub text: String,
    #[serde(default)]
    pub anchor_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrationScript {
    pub page_index: usize,
    pub units: Vec<NarrationUnit>,
    pub word_count: usize,
}

impl NarrationScript {
    pub fn new(page_index: usize, units: Vec<NarrationUnit>) -> Self {
        let word_count = units.iter().map(|u| count_words(&u.text)).sum();
        NarrationScript {
            page_index,
            units,
            word_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioAsset {
    pub page_index: usize,
    pub media_ref: Option<String>,
    pub duration_s: f64,
    pub speaking_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Left,
    Right,
    Top,
    Bottom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub a: String,
    pub b: String,
    pub overlap_area_u2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overflow {
    pub element_id: String,
    pub violated_edges: Vec<Edge>,
    pub excess_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub page_index: usize,
    pub overlaps: Vec<Overlap>,
    pub overflows: Vec<Overflow>,
}

impl ConflictReport {
    pub fn is_empty(&self) -> bool {
        self.overlaps.is_empty() && self.overflows.is_empty()
    }

    /// Pairs plus overflows.
    pub fn conflict_count(&self) -> usize {
        self.overlaps.len() + self.overflows.len()
    }

    pub fn involved_ids(&self) -> BTreeSet<&str> {
        let mut ids = BTreeSet::new();
        for o in &self.overlaps {
            ids.insert(o.a.as_str());
            ids.insert(o.b.as_str());
        }
        for o in &self.overflows {
            ids.insert(o.element_id.as_str());
        }
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanOrder {
    #[default]
    HorizontalRightThenVerticalDown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Move {
    pub element_id: String,
    pub new_bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub moves: Vec<Move>,
    pub unresolved: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub element_id: String,
    #[serde(default)]
    pub new_bbox: Option<BBox>,
    #[serde(default)]
    pub new_content: Option<String>,
    #[serde(default)]
    pub delete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditSet {
    pub page_index: usize,
    #[serde(default)]
    pub edits: Vec<Edit>,
    #[serde(default)]
    pub editor: String,
    #[serde(default)]
    pub timestamp: String,
}

impl EditSet {
    pub fn empty(page_index: usize) -> Self {
        EditSet {
            page_index,
            edits: Vec::new(),
            editor: String::new(),
            timestamp: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSegment {
    pub page_index: usize,
    pub video_ref: String,
    pub audio_ref: String,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoArtifact {
    pub segments: Vec<VideoSegment>,
    pub merged_ref: Option<String>,
    pub total_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub video_plan: VideoArtifact,
    pub lecture_scripts: Vec<NarrationScript>,
    pub manuscript: Manuscript,
}
