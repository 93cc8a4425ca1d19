//! Visual code generation: an LLM proposes the scene IR for a page, the IR
//! is validated, and a deterministic emitter turns it into source text.

pub mod dialect;

pub use dialect::{
    emit, emit_named, parse_emitted, DialectError, DialectRegistry, DialectSpec, ParseError,
    ParseSupport, IR_JSON, MANIM_CE,
};

use serde::Deserialize;
use serde_json::json;
use std::collections::HashSet;

use crate::gateway::{Gateway, GatewayError};
use crate::llm::{self, AskError, Prompt};
use crate::model::{
    AnimationEvent, ElementKind, FrameSpec, PageBlueprint, SceneElement, SceneProgram, Stage, Verb,
};

/// Style key linking an element to the visual intent it realizes.
pub const INTENT_STYLE_KEY: &str = "intent";

#[derive(Debug, thiserror::Error)]
pub enum CodegenError {
    #[error("scene for page {page} rejected: {reason}")]
    Schema { page: usize, reason: String },
    #[error(transparent)]
    Dialect(#[from] DialectError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Deserialize)]
struct ProposedScene {
    elements: Vec<SceneElement>,
    events: Vec<AnimationEvent>,
}

fn id_ok(id: &str) -> bool {
    !id.is_empty()
        && !id
            .chars()
            .any(|c| c.is_whitespace() || c == '@' || c == ',')
}

/// Structural checks on an LLM-proposed scene for `page`.
pub fn validate_generated(scene: &SceneProgram, page: &PageBlueprint) -> Result<(), String> {
    if let Some(v) = scene.validate().first() {
        return Err(v.to_string());
    }
    for el in &scene.elements {
        if !id_ok(&el.id) {
            return Err(format!("element id {:?} has forbidden characters", el.id));
        }
    }
    for ev in &scene.events {
        if !id_ok(&ev.anchor_id) {
            return Err(format!(
                "anchor id {:?} has forbidden characters",
                ev.anchor_id
            ));
        }
    }
    for k in 0..page.visual_intents.len() {
        let key = k.to_string();
        if !scene
            .elements
            .iter()
            .any(|e| e.style.get(INTENT_STYLE_KEY) == Some(&key))
        {
            return Err(format!("visual intent {k} is not realized by any element"));
        }
    }
    // An appear on a group also reveals its children.
    let mut shown: HashSet<&str> = HashSet::new();
    let mut stack: Vec<&str> = scene
        .events
        .iter()
        .filter(|e| e.verb == Verb::Appear)
        .flat_map(|e| e.target_ids.iter().map(String::as_str))
        .collect();
    while let Some(id) = stack.pop() {
        if shown.insert(id) {
            if let Some(el) = scene.element(id) {
                stack.extend(el.children.iter().map(String::as_str));
            }
        }
    }
    for el in &scene.elements {
        if !shown.contains(el.id.as_str()) {
            return Err(format!("element {:?} never appears", el.id));
        }
    }
    Ok(())
}

/// One LLM call per page; the result carries `source_text` in `dialect`.
pub fn generate_scene(
    gw: &Gateway,
    page: &PageBlueprint,
    frame: &FrameSpec,
    dialect: &DialectSpec,
) -> Result<SceneProgram, CodegenError> {
    let blueprint = serde_json::to_string_pretty(page).expect("blueprint encodes");
    let prompt = Prompt::new(
        format!("codegen.page.{}", page.page_index),
        "codegen/scene",
        &[
            ("width", dialect::fmt_f64(frame.width_u)),
            ("height", dialect::fmt_f64(frame.height_u)),
            ("page", page.page_index.to_string()),
            ("blueprint", blueprint),
        ],
        json!({
            "blueprint": page,
            "frame": frame,
        }),
    );
    let mut scene = llm::ask(gw, &prompt, |v| {
        let proposed: ProposedScene = llm::decode(v)?;
        let mut scene = SceneProgram {
            page_index: page.page_index,
            elements: proposed.elements,
            events: proposed.events,
            source_text: String::new(),
            stage: Stage::Generated,
        };
        for ev in &mut scene.events {
            ev.start_s = None;
        }
        if scene.elements.iter().any(|e| e.kind == ElementKind::Group) {
            scene.recompute_groups();
        }
        validate_generated(&scene, page)?;
        Ok(scene)
    })
    .map_err(|e| match e {
        AskError::Gateway(g) => CodegenError::Gateway(g),
        AskError::Schema { reason, .. } => CodegenError::Schema {
            page: page.page_index,
            reason,
        },
    })?;
    scene.source_text = emit(&scene, dialect)?;
    Ok(scene)
}
