//! Render-and-repair: check the emitted script, ask for a scoped fix on
//! failure, and after `tau` failed repairs swap complex elements for
//! standard templates.

use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::BTreeSet;

use crate::codegen::dialect::{self, DialectError};
use crate::gateway::{Gateway, GatewayError};
use crate::llm::{self, AskError, Prompt};
use crate::model::{ElementKind, SceneElement, SceneProgram, Stage, TEMPLATE_STYLE_KEY};
use crate::render::{CheckOutcome, RenderJob, Renderer, RendererUnavailable};

pub const DEFAULT_TAU: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderAttempt {
    pub attempt_index: usize,
    pub outcome: AttemptOutcome,
    #[serde(default)]
    pub error_trace: Option<String>,
    /// Elements changed by the repair that followed this attempt.
    #[serde(default)]
    pub repaired_element_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalOutcome {
    Ok,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substitution {
    pub element_id: String,
    pub template: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugTrace {
    pub attempts: Vec<RenderAttempt>,
    pub final_outcome: FinalOutcome,
    pub fallback_substitutions: Vec<Substitution>,
}

impl DebugTrace {
    /// Repair rounds spent: every failed check was followed by a repair,
    /// except the one that triggered the fallback.
    pub fn repairs(&self) -> usize {
        let failed = self
            .attempts
            .iter()
            .filter(|a| a.outcome == AttemptOutcome::Error)
            .count();
        failed - usize::from(self.final_outcome == FinalOutcome::Fallback)
    }

    pub fn renders(&self) -> usize {
        self.attempts.len()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DebugError {
    #[error(transparent)]
    RendererUnavailable(#[from] RendererUnavailable),
    #[error(transparent)]
    Dialect(#[from] DialectError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("templated scene for page {page} still fails to render: {trace}")]
    TemplateFailed { page: usize, trace: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepairScope {
    /// Elements targeted by the event under this anchor.
    Anchor {
        anchor_id: String,
        element_ids: Vec<String>,
    },
    Whole,
}

/// 1-based line number of the last `line N` mention in a trace.
pub fn error_line(trace: &str) -> Option<usize> {
    let mut found = None;
    let mut rest = trace;
    while let Some(pos) = rest.find("line ") {
        let tail = &rest[pos + 5..];
        let digits: String = tail.chars().take_while(char::is_ascii_digit).collect();
        if let Ok(n) = digits.parse::<usize>() {
            found = Some(n);
        }
        rest = tail;
    }
    found
}

/// Finds the fragment to repair: the nearest anchor marker above the error
/// line, or the whole scene when there is none.
pub fn localize(scene: &SceneProgram, trace: &str) -> RepairScope {
    let anchor = error_line(trace).and_then(|line| dialect::anchor_above(&scene.source_text, line));
    match anchor.and_then(|a| scene.event(&a).map(|e| (a.clone(), e.target_ids.clone()))) {
        Some((anchor_id, ids)) if !ids.is_empty() => RepairScope::Anchor {
            anchor_id,
            element_ids: ids,
        },
        _ => RepairScope::Whole,
    }
}

#[derive(Deserialize)]
struct Patch {
    elements: Vec<SceneElement>,
}

/// One scoped LLM repair. Only elements inside the localized fragment may
/// change; their ids must be kept.
pub fn repair(
    gw: &Gateway,
    scene: &SceneProgram,
    trace: &str,
    round: usize,
    dialect_name: &str,
) -> Result<(SceneProgram, Vec<String>), DebugError> {
    let scope = localize(scene, trace);
    let ids: Vec<String> = match &scope {
        RepairScope::Anchor { element_ids, .. } => element_ids.clone(),
        RepairScope::Whole => scene.elements.iter().map(|e| e.id.clone()).collect(),
    };
    let fragment: Vec<&SceneElement> = ids.iter().filter_map(|id| scene.element(id)).collect();
    let anchor = match &scope {
        RepairScope::Anchor { anchor_id, .. } => json!(anchor_id),
        RepairScope::Whole => json!(null),
    };
    let prompt = Prompt::new(
        format!("debugger.page.{}.repair.{round}", scene.page_index),
        "debugger/repair",
        &[
            ("page", scene.page_index.to_string()),
            ("trace", trace.to_string()),
            (
                "fragment",
                serde_json::to_string_pretty(&fragment).expect("fragment encodes"),
            ),
        ],
        json!({"anchor": anchor, "fragment": fragment, "trace": trace}),
    );
    let wanted: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let result = llm::ask(gw, &prompt, |v| {
        let patch: Patch = llm::decode(v)?;
        let got: BTreeSet<&str> = patch.elements.iter().map(|e| e.id.as_str()).collect();
        if got != wanted {
            return Err(format!(
                "repair must return exactly the elements {wanted:?}"
            ));
        }
        let mut out = scene.clone();
        for el in &patch.elements {
            *out.element_mut(&el.id).expect("id checked") = el.clone();
        }
        if let Some(v) = out.validate().first() {
            return Err(v.to_string());
        }
        let changed: Vec<String> = patch
            .elements
            .iter()
            .filter(|e| scene.element(&e.id) != Some(*e))
            .map(|e| e.id.clone())
            .collect();
        Ok((out, changed))
    });
    match result {
        Ok((mut out, changed)) => {
            dialect::refresh_source(&mut out, dialect_name)?;
            Ok((out, changed))
        }
        // a rejected repair is a failed round: the scene stays as it was
        Err(AskError::Schema { .. }) => Ok((scene.clone(), Vec::new())),
        Err(AskError::Gateway(g)) => Err(g.into()),
    }
}

/// Template standing in for `kind`, and the kind of the replacement.
pub fn template_for(kind: ElementKind) -> Option<(&'static str, ElementKind)> {
    match kind {
        ElementKind::Formula => Some(("plain_text_box", ElementKind::Text)),
        ElementKind::Shape => Some(("labeled_rect", ElementKind::Shape)),
        ElementKind::ImagePlaceholder => Some(("gray_labeled_rect", ElementKind::ImagePlaceholder)),
        ElementKind::Text | ElementKind::Group => None,
    }
}

/// Replaces each listed element by its standard template (id suffixed
/// `_tpl`, same box, same content) and retargets events and group children.
/// Elements without a template, already templated, or unknown are skipped.
pub fn fallback(scene: &SceneProgram, failing_ids: &[String]) -> (SceneProgram, Vec<Substitution>) {
    let mut out = scene.clone();
    let mut subs = Vec::new();
    for id in failing_ids {
        let Some(el) = out.element(id) else { continue };
        if el.template().is_some() {
            continue;
        }
        let Some((template, kind)) = template_for(el.kind) else {
            continue;
        };
        let mut new_id = format!("{id}_tpl");
        while out.element(&new_id).is_some() {
            new_id.push('_');
        }
        let el = out.element_mut(id).expect("exists");
        el.id = new_id.clone();
        el.kind = kind;
        el.style.insert(TEMPLATE_STYLE_KEY.into(), template.into());
        for ev in &mut out.events {
            for t in &mut ev.target_ids {
                if t == id {
                    *t = new_id.clone();
                }
            }
        }
        for g in &mut out.elements {
            for c in &mut g.children {
                if c == id {
                    *c = new_id.clone();
                }
            }
        }
        subs.push(Substitution {
            element_id: id.clone(),
            template: template.into(),
        });
    }
    (out, subs)
}

/// Complex elements that are not yet templates, in scene order.
pub fn complex_ids(scene: &SceneProgram) -> Vec<String> {
    scene
        .elements
        .iter()
        .filter(|e| e.template().is_none() && template_for(e.kind).is_some())
        .map(|e| e.id.clone())
        .collect()
}

fn check(
    renderer: &dyn Renderer,
    scene: &SceneProgram,
    dialect_name: &str,
) -> Result<CheckOutcome, RendererUnavailable> {
    renderer.check(&RenderJob {
        page_index: scene.page_index,
        dialect: dialect_name,
        source: &scene.source_text,
    })
}

/// The loop: check, repair up to `tau` times, then template every complex
/// element and check once more. An unreachable renderer aborts without
/// consuming a round.
pub fn run_debug_loop(
    gw: &Gateway,
    scene: &SceneProgram,
    renderer: &dyn Renderer,
    tau: u32,
    dialect_name: &str,
) -> Result<(SceneProgram, DebugTrace), DebugError> {
    assert!(tau >= 1, "tau must be positive");
    let mut current = scene.clone();
    if current.source_text.is_empty() {
        dialect::refresh_source(&mut current, dialect_name)?;
    }
    let mut attempts = Vec::new();
    let mut repairs = 0u32;
    loop {
        match check(renderer, &current, dialect_name)? {
            CheckOutcome::Ok => {
                attempts.push(RenderAttempt {
                    attempt_index: attempts.len(),
                    outcome: AttemptOutcome::Ok,
                    error_trace: None,
                    repaired_element_ids: Vec::new(),
                });
                current.advance(Stage::Debugged);
                dialect::refresh_source(&mut current, dialect_name)?;
                return Ok((
                    current,
                    DebugTrace {
                        attempts,
                        final_outcome: FinalOutcome::Ok,
                        fallback_substitutions: Vec::new(),
                    },
                ));
            }
            CheckOutcome::Error(trace) => {
                let trace = if trace.trim().is_empty() {
                    "render check failed".to_string()
                } else {
                    trace
                };
                if repairs == tau {
                    attempts.push(RenderAttempt {
                        attempt_index: attempts.len(),
                        outcome: AttemptOutcome::Error,
                        error_trace: Some(trace),
                        repaired_element_ids: Vec::new(),
                    });
                    break;
                }
                repairs += 1;
                let (next, changed) = repair(gw, &current, &trace, repairs as usize, dialect_name)?;
                attempts.push(RenderAttempt {
                    attempt_index: attempts.len(),
                    outcome: AttemptOutcome::Error,
                    error_trace: Some(trace),
                    repaired_element_ids: changed,
                });
                current = next;
            }
        }
    }

    let (mut templated, subs) = fallback(&current, &complex_ids(&current));
    dialect::refresh_source(&mut templated, dialect_name)?;
    match check(renderer, &templated, dialect_name)? {
        CheckOutcome::Ok => {
            attempts.push(RenderAttempt {
                attempt_index: attempts.len(),
                outcome: AttemptOutcome::Ok,
                error_trace: None,
                repaired_element_ids: Vec::new(),
            });
        }
        CheckOutcome::Error(trace) => {
            return Err(DebugError::TemplateFailed {
                page: templated.page_index,
                trace,
            })
        }
    }
    templated.advance(Stage::Debugged);
    dialect::refresh_source(&mut templated, dialect_name)?;
    Ok((
        templated,
        DebugTrace {
            attempts,
            final_outcome: FinalOutcome::Fallback,
            fallback_substitutions: subs,
        },
    ))
}
