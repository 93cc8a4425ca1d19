//! Content composer: outline → skeleton → manuscript → duration-refined
//! manuscript.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::gateway::{Gateway, GatewayError};
use crate::llm::{self, AskError, Prompt};
use crate::model::{LectureOutline, Manuscript, ModelError, Section, Skeleton};
use crate::words::{count_words, sentences};

/// Relative tolerance between estimated and target duration.
pub const DURATION_TOLERANCE: f64 = 0.15;
pub const MAX_REFINE_ITERATIONS: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum ComposerError {
    #[error("invalid outline: {0}")]
    Outline(#[from] ModelError),
    #[error("skeleton rejected: {reason}")]
    Skeleton { reason: String, raw: String },
    #[error("expansion of concept #{index} ({concept_id}) rejected: {reason}")]
    Expand {
        index: usize,
        concept_id: String,
        reason: String,
    },
    #[error("rewrite of section #{section_index} rejected: {reason}")]
    Refine {
        section_index: usize,
        reason: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineKind {
    TrimSection,
    ExpandSection,
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementAction {
    pub kind: RefineKind,
    pub section_index: usize,
    pub delta_words_target: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub manuscript: Manuscript,
    pub actions: Vec<RefinementAction>,
    pub converged: bool,
    pub final_estimate_s: f64,
}

pub fn skeletonize(gw: &Gateway, outline: &LectureOutline) -> Result<Skeleton, ComposerError> {
    outline.validate()?;
    let audience = serde_json::to_value(outline.audience_level)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    let prompt = Prompt::new(
        "composer.skeletonize",
        "composer/skeletonize",
        &[
            ("audience", audience.clone()),
            ("language", outline.language.clone()),
            ("keywords", outline.topic_keywords.join(", ")),
            (
                "notes",
                outline
                    .free_notes
                    .clone()
                    .unwrap_or_else(|| "(none)".into()),
            ),
        ],
        json!({
            "audience": audience,
            "keywords": outline.topic_keywords,
            "language": outline.language,
            "notes": outline.free_notes,
        }),
    );
    llm::ask(gw, &prompt, |v| {
        let sk: Skeleton = llm::decode(v)?;
        sk.validate().map_err(|e| e.to_string())?;
        Ok(sk)
    })
    .map_err(|e| match e {
        AskError::Gateway(g) => ComposerError::Gateway(g),
        AskError::Schema { reason, raw, .. } => ComposerError::Skeleton { reason, raw },
    })
}

#[derive(Deserialize)]
struct ExpandedSection {
    heading: String,
    body: String,
    #[serde(default)]
    formal_expressions: Vec<String>,
    #[serde(default)]
    examples: Vec<String>,
}

fn expand_one(
    gw: &Gateway,
    skeleton: &Skeleton,
    index: usize,
    language: &str,
) -> Result<Section, ComposerError> {
    let c = &skeleton.concepts[index];
    let prereqs: Vec<&str> = c
        .depends_on
        .iter()
        .filter_map(|d| skeleton.concepts.iter().find(|x| &x.id == d))
        .map(|x| x.title.as_str())
        .collect();
    let prompt = Prompt::new(
        format!("composer.expand.{}", index + 1),
        "composer/expand",
        &[
            ("language", language.to_string()),
            ("title", c.title.clone()),
            ("id", c.id.clone()),
            ("gist", c.one_line_gist.clone()),
            (
                "prerequisites",
                if prereqs.is_empty() {
                    "(none)".into()
                } else {
                    prereqs.join(", ")
                },
            ),
        ],
        json!({
            "gist": c.one_line_gist,
            "id": c.id,
            "index": index,
            "language": language,
            "prerequisites": prereqs,
            "title": c.title,
        }),
    );
    let out = llm::ask(gw, &prompt, |v| {
        let s: ExpandedSection = llm::decode(v)?;
        if s.heading.trim().is_empty() {
            return Err("empty heading".into());
        }
        if count_words(&s.body) == 0 {
            return Err("empty body".into());
        }
        Ok(s)
    });
    match out {
        Ok(s) => Ok(Section {
            concept_id: c.id.clone(),
            heading: s.heading,
            body: s.body,
            formal_expressions: s.formal_expressions,
            examples: s.examples,
        }),
        Err(AskError::Gateway(g)) => Err(ComposerError::Gateway(g)),
        Err(AskError::Schema { reason, .. }) => Err(ComposerError::Expand {
            index: index + 1,
            concept_id: c.id.clone(),
            reason,
        }),
    }
}

/// One section per concept, in skeleton order. Concepts are expanded on up
/// to `parallelism` threads.
pub fn expand(
    gw: &Gateway,
    skeleton: &Skeleton,
    language: &str,
    parallelism: usize,
) -> Result<Manuscript, ComposerError> {
    skeleton.validate().map_err(ComposerError::Outline)?;
    let n = skeleton.concepts.len();
    let workers = parallelism.clamp(1, n.max(1));
    let mut results: Vec<Option<Result<Section, ComposerError>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..n)
                        .step_by(workers)
                        .map(|i| (i, expand_one(gw, skeleton, i, language)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("expand worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    let sections = results
        .into_iter()
        .map(|r| r.expect("every concept expanded"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Manuscript::new(sections))
}

/// Spoken-duration proxy in seconds.
pub fn estimate_duration(manuscript: &Manuscript, wpm: f64) -> f64 {
    manuscript.word_count as f64 / wpm * 60.0
}

fn within_tolerance(estimate: f64, target: f64) -> bool {
    (estimate - target).abs() / target <= DURATION_TOLERANCE
}

/// Words of the first sentence: a trim may not cut below this.
fn trim_floor(section: &Section) -> usize {
    sentences(&section.body)
        .first()
        .map_or(0, |s| count_words(s))
        .max(1)
}

/// Picks the next action, or `None` when nothing can be done.
pub fn plan_action(manuscript: &Manuscript, target_s: f64, wpm: f64) -> Option<RefinementAction> {
    let target_words = (target_s * wpm / 60.0).round() as i64;
    let total_delta = target_words - manuscript.word_count as i64;
    if total_delta == 0 || manuscript.sections.is_empty() {
        return None;
    }
    if total_delta < 0 {
        // argmax over trimmable sections; ties keep the lower index
        let mut best: Option<(usize, usize)> = None;
        for (i, s) in manuscript.sections.iter().enumerate() {
            let wc = s.word_count();
            if wc > trim_floor(s) && best.is_none_or(|(_, b)| wc > b) {
                best = Some((i, wc));
            }
        }
        let (i, wc) = best?;
        let room = (wc - trim_floor(&manuscript.sections[i])) as i64;
        Some(RefinementAction {
            kind: RefineKind::TrimSection,
            section_index: i,
            delta_words_target: total_delta.max(-room),
        })
    } else {
        let mut best: Option<(usize, usize)> = None;
        for (i, s) in manuscript.sections.iter().enumerate() {
            let wc = s.word_count();
            if best.is_none_or(|(_, b)| wc < b) {
                best = Some((i, wc));
            }
        }
        let (i, _) = best?;
        Some(RefinementAction {
            kind: RefineKind::ExpandSection,
            section_index: i,
            delta_words_target: total_delta,
        })
    }
}

#[derive(Deserialize)]
struct Rewritten {
    body: String,
}

/// Duration-targeted refinement. Sections are rewritten in place; their
/// number and order never change.
pub fn refine(
    gw: &Gateway,
    manuscript: &Manuscript,
    target_s: f64,
    wpm: f64,
) -> Result<RefineOutcome, ComposerError> {
    assert!(
        target_s > 0.0 && wpm > 0.0,
        "refine needs positive target and rate"
    );
    let mut current = manuscript.clone();
    let mut actions = Vec::new();
    for iteration in 0..MAX_REFINE_ITERATIONS {
        if within_tolerance(estimate_duration(&current, wpm), target_s) {
            break;
        }
        let Some(action) = plan_action(&current, target_s, wpm) else {
            break;
        };
        let section = &current.sections[action.section_index];
        let current_words = section.word_count();
        let target_words = (current_words as i64 + action.delta_words_target).max(1);
        let verb = match action.kind {
            RefineKind::TrimSection => "trim",
            RefineKind::ExpandSection => "expand",
            RefineKind::NoOp => "keep",
        };
        let prompt = Prompt::new(
            format!("composer.refine.{}", iteration + 1),
            "composer/refine",
            &[
                ("target_words", target_words.to_string()),
                ("current_words", current_words.to_string()),
                ("action", verb.to_string()),
                ("heading", section.heading.clone()),
                ("body", section.body.clone()),
            ],
            json!({
                "action": verb,
                "body": section.body,
                "current_words": current_words,
                "heading": section.heading,
                "section_index": action.section_index,
                "target_words": target_words,
            }),
        );
        let body = llm::ask(gw, &prompt, |v: &Value| {
            let r: Rewritten = llm::decode(v)?;
            if sentences(&r.body).is_empty() {
                return Err("rewritten body has no sentence".into());
            }
            Ok(r.body)
        })
        .map_err(|e| match e {
            AskError::Gateway(g) => ComposerError::Gateway(g),
            AskError::Schema { reason, .. } => ComposerError::Refine {
                section_index: action.section_index,
                reason,
            },
        })?;
        let mut sections = current.sections.clone();
        sections[action.section_index].body = body;
        current = Manuscript::new(sections);
        actions.push(action);
    }
    let final_estimate_s = estimate_duration(&current, wpm);
    Ok(RefineOutcome {
        converged: within_tolerance(final_estimate_s, target_s),
        manuscript: current,
        actions,
        final_estimate_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section(words: usize) -> Section {
        // a one-word opening sentence, so trims may cut down to a single word
        let rest = (1..words)
            .map(|i| format!("w{i}"))
            .collect::<Vec<_>>()
            .join(" ");
        let body = if words > 1 {
            format!("w0. {rest}.")
        } else {
            "w0.".to_string()
        };
        Section {
            concept_id: "c".into(),
            heading: "H".into(),
            body,
            formal_expressions: vec![],
            examples: vec![],
        }
    }

    #[test]
    fn estimate_is_words_over_rate() {
        let m = Manuscript::new(vec![section(1000), section(1000)]);
        assert_eq!(estimate_duration(&m, 160.0), 750.0);
        assert_eq!(estimate_duration(&Manuscript::new(vec![]), 160.0), 0.0);
    }

    #[test]
    fn estimate_is_linear_in_word_count() {
        let m1 = Manuscript::new(vec![section(120), section(45)]);
        let m2 = Manuscript::new(vec![section(240), section(90)]);
        assert_eq!(
            estimate_duration(&m2, 133.0),
            2.0 * estimate_duration(&m1, 133.0)
        );
    }

    #[test]
    fn trim_targets_longest_section_with_lower_index_on_ties() {
        let m = Manuscript::new(vec![section(300), section(500), section(500)]);
        let a = plan_action(&m, 300.0, 160.0).unwrap();
        assert_eq!(a.kind, RefineKind::TrimSection);
        assert_eq!(a.section_index, 1);
        // target 800 words; 1300 present; longest can drop at most 499
        assert_eq!(a.delta_words_target, -499);
    }

    #[test]
    fn expand_targets_shortest_section() {
        let m = Manuscript::new(vec![section(300), section(100), section(100)]);
        let a = plan_action(&m, 600.0, 160.0).unwrap();
        assert_eq!(a.kind, RefineKind::ExpandSection);
        assert_eq!(a.section_index, 1);
        assert_eq!(a.delta_words_target, 1100);
    }

    #[test]
    fn no_action_at_exact_target() {
        let m = Manuscript::new(vec![section(160)]);
        assert_eq!(plan_action(&m, 60.0, 160.0), None);
    }
}
