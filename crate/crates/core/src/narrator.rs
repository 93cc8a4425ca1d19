//! Narration with look-back, and the TTS contract that times it.

use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::HashSet;

use crate::canon;
use crate::gateway::{Gateway, GatewayError, Service, ServiceRequest};
use crate::llm::{self, AskError, Prompt};
use crate::model::{AudioAsset, NarrationScript, NarrationUnit, PageBlueprint, SceneProgram, Verb};
use crate::words::count_words;

/// Units of the previous script the narrator may see.
pub const LOOKBACK_UNITS: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum NarrateError {
    #[error("narration for page {page} rejected: {reason}")]
    Schema { page: usize, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, thiserror::Error)]
pub enum TtsError {
    #[error("tts backend failed: {0}")]
    Backend(String),
    #[error("tts response inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub audio: AudioAsset,
    pub per_unit_durations_s: Vec<f64>,
}

/// The last [`LOOKBACK_UNITS`] units of `prev`, oldest first.
pub fn lookback(prev: Option<&NarrationScript>) -> &[NarrationUnit] {
    match prev {
        Some(p) => &p.units[p.units.len().saturating_sub(LOOKBACK_UNITS)..],
        None => &[],
    }
}

pub fn narration_prompt(
    page: &PageBlueprint,
    prev: Option<&NarrationScript>,
    scene: &SceneProgram,
    language: &str,
) -> Prompt {
    let tail = lookback(prev);
    let tail_text = if tail.is_empty() {
        "(this is the first slide)".to_string()
    } else {
        tail.iter()
            .map(|u| u.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let anchors: Vec<serde_json::Value> = scene
        .events
        .iter()
        .filter(|e| e.verb != Verb::Wait)
        .map(|e| {
            let what: Vec<&str> = e
                .target_ids
                .iter()
                .filter_map(|t| scene.element(t))
                .map(|el| el.content.as_str())
                .collect();
            json!({"anchor_id": e.anchor_id, "content": what, "targets": e.target_ids, "verb": e.verb})
        })
        .collect();
    let anchor_lines = anchors
        .iter()
        .map(|a| {
            format!(
                "- {}: {}",
                a["anchor_id"].as_str().unwrap_or(""),
                a["content"]
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let bullets = page
        .bullet_points
        .iter()
        .enumerate()
        .map(|(i, b)| format!("{}. {b}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    Prompt::new(
        format!("narrator.page.{}", page.page_index),
        "narrator/narrate",
        &[
            ("page", page.page_index.to_string()),
            ("language", language.to_string()),
            ("title", page.title.clone()),
            (
                "bullets",
                if bullets.is_empty() {
                    "(none)".into()
                } else {
                    bullets
                },
            ),
            (
                "anchors",
                if anchor_lines.is_empty() {
                    "(none)".into()
                } else {
                    anchor_lines
                },
            ),
            ("lookback", tail_text),
        ],
        json!({
            "anchors": anchors,
            "blueprint": page,
            "language": language,
            "lookback": tail,
        }),
    )
}

#[derive(Deserialize)]
struct ProposedUnits {
    units: Vec<NarrationUnit>,
}

pub fn validate_units(units: &[NarrationUnit], scene: &SceneProgram) -> Result<(), String> {
    let anchors: HashSet<&str> = scene.anchors().into_iter().collect();
    let mut ids = HashSet::new();
    for u in units {
        if count_words(&u.text) == 0 {
            return Err(format!("unit {:?} has no words", u.unit_id));
        }
        if !ids.insert(u.unit_id.as_str()) {
            return Err(format!("duplicate unit id {:?}", u.unit_id));
        }
        if let Some(a) = &u.anchor_ref {
            if !anchors.contains(a.as_str()) {
                return Err(format!(
                    "unit {:?} references unknown anchor {a:?}",
                    u.unit_id
                ));
            }
        }
    }
    Ok(())
}

/// One LLM call conditioned on the page and the tail of the previous
/// page's script. Anchor references are checked against `scene`.
pub fn compose_narration(
    gw: &Gateway,
    page: &PageBlueprint,
    prev: Option<&NarrationScript>,
    scene: &SceneProgram,
    language: &str,
) -> Result<NarrationScript, NarrateError> {
    let prompt = narration_prompt(page, prev, scene, language);
    llm::ask(gw, &prompt, |v| {
        let p: ProposedUnits = llm::decode(v)?;
        validate_units(&p.units, scene)?;
        Ok(NarrationScript::new(page.page_index, p.units))
    })
    .map_err(|e| match e {
        AskError::Gateway(g) => NarrateError::Gateway(g),
        AskError::Schema { reason, .. } => NarrateError::Schema {
            page: page.page_index,
            reason,
        },
    })
}

/// What a TTS backend reports for one script.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtsResponse {
    pub duration_s: f64,
    pub per_unit_durations_s: Vec<f64>,
    #[serde(default)]
    pub media_ref: Option<String>,
}

pub trait TtsBackend: Send + Sync {
    fn speak(&self, script: &NarrationScript, voice: &str) -> Result<TtsResponse, TtsError>;
}

/// Timing-only backend speaking at a fixed words-per-minute rate.
#[derive(Debug, Clone, Copy)]
pub struct MockTts {
    pub wpm: f64,
}

impl MockTts {
    pub fn words_per_second(&self) -> f64 {
        self.wpm / 60.0
    }
}

impl TtsBackend for MockTts {
    fn speak(&self, script: &NarrationScript, _voice: &str) -> Result<TtsResponse, TtsError> {
        let rate = self.words_per_second();
        Ok(TtsResponse {
            duration_s: script.word_count as f64 / rate,
            per_unit_durations_s: script
                .units
                .iter()
                .map(|u| count_words(&u.text) as f64 / rate)
                .collect(),
            media_ref: None,
        })
    }
}

/// TTS service reached through the gateway. Request:
/// `{language, text, units, voice_id}`; response: [`TtsResponse`].
pub struct GatewayTts<'a> {
    pub gateway: &'a Gateway,
    pub language: String,
}

impl TtsBackend for GatewayTts<'_> {
    fn speak(&self, script: &NarrationScript, voice: &str) -> Result<TtsResponse, TtsError> {
        let units: Vec<&str> = script.units.iter().map(|u| u.text.as_str()).collect();
        let payload = json!({
            "language": self.language,
            "text": units.join(" "),
            "units": units,
            "voice_id": voice,
        });
        let req = ServiceRequest {
            service: Service::Tts,
            payload: canon::to_compact(&payload).expect("tts payload encodes"),
            purpose: format!("tts.page.{}", script.page_index),
        };
        let resp = self.gateway.call(&req)?;
        serde_json::from_slice(&resp.payload)
            .map_err(|e| TtsError::Backend(format!("bad response: {e}")))
    }
}

pub fn synthesize(
    script: &NarrationScript,
    voice: &str,
    backend: &dyn TtsBackend,
) -> Result<SynthesisResult, TtsError> {
    let resp = backend.speak(script, voice)?;
    if resp.per_unit_durations_s.len() != script.units.len() {
        return Err(TtsError::Inconsistent(format!(
            "{} unit durations for {} units",
            resp.per_unit_durations_s.len(),
            script.units.len()
        )));
    }
    if resp
        .per_unit_durations_s
        .iter()
        .any(|d| !(d.is_finite() && *d >= 0.0))
        || !resp.duration_s.is_finite()
    {
        return Err(TtsError::Inconsistent(
            "non-finite or negative duration".into(),
        ));
    }
    let sum: f64 = resp.per_unit_durations_s.iter().sum();
    if (sum - resp.duration_s).abs() > 1e-6 {
        return Err(TtsError::Inconsistent(format!(
            "unit durations sum to {sum}, audio is {}",
            resp.duration_s
        )));
    }
    let speaking_rate = if resp.duration_s > 0.0 {
        script.word_count as f64 / resp.duration_s
    } else if script.word_count == 0 {
        0.0
    } else {
        return Err(TtsError::Inconsistent(
            "zero-length audio for non-empty script".into(),
        ));
    };
    Ok(SynthesisResult {
        audio: AudioAsset {
            page_index: script.page_index,
            media_ref: resp.media_ref,
            duration_s: resp.duration_s,
            speaking_rate,
        },
        per_unit_durations_s: resp.per_unit_durations_s,
    })
}
