//! Audio-visual synchronization: schedule animation events from narration
//! timing and make every gap an explicit wait event.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::codegen::dialect::{self, DialectError};
use crate::model::{AnimationEvent, NarrationScript, SceneProgram, Stage, Verb};
use crate::narrator::SynthesisResult;

/// Maximum allowed mismatch between the visual timeline end and the audio.
pub const DRIFT_TOLERANCE_S: f64 = 0.1;
/// Anchor prefix of wait events inserted by [`align`].
pub const SYNC_WAIT_PREFIX: &str = "sync-wait-";
const GAP_EPS: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SyncError {
    #[error("narration unit {unit:?} references anchor {anchor:?}, which the scene lacks")]
    UnknownAnchor { unit: String, anchor: String },
    #[error("{units} units but {durations} unit durations")]
    TimingMismatch { units: usize, durations: usize },
    #[error(transparent)]
    Dialect(#[from] DialectError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyncWarning {
    /// No unit references an anchor; events were spread uniformly.
    UniformSpread { events: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aligned {
    pub scene: SceneProgram,
    pub warnings: Vec<SyncWarning>,
    pub total_s: f64,
}

/// Start time of each unit: cumulative sum of the preceding durations.
pub fn unit_starts(durations: &[f64]) -> Vec<f64> {
    let mut t = 0.0;
    durations
        .iter()
        .map(|d| {
            let s = t;
            t += d;
            s
        })
        .collect()
}

/// Reorders events so referenced anchors are in time order. Each referenced
/// event carries the unreferenced events that follow it; a leading run of
/// unreferenced events stays first. Stable, so an already ordered list is
/// returned unchanged.
pub fn order_by_anchor_time(
    events: Vec<AnimationEvent>,
    anchor_times: &HashMap<&str, f64>,
) -> Vec<AnimationEvent> {
    let mut groups: Vec<(f64, Vec<AnimationEvent>)> = Vec::new();
    for ev in events {
        match anchor_times.get(ev.anchor_id.as_str()) {
            Some(&t) => groups.push((t, vec![ev])),
            None => match groups.last_mut() {
                Some(g) => g.1.push(ev),
                None => groups.push((f64::NEG_INFINITY, vec![ev])),
            },
        }
    }
    groups.sort_by(|a, b| a.0.total_cmp(&b.0));
    groups.into_iter().flat_map(|g| g.1).collect()
}

/// Start times for `events` (waits already removed) in event order, before
/// sorting. Referenced anchors take their unit's start; the rest are
/// interpolated by position between referenced neighbours, with position 0
/// pinned to 0 s and the virtual position `n` pinned to `total`.
pub fn schedule(
    events: &[AnimationEvent],
    anchor_times: &HashMap<&str, f64>,
    total: f64,
) -> Vec<f64> {
    let n = events.len();
    let mut known: Vec<Option<f64>> = events
        .iter()
        .map(|e| anchor_times.get(e.anchor_id.as_str()).copied())
        .collect();
    if n > 0 && known[0].is_none() {
        known[0] = Some(0.0);
    }
    let mut out = vec![0.0; n];
    let mut left: (usize, f64) = (0, 0.0);
    let mut i = 0;
    while i < n {
        if let Some(t) = known[i] {
            out[i] = t;
            left = (i, t);
            i += 1;
            continue;
        }
        let mut j = i;
        while j < n && known[j].is_none() {
            j += 1;
        }
        let right = if j < n {
            (j, known[j].unwrap_or(total))
        } else {
            (n, total)
        };
        let span = (right.0 - left.0) as f64;
        for (k, slot) in out.iter_mut().enumerate().take(j).skip(i) {
            let frac = (k - left.0) as f64 / span;
            *slot = left.1 + (right.1 - left.1) * frac;
        }
        i = j;
    }
    out
}

/// Assigns start times and inserts waits. Accepts unscheduled or already
/// synced scenes; the stage never moves backwards.
pub fn align(
    scene: &SceneProgram,
    script: &NarrationScript,
    synth: &SynthesisResult,
    dialect_name: &str,
) -> Result<Aligned, SyncError> {
    if script.units.len() != synth.per_unit_durations_s.len() {
        return Err(SyncError::TimingMismatch {
            units: script.units.len(),
            durations: synth.per_unit_durations_s.len(),
        });
    }
    let starts = unit_starts(&synth.per_unit_durations_s);
    let total: f64 = synth.per_unit_durations_s.iter().sum();

    let mut anchor_times: HashMap<&str, f64> = HashMap::new();
    for (u, unit) in script.units.iter().enumerate() {
        if let Some(a) = &unit.anchor_ref {
            if scene.event(a).is_none() {
                return Err(SyncError::UnknownAnchor {
                    unit: unit.unit_id.clone(),
                    anchor: a.clone(),
                });
            }
            // the first unit mentioning an anchor wins
            anchor_times.entry(a.as_str()).or_insert(starts[u]);
        }
    }
    let events: Vec<AnimationEvent> = scene
        .events
        .iter()
        .filter(|e| !(e.verb == Verb::Wait && e.anchor_id.starts_with(SYNC_WAIT_PREFIX)))
        .cloned()
        .collect();
    // anchors of inserted waits are not valid references
    anchor_times.retain(|a, _| events.iter().any(|e| e.anchor_id == *a));

    let mut warnings = Vec::new();
    if anchor_times.is_empty()
        && (events.len() >= 2 || script.units.is_empty())
        && !events.is_empty()
    {
        warnings.push(SyncWarning::UniformSpread {
            events: events.len(),
        });
    }

    let events = order_by_anchor_time(events, &anchor_times);
    let times = schedule(&events, &anchor_times, total);
    let timed: Vec<(f64, AnimationEvent)> = times.into_iter().zip(events).collect();

    let mut out_events = Vec::with_capacity(timed.len() * 2 + 1);
    let mut wait_no = 0;
    let mut push_wait = |out: &mut Vec<AnimationEvent>, at: f64, len: f64| {
        out.push(AnimationEvent {
            anchor_id: format!("{SYNC_WAIT_PREFIX}{wait_no}"),
            verb: Verb::Wait,
            target_ids: Vec::new(),
            duration_s: len,
            start_s: Some(at),
        });
        wait_no += 1;
    };
    let first = timed.first().map_or(total, |t| t.0);
    if first > GAP_EPS {
        push_wait(&mut out_events, 0.0, first);
    }
    for k in 0..timed.len() {
        let start = timed[k].0;
        let next = if k + 1 < timed.len() {
            timed[k + 1].0
        } else {
            total.max(start)
        };
        let mut ev = timed[k].1.clone();
        ev.start_s = Some(start);
        ev.duration_s = ev.duration_s.min(next - start).max(0.0);
        let end = start + ev.duration_s;
        out_events.push(ev);
        let gap = next - end;
        if gap > GAP_EPS {
            push_wait(&mut out_events, end, gap);
        }
    }

    let mut out = scene.clone();
    out.events = out_events;
    out.advance(Stage::Synced);
    dialect::refresh_source(&mut out, dialect_name)?;
    Ok(Aligned {
        scene: out,
        warnings,
        total_s: total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overrun {
    pub anchor_id: String,
    pub start_s: f64,
    pub excess_s: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DriftReport {
    /// |timeline end − audio duration| when above tolerance.
    pub end_drift_s: Option<f64>,
    pub overruns: Vec<Overrun>,
}

impl DriftReport {
    pub fn is_empty(&self) -> bool {
        self.end_drift_s.is_none() && self.overruns.is_empty()
    }
}

/// End of the visual timeline: the latest start + duration.
pub fn timeline_end(scene: &SceneProgram) -> f64 {
    scene
        .events
        .iter()
        .filter_map(|e| e.start_s.map(|s| s + e.duration_s))
        .fold(0.0, f64::max)
}

pub fn check_sync(scene: &SceneProgram, synth: &SynthesisResult) -> DriftReport {
    let audio = synth.audio.duration_s;
    let end = timeline_end(scene);
    let drift = (end - audio).abs();
    let overruns = scene
        .events
        .iter()
        .filter_map(|e| {
            let s = e.start_s?;
            (s > audio + DRIFT_TOLERANCE_S).then(|| Overrun {
                anchor_id: e.anchor_id.clone(),
                start_s: s,
                excess_s: s - audio,
            })
        })
        .collect();
    DriftReport {
        end_drift_s: (drift > DRIFT_TOLERANCE_S).then_some(drift),
        overruns,
    }
}
