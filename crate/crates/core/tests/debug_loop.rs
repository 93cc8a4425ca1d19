use std::sync::Arc;

use lectern::codegen::dialect;
use lectern::debugger::{self, AttemptOutcome, DebugError, FinalOutcome};
use lectern::gateway::{FixtureStore, Gateway, Service};
use lectern::mock::MockLlm;
use lectern::model::{
    AnimationEvent, BBox, ElementKind, SceneElement, SceneProgram, Stage, Verb, Violation,
};
use lectern::render::{CheckOutcome, RenderJob, Renderer, ScriptedRenderer};
use proptest::prelude::*;

const TAU: u32 = 3;

fn gateway() -> Gateway {
    Gateway::new(FixtureStore::passthrough(), 0).with_transport(Service::Llm, Arc::new(MockLlm))
}

fn scene(kinds: &[ElementKind], dialect_name: &str) -> SceneProgram {
    let mut s = SceneProgram::empty(4);
    for (i, k) in kinds.iter().enumerate() {
        let id = format!("e{i}");
        s.elements.push(SceneElement::new(
            &id,
            *k,
            format!("content {i}"),
            BBox::new(-6.0 + 3.0 * i as f64, 0.0, 2.0, 1.0),
        ));
        s.events.push(AnimationEvent::new(
            format!("a{}", i + 1),
            Verb::Appear,
            &[id.as_str()],
            1.0,
        ));
    }
    dialect::refresh_source(&mut s, dialect_name).unwrap();
    s
}

fn passes_strict_check(s: &SceneProgram, dialect_name: &str) -> bool {
    let strict = ScriptedRenderer::failing(usize::MAX);
    let job = RenderJob {
        page_index: s.page_index,
        dialect: dialect_name,
        source: &s.source_text,
    };
    matches!(strict.check(&job), Ok(CheckOutcome::Ok))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn outcome_depends_only_on_failure_count(k in 0usize..10, tau in 1u32..5, kinds in prop::collection::vec(
        prop::sample::select(vec![ElementKind::Text, ElementKind::Formula, ElementKind::Shape, ElementKind::ImagePlaceholder]), 1..5)) {
        prop_assume!(kinds.iter().any(|k| *k != ElementKind::Text));
        let s = scene(&kinds, "manim-ce");
        let renderer = ScriptedRenderer::failing(k);
        let (out, trace) = debugger::run_debug_loop(&gateway(), &s, &renderer, tau, "manim-ce").unwrap();
        prop_assert_eq!(out.stage, Stage::Debugged);
        prop_assert_eq!(trace.attempts.last().map(|a| a.outcome), Some(AttemptOutcome::Ok));
        if k <= tau as usize {
            prop_assert_eq!(trace.final_outcome, FinalOutcome::Ok);
            prop_assert_eq!(renderer.calls(), k + 1);
            prop_assert_eq!(trace.repairs(), k);
        } else {
            prop_assert_eq!(trace.final_outcome, FinalOutcome::Fallback);
            prop_assert_eq!(trace.repairs(), tau as usize);
            prop_assert_eq!(renderer.calls(), tau as usize + 2);
            prop_assert!(passes_strict_check(&out, "manim-ce"));
            prop_assert!(debugger::complex_ids(&out).is_empty());
        }
        for (i, a) in trace.attempts.iter().enumerate() {
            prop_assert_eq!(a.attempt_index, i);
        }
    }
}

#[test]
fn fallback_keeps_event_targets_consistent() {
    let s = scene(
        &[ElementKind::Text, ElementKind::Formula, ElementKind::Shape],
        "manim-ce",
    );
    let (out, trace) = debugger::run_debug_loop(
        &gateway(),
        &s,
        &ScriptedRenderer::failing(99),
        TAU,
        "manim-ce",
    )
    .unwrap();
    assert_eq!(trace.final_outcome, FinalOutcome::Fallback);
    assert_eq!(trace.fallback_substitutions.len(), 2);
    // the input was never synced, so only missing start times may be reported
    let v = out.validate();
    assert!(
        v.iter().all(|x| matches!(x, Violation::Unscheduled { .. })),
        "{v:?}"
    );
    for ev in &out.events {
        for t in &ev.target_ids {
            assert!(out.element(t).is_some(), "dangling target {t}");
        }
    }
}

#[test]
fn plain_text_scene_needs_one_check() {
    let s = scene(&[ElementKind::Text, ElementKind::Text], "manim-ce");
    let renderer = ScriptedRenderer::failing(5);
    let (_, trace) = debugger::run_debug_loop(&gateway(), &s, &renderer, TAU, "manim-ce").unwrap();
    assert_eq!(trace.final_outcome, FinalOutcome::Ok);
    assert_eq!(renderer.calls(), 1);
}

#[test]
fn unreachable_renderer_aborts_without_spending_rounds() {
    let s = scene(&[ElementKind::Formula], "manim-ce");
    let renderer = ScriptedRenderer::failing(1).with_outages(1);
    let err = debugger::run_debug_loop(&gateway(), &s, &renderer, TAU, "manim-ce").unwrap_err();
    assert!(matches!(err, DebugError::RendererUnavailable(_)));
    // the same renderer, now reachable, still has its one scripted failure
    let (_, trace) = debugger::run_debug_loop(&gateway(), &s, &renderer, TAU, "manim-ce").unwrap();
    assert_eq!(trace.repairs(), 1);
}

#[test]
fn failed_attempts_record_traces() {
    let s = scene(&[ElementKind::Formula, ElementKind::Shape], "manim-ce");
    let (_, trace) = debugger::run_debug_loop(
        &gateway(),
        &s,
        &ScriptedRenderer::failing(2),
        TAU,
        "manim-ce",
    )
    .unwrap();
    let errors: Vec<_> = trace
        .attempts
        .iter()
        .filter(|a| a.outcome == AttemptOutcome::Error)
        .collect();
    assert_eq!(errors.len(), 2);
    assert!(errors
        .iter()
        .all(|a| a.error_trace.as_deref().is_some_and(|t| t.contains("line"))));
}
