//! Compile-check and repair loop against a renderer that fails a set
//! number of times. Past the repair budget, complex elements fall back to
//! plain templates.

use std::sync::Arc;

use lectern::codegen::dialect;
use lectern::debugger;
use lectern::gateway::{FixtureStore, Gateway, Service};
use lectern::mock::MockLlm;
use lectern::model::{AnimationEvent, BBox, ElementKind, SceneElement, SceneProgram, Verb};
use lectern::render::ScriptedRenderer;

fn main() {
    let gw = Gateway::new(FixtureStore::passthrough(), 0)
        .with_transport(Service::Llm, Arc::new(MockLlm));
    let mut scene = SceneProgram::empty(2);
    scene.elements.push(SceneElement::new(
        "title",
        ElementKind::Text,
        "Fourier series",
        BBox::new(0.0, 3.5, 6.0, 0.8),
    ));
    scene.elements.push(SceneElement::new(
        "sum",
        ElementKind::Formula,
        r"f(x)=\sum_n c_n e^{inx}",
        BBox::new(0.0, 0.0, 6.0, 1.2),
    ));
    scene.elements.push(SceneElement::new(
        "wave",
        ElementKind::Shape,
        "sine",
        BBox::new(0.0, -2.5, 8.0, 1.5),
    ));
    scene
        .events
        .push(AnimationEvent::new("a1", Verb::Appear, &["title"], 0.5));
    scene
        .events
        .push(AnimationEvent::new("a2", Verb::Appear, &["sum"], 1.0));
    scene
        .events
        .push(AnimationEvent::new("a3", Verb::Appear, &["wave"], 1.0));
    dialect::refresh_source(&mut scene, "manim-ce").unwrap();

    for failures in [0, 2, 6] {
        let renderer = ScriptedRenderer::failing(failures);
        let (out, trace) = debugger::run_debug_loop(&gw, &scene, &renderer, 3, "manim-ce").unwrap();
        println!(
            "{failures} scripted failures: {:?} after {} checks, {} repairs, substitutions {:?}",
            trace.final_outcome,
            renderer.calls(),
            trace.repairs(),
            trace
                .fallback_substitutions
                .iter()
                .map(|s| &s.element_id)
                .collect::<Vec<_>>()
        );
        if !trace.fallback_substitutions.is_empty() {
            for e in &out.elements {
                println!("    {} {:?}", e.id, e.kind);
            }
        }
    }
}
