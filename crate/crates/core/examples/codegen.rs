//! Page blueprint to scene program, emitted in both dialects; the
//! emitted Manim text parses back to the same scene.

use std::sync::Arc;

use lectern::codegen::{
    self,
    dialect::{self, DialectSpec},
};
use lectern::gateway::{FixtureStore, Gateway, Service};
use lectern::mock::MockLlm;
use lectern::model::{FrameSpec, IntentKind, PageBlueprint, SectionSpan, VisualIntent};

fn main() {
    let gw = Gateway::new(FixtureStore::passthrough(), 0)
        .with_transport(Service::Llm, Arc::new(MockLlm));
    let page = PageBlueprint {
        page_index: 1,
        title: "Binary search".into(),
        bullet_points: vec![
            "Sorted input".into(),
            "Halve the interval".into(),
            "O(log n) comparisons".into(),
        ],
        visual_intents: vec![VisualIntent {
            kind: IntentKind::Diagram,
            payload: "array with a shrinking window".into(),
        }],
        source_span: SectionSpan { start: 0, end: 1 },
        est_density: 4,
    };
    let spec = DialectSpec::manim_ce();
    let scene = codegen::generate_scene(&gw, &page, &FrameSpec::default(), &spec).unwrap();
    println!(
        "{} elements, {} events",
        scene.elements.len(),
        scene.events.len()
    );
    println!("--- manim-ce ---\n{}", scene.source_text);
    println!(
        "--- ir-json ---\n{}",
        dialect::emit_named(&scene, "ir-json").unwrap()
    );

    let back = dialect::parse_emitted(&scene.source_text, &spec).unwrap();
    println!(
        "round trip equal: {}",
        back.elements == scene.elements && back.events == scene.events
    );
}
