//! Narration for a generated scene, then synthesis with the timing-only
//! voice to get per-unit durations.

use std::sync::Arc;

use lectern::codegen::{self, dialect::DialectSpec};
use lectern::gateway::{FixtureStore, Gateway, Service};
use lectern::mock::MockLlm;
use lectern::model::{FrameSpec, PageBlueprint, SectionSpan};
use lectern::narrator::{self, MockTts};

fn main() {
    let gw = Gateway::new(FixtureStore::passthrough(), 1)
        .with_transport(Service::Llm, Arc::new(MockLlm));
    let page = PageBlueprint {
        page_index: 1,
        title: "Stacks".into(),
        bullet_points: vec!["Last in, first out".into(), "push and pop in O(1)".into()],
        visual_intents: vec![],
        source_span: SectionSpan { start: 0, end: 1 },
        est_density: 2,
    };
    let scene =
        codegen::generate_scene(&gw, &page, &FrameSpec::default(), &DialectSpec::manim_ce())
            .unwrap();
    let script = narrator::compose_narration(&gw, &page, None, &scene, "en").unwrap();
    let synth = narrator::synthesize(&script, "narrator-1", &MockTts { wpm: 150.0 }).unwrap();
    for (u, d) in script.units.iter().zip(&synth.per_unit_durations_s) {
        println!(
            "{:>6.2} s  [{}] {}",
            d,
            u.anchor_ref.as_deref().unwrap_or("-"),
            u.text
        );
    }
    println!("total {:.2} s", synth.audio.duration_s);
}
