//! Outline to skeleton to manuscript, then length refinement toward a
//! target duration. LLM calls go to the built-in mock.

use std::sync::Arc;

use lectern::composer;
use lectern::gateway::{FixtureStore, Gateway, Service};
use lectern::mock::MockLlm;
use lectern::model::{AudienceLevel, LectureOutline};

fn main() {
    let gw = Gateway::new(FixtureStore::passthrough(), 7)
        .with_transport(Service::Llm, Arc::new(MockLlm));
    let outline = LectureOutline {
        topic_keywords: vec![
            "hash tables".into(),
            "open addressing".into(),
            "load factor".into(),
        ],
        audience_level: AudienceLevel::Intermediate,
        language: "en".into(),
        free_notes: None,
    };
    let skeleton = composer::skeletonize(&gw, &outline).unwrap();
    for c in &skeleton.concepts {
        println!("{}: {} ({})", c.id, c.title, c.one_line_gist);
    }
    let manuscript = composer::expand(&gw, &skeleton, &outline.language, 4).unwrap();
    println!(
        "{} sections, {} words, ~{:.0} s",
        manuscript.sections.len(),
        manuscript.word_count,
        composer::estimate_duration(&manuscript, 160.0)
    );

    let refined = composer::refine(&gw, &manuscript, 120.0, 160.0).unwrap();
    for a in &refined.actions {
        println!("refine: {a:?}");
    }
    println!(
        "converged={} estimate={:.1} s",
        refined.converged, refined.final_estimate_s
    );
}
