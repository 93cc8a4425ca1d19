//! Record every service answer once, then replay the same calls with no
//! transport attached.

use std::sync::Arc;

use lectern::composer;
use lectern::gateway::{FixtureStore, Gateway, Service};
use lectern::mock::MockLlm;
use lectern::model::{AudienceLevel, LectureOutline};

fn main() {
    let dir = std::env::temp_dir().join(format!("lectern-fixtures-{}", std::process::id()));
    let outline = LectureOutline {
        topic_keywords: vec!["recursion".into(), "base case".into()],
        audience_level: AudienceLevel::Intro,
        language: "en".into(),
        free_notes: None,
    };

    let recording =
        Gateway::new(FixtureStore::record(&dir), 0).with_transport(Service::Llm, Arc::new(MockLlm));
    let a = composer::skeletonize(&recording, &outline).unwrap();
    println!(
        "recorded with {} network calls into {}",
        recording.transport_calls(),
        dir.display()
    );

    let replaying = Gateway::new(FixtureStore::replay(&dir), 0);
    let b = composer::skeletonize(&replaying, &outline).unwrap();
    println!(
        "replayed with {} network calls; same answer: {}",
        replaying.transport_calls(),
        a == b
    );

    let other = LectureOutline {
        topic_keywords: vec!["graphs".into()],
        ..outline
    };
    match composer::skeletonize(&replaying, &other) {
        Err(e) => println!("unrecorded call: {e}"),
        Ok(_) => println!("unexpected hit"),
    }
    let _ = std::fs::remove_dir_all(&dir);
}
