//! Align animation events to narration: each anchored event starts with
//! the unit that references it, and waits fill the gaps.

use lectern::model::{
    AnimationEvent, BBox, ElementKind, NarrationScript, NarrationUnit, SceneElement, SceneProgram,
    Verb,
};
use lectern::narrator::{self, MockTts};
use lectern::synchronizer;

fn unit(id: &str, text: &str, anchor: &str) -> NarrationUnit {
    NarrationUnit {
        unit_id: id.into(),
        text: text.into(),
        anchor_ref: Some(anchor.into()),
    }
}

fn main() {
    let mut scene = SceneProgram::empty(1);
    scene.elements.push(SceneElement::new(
        "eq",
        ElementKind::Formula,
        "E = mc^2",
        BBox::new(0.0, 1.0, 4.0, 1.0),
    ));
    scene.elements.push(SceneElement::new(
        "note",
        ElementKind::Text,
        "mass-energy",
        BBox::new(0.0, -1.0, 4.0, 0.8),
    ));
    scene
        .events
        .push(AnimationEvent::new("show_eq", Verb::Appear, &["eq"], 1.5));
    scene.events.push(AnimationEvent::new(
        "show_note",
        Verb::Appear,
        &["note"],
        0.5,
    ));

    let script = NarrationScript::new(
        1,
        vec![
            unit(
                "u1",
                "Here is the most famous equation in physics.",
                "show_eq",
            ),
            unit(
                "u2",
                "It says mass and energy are interchangeable.",
                "show_note",
            ),
        ],
    );
    let synth = narrator::synthesize(&script, "v", &MockTts { wpm: 120.0 }).unwrap();
    let aligned = synchronizer::align(&scene, &script, &synth, "manim-ce").unwrap();
    for e in &aligned.scene.events {
        println!(
            "{:>6.2} +{:<5.2} {:?} {}",
            e.start_s.unwrap(),
            e.duration_s,
            e.verb,
            e.anchor_id
        );
    }
    println!(
        "timeline {:.2} s, audio {:.2} s",
        aligned.total_s, synth.audio.duration_s
    );
    println!(
        "drift: {:?}",
        synchronizer::check_sync(&aligned.scene, &synth)
    );
}
