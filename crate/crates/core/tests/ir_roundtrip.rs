mod support;

use lectern::codegen::dialect::{self, DialectSpec};
use lectern::model::Verb;
use proptest::prelude::*;
use support::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn ir_json_parse_inverts_emit(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ir = DialectSpec::ir_json();
        let mut s = ir_scene(&mut r);
        s.source_text = dialect::emit(&s, &ir).unwrap();
        let back = dialect::parse_emitted(&s.source_text, &ir).unwrap();
        prop_assert_eq!(&back, &s);
        // emission is a pure function of the scene
        prop_assert_eq!(dialect::emit(&back, &ir).unwrap(), s.source_text);
    }

    #[test]
    fn manim_emission_keeps_every_anchor(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = DialectSpec::manim_ce();
        let s = manim_scene(&mut r);
        let src = dialect::emit(&s, &spec).unwrap();
        let marked = dialect::extract_markers(&src).unwrap();
        prop_assert_eq!(
            multiset(marked.iter().map(|m| m.event.anchor_id.clone())),
            multiset(s.events.iter().map(|e| e.anchor_id.clone()))
        );
        let parsed = dialect::parse_emitted(&src, &spec).unwrap();
        for (p, e) in parsed.events.iter().zip(&s.events) {
            prop_assert_eq!(&p.anchor_id, &e.anchor_id);
            prop_assert_eq!(p.verb, e.verb);
            prop_assert_eq!(&p.target_ids, &e.target_ids);
            prop_assert_eq!(p.start_s, e.start_s);
            prop_assert_eq!(p.duration_s, e.duration_s);
        }
        let waits = dialect::extract_waits(&src).unwrap();
        prop_assert_eq!(waits.len(), s.events.iter().filter(|e| e.verb == Verb::Wait).count());
    }
}

#[test]
fn ir_json_is_canonical_text() {
    let mut r = rng(1);
    let s = ir_scene(&mut r);
    let src = dialect::emit(&s, &DialectSpec::ir_json()).unwrap();
    assert!(src.ends_with('\n'));
    let v: serde_json::Value = serde_json::from_str(&src).unwrap();
    assert_eq!(v["dialect"], "ir-json");
}

#[test]
fn markers_point_at_their_lines() {
    let mut r = rng(2);
    let s = manim_scene(&mut r);
    let src = dialect::emit(&s, &DialectSpec::manim_ce()).unwrap();
    let lines: Vec<&str> = src.lines().collect();
    for m in dialect::extract_markers(&src).unwrap() {
        assert!(lines[m.line - 1].contains(&m.event.anchor_id));
    }
}
