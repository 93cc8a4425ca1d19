//! Detect overlaps and frame overflows, then move offenders to the first
//! free grid cell in scan order.

use lectern::layout::{self, LayoutParams};
use lectern::model::{
    AnimationEvent, BBox, ElementKind, FrameSpec, SceneElement, SceneProgram, Verb,
};

fn main() {
    let mut scene = SceneProgram::empty(1);
    let els = [
        ("title", BBox::new(0.0, 3.8, 10.0, 0.9)),
        ("a", BBox::new(-2.0, 0.0, 4.0, 2.0)),
        ("b", BBox::new(-1.0, 0.5, 4.0, 2.0)),
        ("c", BBox::new(7.5, -3.0, 3.0, 1.0)),
    ];
    for (id, b) in els {
        scene
            .elements
            .push(SceneElement::new(id, ElementKind::Text, id, b));
        scene.events.push(AnimationEvent::new(
            format!("show_{id}"),
            Verb::Appear,
            &[id],
            0.5,
        ));
    }
    let params = LayoutParams {
        frame: FrameSpec::default(),
        margin_u: 0.1,
        cell_u: 0.25,
    };
    let (fixed, report, plan) = layout::layout_pass(&scene, &params, "ir-json").unwrap();
    for o in &report.overlaps {
        println!("overlap {} / {}: {:.3} u^2", o.a, o.b, o.overlap_area_u2);
    }
    for o in &report.overflows {
        println!(
            "overflow {} {:?} by {:.3} u",
            o.element_id, o.violated_edges, o.excess_u
        );
    }
    for m in &plan.moves {
        println!(
            "move {} -> ({:.2}, {:.2})",
            m.element_id, m.new_bbox.cx, m.new_bbox.cy
        );
    }
    println!("unresolved: {:?}", plan.unresolved);
    let after = layout::detect_conflicts(&fixed, &params.frame, params.margin_u);
    println!(
        "conflicts after: {}",
        after.overlaps.len() + after.overflows.len()
    );
}
