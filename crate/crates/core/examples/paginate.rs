//! Manuscript to page blueprints: word-budget segmentation, one page call
//! per segment, then global renumbering.

use std::sync::Arc;

use lectern::composer;
use lectern::gateway::{FixtureStore, Gateway, Service};
use lectern::mock::MockLlm;
use lectern::model::{AudienceLevel, LectureOutline};
use lectern::paginator;

fn main() {
    let gw = Gateway::new(FixtureStore::passthrough(), 3)
        .with_transport(Service::Llm, Arc::new(MockLlm));
    let outline = LectureOutline {
        topic_keywords: vec![
            "gradient descent".into(),
            "learning rate".into(),
            "momentum".into(),
            "convergence".into(),
        ],
        audience_level: AudienceLevel::Advanced,
        language: "en".into(),
        free_notes: None,
    };
    let skeleton = composer::skeletonize(&gw, &outline).unwrap();
    let manuscript = composer::expand(&gw, &skeleton, "en", 2).unwrap();

    let segments = paginator::segment(&manuscript, 300).unwrap();
    let mut per_segment = Vec::new();
    for seg in &segments {
        let pages = paginator::paginate_segment(&gw, &manuscript, seg, 6).unwrap();
        println!(
            "segment {} (sections {:?}): {} pages",
            seg.index,
            seg.section_span,
            pages.len()
        );
        per_segment.push(pages);
    }
    let pages = paginator::aggregate(per_segment, manuscript.sections.len()).unwrap();
    for p in &pages {
        println!(
            "{:>2}. {} [{} bullets, density {}]",
            p.page_index,
            p.title,
            p.bullet_points.len(),
            p.est_density
        );
    }
}
