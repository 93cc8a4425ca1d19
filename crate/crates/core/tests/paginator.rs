mod support;

use lectern::model::{PageBlueprint, SectionSpan};
use lectern::paginator;
use proptest::prelude::*;
use rand::Rng;
use support::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn segments_partition_the_manuscript(seed in any::<u64>(), slack in 0usize..200) {
        let mut r = rng(seed);
        let m = manuscript(&mut r);
        let biggest = m.sections.iter().map(|s| s.word_count()).max().unwrap();
        let segs = paginator::segment(&m, biggest.max(1) + slack).unwrap();
        let joined: String = segs.iter().map(|s| s.text.as_str()).collect();
        let source = m.text();
        prop_assert_eq!(joined.as_bytes(), source.as_bytes());
        let mut next = 0;
        for (i, s) in segs.iter().enumerate() {
            prop_assert_eq!(s.index, i);
            prop_assert_eq!(s.section_span.start, next);
            prop_assert!(s.section_span.end > s.section_span.start);
            let words: usize = m.sections[s.section_span.start..s.section_span.end].iter().map(|x| x.word_count()).sum();
            prop_assert!(words <= biggest.max(1) + slack);
            next = s.section_span.end;
        }
        prop_assert_eq!(next, m.sections.len());
    }

    #[test]
    fn segments_are_greedy(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = manuscript(&mut r);
        let budget = m.sections.iter().map(|s| s.word_count()).max().unwrap().max(1) + r.random_range(0..60);
        let segs = paginator::segment(&m, budget).unwrap();
        for w in segs.windows(2) {
            let words: usize = m.sections[w[0].section_span.start..=w[0].section_span.end].iter().map(|x| x.word_count()).sum();
            prop_assert!(words > budget, "segment {} could have taken another section", w[0].index);
        }
    }

    #[test]
    fn aggregate_coverage_matches_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = manuscript(&mut r);
        let segs = paginator::segment(&m, 10_000).unwrap();
        let spans: Vec<SectionSpan> = segs.iter().map(|s| s.section_span).collect();
        let pages = per_segment_pages(&mut r, &spans);
        let flat: Vec<PageBlueprint> = pages.iter().flatten().cloned().collect();
        let want = oracle_uncovered(&flat, m.sections.len());
        prop_assert_eq!(paginator::uncovered_sections(&flat, m.sections.len()), want.clone());
        match paginator::aggregate(pages, m.sections.len()) {
            Ok(out) => {
                prop_assert!(want.is_empty());
                let idx: Vec<usize> = out.iter().map(|p| p.page_index).collect();
                prop_assert_eq!(idx, (1..=flat.len()).collect::<Vec<_>>());
            }
            Err(e) => prop_assert_eq!(e.uncovered, want),
        }
    }
}

#[test]
fn oversized_section_is_an_error() {
    let mut r = rng(3);
    let m = manuscript(&mut r);
    let biggest = m.sections.iter().map(|s| s.word_count()).max().unwrap();
    if biggest > 0 {
        let err = paginator::segment(&m, biggest - 1).unwrap_err();
        assert_eq!(err.words, biggest);
    }
}

#[test]
fn continued_title_across_segments_is_marked() {
    let page = |title: &str, s: usize| PageBlueprint {
        page_index: 9,
        title: title.into(),
        bullet_points: vec![],
        visual_intents: vec![],
        source_span: SectionSpan::new(s, s + 1),
        est_density: 1,
    };
    let out = paginator::aggregate(
        vec![
            vec![page("Entropy", 0)],
            vec![page("Entropy", 1), page("Codes", 1)],
        ],
        2,
    )
    .unwrap();
    let titles: Vec<&str> = out.iter().map(|p| p.title.as_str()).collect();
    assert_eq!(titles[0], "Entropy");
    assert!(titles[1].starts_with("Entropy") && titles[1] != "Entropy");
    assert_eq!(titles[2], "Codes");
}
