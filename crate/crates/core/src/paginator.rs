//! Chain-of-agents pagination: split the manuscript into whole-section
//! segments, let an independent agent paginate each one, then join the
//! results into one numbered page sequence.

use serde::Deserialize;
use serde_json::json;

use crate::gateway::{Gateway, GatewayError};
use crate::llm::{self, AskError, Prompt};
use crate::model::{Manuscript, PageBlueprint, SectionSpan, Segment, VisualIntent};

pub const DEFAULT_SEGMENT_WORDS: usize = 1200;
pub const CONTINUATION_SUFFIX: &str = " (cont.)";

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("section #{section_index} has {words} words, over the segment budget of {budget}")]
pub struct SegmentError {
    pub section_index: usize,
    pub words: usize,
    pub budget: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum PaginateError {
    #[error("pagination of segment #{segment_index} rejected: {reason}")]
    Schema {
        segment_index: usize,
        reason: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("pages leave manuscript sections uncovered: {uncovered:?}")]
pub struct AggregateError {
    pub uncovered: Vec<usize>,
}

/// Greedy packing of whole sections: each segment takes the longest prefix
/// of the remaining sections that fits in `max_words`.
pub fn segment(manuscript: &Manuscript, max_words: usize) -> Result<Vec<Segment>, SegmentError> {
    for (i, s) in manuscript.sections.iter().enumerate() {
        let words = s.word_count();
        if words > max_words {
            return Err(SegmentError {
                section_index: i,
                words,
                budget: max_words,
            });
        }
    }
    let mut out = Vec::new();
    let mut start = 0;
    let n = manuscript.sections.len();
    while start < n {
        let mut end = start;
        let mut used = 0;
        while end < n {
            let wc = manuscript.sections[end].word_count();
            if end > start && used + wc > max_words {
                break;
            }
            used += wc;
            end += 1;
        }
        let span = SectionSpan::new(start, end);
        out.push(Segment {
            index: out.len(),
            section_span: span,
            text: manuscript.span_text(span),
        });
        start = end;
    }
    Ok(out)
}

#[derive(Deserialize)]
struct ProposedPage {
    title: String,
    #[serde(default)]
    bullet_points: Vec<String>,
    #[serde(default)]
    visual_intents: Vec<VisualIntent>,
    source_span: SectionSpan,
    est_density: u32,
}

#[derive(Deserialize)]
struct ProposedPages {
    pages: Vec<ProposedPage>,
}

/// Checks an agent's pages against the segment they came from.
pub fn validate_pages(
    pages: &[PageBlueprint],
    seg: &Segment,
    density_max: u32,
) -> Result<(), String> {
    if pages.is_empty() {
        return Err("no pages".into());
    }
    let mut last_start = seg.section_span.start;
    for (i, p) in pages.iter().enumerate() {
        let n = i + 1;
        if p.title.trim().is_empty() {
            return Err(format!("page {n} has an empty title"));
        }
        if p.est_density > density_max {
            return Err(format!(
                "page {n} density {} exceeds {density_max}",
                p.est_density
            ));
        }
        if p.bullet_points.is_empty() && p.visual_intents.is_empty() {
            return Err(format!("page {n} has neither bullets nor visuals"));
        }
        if p.source_span.is_empty() {
            return Err(format!("page {n} has an empty source span"));
        }
        if !p.source_span.within(seg.section_span) {
            return Err(format!(
                "page {n} span {}..{} escapes segment {}..{}",
                p.source_span.start,
                p.source_span.end,
                seg.section_span.start,
                seg.section_span.end
            ));
        }
        if p.source_span.start < last_start {
            return Err(format!("page {n} span starts before the previous page"));
        }
        last_start = p.source_span.start;
    }
    Ok(())
}

/// One local agent call for one segment. Pages are numbered from 1 within
/// the segment; [`aggregate`] renumbers globally.
pub fn paginate_segment(
    gw: &Gateway,
    manuscript: &Manuscript,
    seg: &Segment,
    density_max: u32,
) -> Result<Vec<PageBlueprint>, PaginateError> {
    let span = seg.section_span;
    let mut excerpt = String::new();
    let mut sections = Vec::new();
    for i in span.start..span.end {
        let s = &manuscript.sections[i];
        excerpt.push_str(&format!("[section {i}]\n"));
        excerpt.push_str(&s.text());
        sections.push(json!({
            "body": s.body,
            "examples": s.examples,
            "formal_expressions": s.formal_expressions,
            "heading": s.heading,
            "index": i,
        }));
    }
    let prompt = Prompt::new(
        format!("paginator.segment.{}", seg.index),
        "paginator/paginate",
        &[
            ("span_start", span.start.to_string()),
            ("span_end_inclusive", span.end.saturating_sub(1).to_string()),
            ("density_max", density_max.to_string()),
            ("excerpt", excerpt),
        ],
        json!({
            "density_max": density_max,
            "sections": sections,
            "segment_index": seg.index,
        }),
    );
    llm::ask(gw, &prompt, |v| {
        let proposed: ProposedPages = llm::decode(v)?;
        let pages: Vec<PageBlueprint> = proposed
            .pages
            .into_iter()
            .enumerate()
            .map(|(i, p)| PageBlueprint {
                page_index: i + 1,
                title: p.title,
                bullet_points: p.bullet_points,
                visual_intents: p.visual_intents,
                source_span: p.source_span,
                est_density: p.est_density,
            })
            .collect();
        validate_pages(&pages, seg, density_max)?;
        Ok(pages)
    })
    .map_err(|e| match e {
        AskError::Gateway(g) => PaginateError::Gateway(g),
        AskError::Schema { reason, .. } => PaginateError::Schema {
            segment_index: seg.index,
            reason,
        },
    })
}

/// Concatenates per-segment pages in segment order, renumbers them 1..n,
/// marks a page continuing the previous segment's last title with
/// "(cont.)", and checks that every section is covered.
pub fn aggregate(
    per_segment: Vec<Vec<PageBlueprint>>,
    section_count: usize,
) -> Result<Vec<PageBlueprint>, AggregateError> {
    let mut out: Vec<PageBlueprint> = Vec::new();
    for seg_pages in per_segment {
        for (i, mut page) in seg_pages.into_iter().enumerate() {
            if i == 0 {
                if let Some(prev) = out.last() {
                    if prev.title == page.title {
                        page.title.push_str(CONTINUATION_SUFFIX);
                    }
                }
            }
            page.page_index = out.len() + 1;
            out.push(page);
        }
    }
    let uncovered = uncovered_sections(&out, section_count);
    if !uncovered.is_empty() {
        return Err(AggregateError { uncovered });
    }
    Ok(out)
}

pub fn uncovered_sections(pages: &[PageBlueprint], section_count: usize) -> Vec<usize> {
    let mut covered = vec![false; section_count];
    for p in pages {
        for i in p.source_span.start..p.source_span.end.min(section_count) {
            covered[i] = true;
        }
    }
    covered
        .iter()
        .enumerate()
        .filter(|(_, c)| !**c)
        .map(|(i, _)| i)
        .collect()
}
