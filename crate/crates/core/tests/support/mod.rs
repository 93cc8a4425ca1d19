//! Seeded generators and independent reference implementations shared by
//! the integration tests. Oracles use exact rationals or brute force and
//! share no code with the library beyond its data types.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::float::FloatCore;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lectern::model::{
    AnimationEvent, AudioAsset, BBox, ConflictReport, Edge, ElementKind, FrameSpec, Manuscript,
    Move, NarrationScript, NarrationUnit, PageBlueprint, PlacementPlan, SceneElement, SceneProgram,
    Section, SectionSpan, Stage, Verb,
};
use lectern::narrator::SynthesisResult;

pub type Q = BigRational;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Exact value of a finite `f64` as a dyadic rational.
pub fn q(x: f64) -> Q {
    assert!(x.is_finite(), "finite input");
    let (mut m, mut e, sign) = x.integer_decode();
    if m == 0 {
        return Q::zero();
    }
    if e < 0 {
        let tz = m.trailing_zeros().min((-e) as u32);
        m >>= tz;
        e += tz as i16;
    }
    let num = BigInt::from(m) * BigInt::from(sign);
    if e >= 0 {
        Q::from_integer(num << e as usize)
    } else {
        Q::new_raw(num, BigInt::from(1) << (-e) as usize)
    }
}

pub fn half() -> Q {
    Q::new(BigInt::from(1), BigInt::from(2))
}

pub const FRAME: FrameSpec = FrameSpec {
    width_u: 16.0,
    height_u: 9.0,
};

/// A multiple of `step` in `[lo, hi]`, computed in floating point.
pub fn stepped(r: &mut ChaCha8Rng, lo: f64, hi: f64, step: f64) -> f64 {
    let k = r.random_range((lo / step).round() as i64..=(hi / step).round() as i64);
    k as f64 * step
}

const KINDS: [ElementKind; 4] = [
    ElementKind::Text,
    ElementKind::Formula,
    ElementKind::Shape,
    ElementKind::ImagePlaceholder,
];

/// Random slide: `n` leaf elements on a 0.05 lattice, some exactly
/// touching or duplicating a neighbour after inflation by `margin`, some
/// poking out of the frame, a few titles, and sometimes a group.
pub fn layout_scene(r: &mut ChaCha8Rng, n: usize, margin: f64) -> SceneProgram {
    let mut s = SceneProgram::empty(1);
    for i in 0..n {
        let id = if r.random_bool(0.1) {
            format!("title_{i:02}")
        } else {
            format!("e{i:02}")
        };
        let kind = KINDS[r.random_range(0..KINDS.len())];
        let w = stepped(r, 0.25, 5.0, 0.05);
        let h = stepped(r, 0.25, 3.0, 0.05);
        let mut cx = stepped(r, -8.5, 8.5, 0.05);
        let mut cy = stepped(r, -5.0, 5.0, 0.05);
        if let Some(prev) = s.elements.last().map(|e| e.bbox) {
            match r.random_range(0..10) {
                0 | 1 => {
                    // inflated boxes share an edge
                    cx = prev.cx + (prev.w + w) / 2.0 + margin;
                    cy = prev.cy;
                }
                2 => {
                    cy = prev.cy - (prev.h + h) / 2.0 - margin;
                    cx = prev.cx;
                }
                3 => {
                    cx = prev.cx;
                    cy = prev.cy;
                }
                _ => {}
            }
        }
        s.elements.push(SceneElement::new(
            id,
            kind,
            format!("item {i}"),
            BBox::new(cx, cy, w, h),
        ));
    }
    let leaves: Vec<String> = s
        .elements
        .iter()
        .filter(|e| !e.id.starts_with("title"))
        .map(|e| e.id.clone())
        .collect();
    if leaves.len() >= 2 && r.random_bool(0.3) {
        let mut g = SceneElement::new(
            "group",
            ElementKind::Group,
            "",
            BBox::new(0.0, 0.0, 1.0, 1.0),
        );
        g.children = vec![leaves[0].clone(), leaves[1].clone()];
        s.elements.push(g);
        s.recompute_groups();
    }
    let ids: Vec<String> = s.elements.iter().map(|e| e.id.clone()).collect();
    for (i, id) in ids.iter().enumerate() {
        s.events.push(AnimationEvent::new(
            format!("a{}", i + 1),
            Verb::Appear,
            &[id.as_str()],
            1.0,
        ));
    }
    s
}

/// Exact edges (l, r, b, t) of a box grown by `margin / 2` per side.
pub fn exact_rect(b: &BBox, margin: f64) -> [Q; 4] {
    let hw = (q(b.w) + q(margin)) * half();
    let hh = (q(b.h) + q(margin)) * half();
    [q(b.cx) - &hw, q(b.cx) + &hw, q(b.cy) - &hh, q(b.cy) + &hh]
}

fn min_q(a: &Q, b: &Q) -> Q {
    if a < b {
        a.clone()
    } else {
        b.clone()
    }
}

fn max_q(a: &Q, b: &Q) -> Q {
    if a > b {
        a.clone()
    } else {
        b.clone()
    }
}

/// Positive-area overlap of two exact rectangles.
pub fn exact_overlap(a: &[Q; 4], b: &[Q; 4]) -> Option<Q> {
    let ox = min_q(&a[1], &b[1]) - max_q(&a[0], &b[0]);
    let oy = min_q(&a[3], &b[3]) - max_q(&a[2], &b[2]);
    (ox.is_positive() && oy.is_positive()).then(|| ox * oy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactReport {
    pub overlaps: Vec<(String, String, Q)>,
    pub overflows: Vec<(String, Vec<Edge>, Q)>,
}

/// O(n²) conflict detection in exact rational arithmetic.
pub fn oracle_conflicts(scene: &SceneProgram, frame: &FrameSpec, margin: f64) -> ExactReport {
    let mut leaves: Vec<&SceneElement> = scene
        .elements
        .iter()
        .filter(|e| e.kind != ElementKind::Group)
        .collect();
    leaves.sort_by(|a, b| a.id.cmp(&b.id));
    let mut overlaps = Vec::new();
    for i in 0..leaves.len() {
        for j in i + 1..leaves.len() {
            let a = exact_rect(&leaves[i].bbox, margin);
            let b = exact_rect(&leaves[j].bbox, margin);
            if let Some(area) = exact_overlap(&a, &b) {
                overlaps.push((leaves[i].id.clone(), leaves[j].id.clone(), area));
            }
        }
    }
    let fw = q(frame.width_u) * half();
    let fh = q(frame.height_u) * half();
    let mut overflows = Vec::new();
    for e in &leaves {
        let [l, r, b, t] = exact_rect(&e.bbox, 0.0);
        let checks = [
            (Edge::Left, -fw.clone() - l),
            (Edge::Right, r - fw.clone()),
            (Edge::Top, t - fh.clone()),
            (Edge::Bottom, -fh.clone() - b),
        ];
        let hit: Vec<(Edge, Q)> = checks
            .into_iter()
            .filter(|(_, x)| x.is_positive())
            .collect();
        if !hit.is_empty() {
            let excess = hit.iter().map(|(_, x)| x.clone()).max().expect("non-empty");
            overflows.push((
                e.id.clone(),
                hit.into_iter().map(|(e, _)| e).collect(),
                excess,
            ));
        }
    }
    ExactReport {
        overlaps,
        overflows,
    }
}

/// Absolute tolerance on reported areas and excesses.
pub const AREA_TOL: f64 = 1e-9;

fn close(x: f64, exact: &Q) -> bool {
    (x - exact.to_f64().expect("finite")).abs() <= AREA_TOL
}

/// Pairs, edges and order must match exactly; magnitudes within [`AREA_TOL`].
pub fn compare_conflicts(got: &ConflictReport, want: &ExactReport) -> Result<(), String> {
    let gp: Vec<(&str, &str)> = got
        .overlaps
        .iter()
        .map(|o| (o.a.as_str(), o.b.as_str()))
        .collect();
    let wp: Vec<(&str, &str)> = want
        .overlaps
        .iter()
        .map(|o| (o.0.as_str(), o.1.as_str()))
        .collect();
    if gp != wp {
        return Err(format!("overlap pairs differ: got {gp:?}, want {wp:?}"));
    }
    for (g, w) in got.overlaps.iter().zip(&want.overlaps) {
        if !close(g.overlap_area_u2, &w.2) {
            return Err(format!(
                "area of ({}, {}): got {}, want {}",
                g.a, g.b, g.overlap_area_u2, w.2
            ));
        }
    }
    let go: Vec<(&str, &[Edge])> = got
        .overflows
        .iter()
        .map(|o| (o.element_id.as_str(), o.violated_edges.as_slice()))
        .collect();
    let wo: Vec<(&str, &[Edge])> = want
        .overflows
        .iter()
        .map(|o| (o.0.as_str(), o.1.as_slice()))
        .collect();
    if go != wo {
        return Err(format!("overflows differ: got {go:?}, want {wo:?}"));
    }
    for (g, w) in got.overflows.iter().zip(&want.overflows) {
        if !close(g.excess_u, &w.2) {
            return Err(format!(
                "excess of {}: got {}, want {}",
                g.element_id, g.excess_u, w.2
            ));
        }
    }
    Ok(())
}

/// Exact cell lattice over the frame; cell (0, 0) is top-left.
pub struct ExactGrid {
    left: Q,
    top: Q,
    frame: [Q; 4],
    cell: Q,
    pub cols: usize,
    pub rows: usize,
}

impl ExactGrid {
    pub fn new(frame: &FrameSpec, cell: f64) -> Self {
        let hw = q(frame.width_u) * half();
        let hh = q(frame.height_u) * half();
        let cols = (q(frame.width_u) / q(cell))
            .ceil()
            .to_integer()
            .to_usize()
            .expect("size");
        let rows = (q(frame.height_u) / q(cell))
            .ceil()
            .to_integer()
            .to_usize()
            .expect("size");
        ExactGrid {
            left: -hw.clone(),
            top: hh.clone(),
            frame: [-hw.clone(), hw, -hh.clone(), hh],
            cell: q(cell),
            cols,
            rows,
        }
    }

    pub fn x(&self, col: usize) -> Q {
        &self.left + &self.cell * Q::from_integer(BigInt::from(col))
    }

    pub fn y(&self, row: usize) -> Q {
        &self.top - &self.cell * Q::from_integer(BigInt::from(row))
    }

    /// Cells sharing positive area with `r`: column `c` qualifies when
    /// `x(c) < r.right` and `x(c + 1) > r.left`, so the range is
    /// `floor((l - left) / cell) ..= ceil((r - left) / cell) - 1`.
    pub fn cells_under(&self, r: &[Q; 4]) -> Vec<(usize, usize)> {
        let span = |lo: Q, hi: Q, n: usize| -> (usize, usize) {
            let a = (lo / &self.cell)
                .floor()
                .to_integer()
                .to_i64()
                .expect("small");
            let b = (hi / &self.cell)
                .ceil()
                .to_integer()
                .to_i64()
                .expect("small");
            (a.clamp(0, n as i64) as usize, b.clamp(0, n as i64) as usize)
        };
        let (c0, c1) = span(&r[0] - &self.left, &r[1] - &self.left, self.cols);
        let (r0, r1) = span(&self.top - &r[3], &self.top - &r[2], self.rows);
        let mut out = Vec::new();
        for row in r0..r1 {
            for col in c0..c1 {
                out.push((col, row));
            }
        }
        out
    }

    pub fn in_frame(&self, r: &[Q; 4]) -> bool {
        r[0] >= self.frame[0]
            && r[1] <= self.frame[1]
            && r[2] >= self.frame[2]
            && r[3] <= self.frame[3]
    }

    /// Cell containing the top-left corner of `r`, clamped into the grid.
    pub fn start_cell(&self, r: &[Q; 4]) -> (usize, usize) {
        let col = (0..self.cols)
            .rev()
            .find(|&c| self.x(c) <= r[0])
            .unwrap_or(0);
        let row = (0..self.rows)
            .rev()
            .find(|&k| self.y(k) >= r[3])
            .unwrap_or(0);
        (col, row)
    }
}

/// Smallest f64 not below `x`.
pub fn ceil_f64(x: &Q) -> f64 {
    let mut f = x.to_f64().expect("finite");
    while q(f) < *x {
        f = f.next_up();
    }
    while q(f.next_down()) >= *x {
        f = f.next_down();
    }
    f
}

/// Largest f64 not above `x`.
pub fn floor_f64(x: &Q) -> f64 {
    let mut f = x.to_f64().expect("finite");
    while q(f) > *x {
        f = f.next_down();
    }
    while q(f.next_up()) <= *x {
        f = f.next_up();
    }
    f
}

/// Box of size `w × h` whose inflated top-left corner is the representable
/// point nearest the cell corner without leaving the cell.
pub fn oracle_candidate(
    g: &ExactGrid,
    col: usize,
    row: usize,
    w: f64,
    h: f64,
    margin: f64,
) -> BBox {
    let cx = ceil_f64(&(g.x(col) + (q(w) + q(margin)) * half()));
    let cy = floor_f64(&(g.y(row) - (q(h) + q(margin)) * half()));
    BBox::new(cx, cy, w, h)
}

/// Exhaustive scan: elements in `order` each take the first cell of the
/// right-then-down sequence (from their own cell, wrapping) where the
/// inflated box is in frame and touches no occupied cell. An element with
/// no such cell stays put, counts as an obstacle, and the scan restarts.
pub fn oracle_plan(
    scene: &SceneProgram,
    order: &[String],
    frame: &FrameSpec,
    margin: f64,
    cell: f64,
) -> PlacementPlan {
    let g = ExactGrid::new(frame, cell);
    let n = g.cols * g.rows;
    let mut stuck: BTreeSet<String> = BTreeSet::new();
    'pass: loop {
        let movable: Vec<&String> = order.iter().filter(|id| !stuck.contains(*id)).collect();
        let mut occupied: HashSet<(usize, usize)> = HashSet::new();
        for e in &scene.elements {
            if e.kind != ElementKind::Group && !movable.contains(&&e.id) {
                occupied.extend(g.cells_under(&exact_rect(&e.bbox, margin)));
            }
        }
        let mut moves = Vec::new();
        for id in &movable {
            let el = scene
                .elements
                .iter()
                .find(|e| &e.id == *id)
                .expect("ordered ids exist");
            let (c0, r0) = g.start_cell(&exact_rect(&el.bbox, margin));
            let start = r0 * g.cols + c0;
            let mut placed = None;
            for k in 0..n {
                let i = (start + k) % n;
                let cand =
                    oracle_candidate(&g, i % g.cols, i / g.cols, el.bbox.w, el.bbox.h, margin);
                let rect = exact_rect(&cand, margin);
                if !g.in_frame(&rect) {
                    continue;
                }
                let cells = g.cells_under(&rect);
                if cells.iter().all(|c| !occupied.contains(c)) {
                    occupied.extend(cells);
                    placed = Some(cand);
                    break;
                }
            }
            match placed {
                Some(b) => moves.push(Move {
                    element_id: (*id).clone(),
                    new_bbox: b,
                }),
                None => {
                    stuck.insert((*id).clone());
                    continue 'pass;
                }
            }
        }
        let unresolved = order
            .iter()
            .filter(|id| stuck.contains(*id))
            .cloned()
            .collect();
        return PlacementPlan { moves, unresolved };
    }
}

// ---------------------------------------------------------------- sync

/// Random scene/script/timing triple. Anchors referenced by units always
/// exist; unit durations are multiples of 0.01 s, some zero.
pub fn sync_case(r: &mut ChaCha8Rng) -> (SceneProgram, NarrationScript, SynthesisResult) {
    let n_events = r.random_range(0..9);
    let mut scene = SceneProgram::empty(1);
    for i in 0..n_events.max(1) {
        scene.elements.push(SceneElement::new(
            format!("e{i}"),
            ElementKind::Text,
            "x",
            BBox::new(0.0, 4.0 - i as f64, 1.0, 0.5),
        ));
    }
    for i in 0..n_events {
        let verb = [Verb::Appear, Verb::Highlight, Verb::Disappear][r.random_range(0..3)];
        let d = stepped(r, 0.1, 3.0, 0.1);
        scene.events.push(AnimationEvent::new(
            format!("a{}", i + 1),
            verb,
            &[format!("e{i}").as_str()],
            d,
        ));
    }
    let n_units = r.random_range(0..9);
    let mut units = Vec::new();
    let mut durations = Vec::new();
    for u in 0..n_units {
        let anchor_ref = if n_events > 0 && r.random_bool(0.6) {
            Some(format!("a{}", r.random_range(1..=n_events)))
        } else {
            None
        };
        let words = r.random_range(0..20);
        units.push(NarrationUnit {
            unit_id: format!("u{}", u + 1),
            text: vec!["word"; words].join(" "),
            anchor_ref,
        });
        durations.push(if r.random_bool(0.1) {
            0.0
        } else {
            stepped(r, 0.01, 8.0, 0.01)
        });
    }
    let script = NarrationScript::new(1, units);
    let total: f64 = durations.iter().sum();
    let synth = SynthesisResult {
        audio: AudioAsset {
            page_index: 1,
            media_ref: None,
            duration_s: total,
            speaking_rate: 2.0,
        },
        per_unit_durations_s: durations,
    };
    (scene, script, synth)
}

/// Reference scheduler. Unit boundaries are enumerated by summing the
/// durations before each unit; a referenced event starts at the first
/// boundary whose unit names it. Events are reordered by the time of the
/// nearest referenced event at or before them (stable), then unreferenced
/// ones are placed on the straight line between the referenced events (or
/// 0 s at the front and the audio end at the back) around them.
pub fn oracle_schedule(
    scene: &SceneProgram,
    script: &NarrationScript,
    synth: &SynthesisResult,
) -> Vec<(String, f64)> {
    let d = &synth.per_unit_durations_s;
    let boundary = |u: usize| -> f64 { d[..u].iter().fold(0.0, |acc, x| acc + x) };
    let total = boundary(d.len());
    let events: Vec<&AnimationEvent> = scene
        .events
        .iter()
        .filter(|e| !(e.verb == Verb::Wait && e.anchor_id.starts_with("sync-wait-")))
        .collect();
    let ref_time = |anchor: &str| -> Option<f64> {
        script
            .units
            .iter()
            .position(|u| u.anchor_ref.as_deref() == Some(anchor))
            .map(boundary)
    };
    let mut keyed: Vec<(f64, usize, &AnimationEvent, Option<f64>)> = Vec::new();
    let mut key = f64::NEG_INFINITY;
    for (i, e) in events.iter().enumerate() {
        let t = ref_time(&e.anchor_id);
        if let Some(t) = t {
            key = t;
        }
        keyed.push((key, i, e, t));
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = keyed.len();
    let mut out = Vec::new();
    for k in 0..n {
        let t = match keyed[k].3 {
            Some(t) => t,
            None if k == 0 => 0.0,
            None => {
                let (il, tl) = (0..k)
                    .rev()
                    .find_map(|p| keyed[p].3.map(|t| (p, t)))
                    .unwrap_or((0, 0.0));
                let (ir, tr) = (k + 1..n)
                    .find_map(|p| keyed[p].3.map(|t| (p, t)))
                    .unwrap_or((n, total));
                tl + (tr - tl) * ((k - il) as f64 / (ir - il) as f64)
            }
        };
        out.push((keyed[k].2.anchor_id.clone(), t));
    }
    out
}

// ----------------------------------------------------------- paginator

const WORDS: &[&str] = &[
    "alpha", "beta", "gamma", "delta", "x²", "naïve", "über", "数据", "压缩", "e=mc^2", "(note)",
    "…", "tab\tsep",
];

/// Random manuscript with awkward text: unicode, tabs, Han characters,
/// trailing spaces and empty optional fields.
pub fn manuscript(r: &mut ChaCha8Rng) -> Manuscript {
    let n = r.random_range(1..12);
    let sections = (0..n)
        .map(|i| {
            let words = r.random_range(0..80);
            let mut body = String::new();
            for w in 0..words {
                body.push_str(WORDS[r.random_range(0..WORDS.len())]);
                body.push_str(match r.random_range(0..8) {
                    0 => ". ",
                    1 => "\n",
                    2 => "  ",
                    _ => " ",
                });
                if w % 17 == 16 {
                    body.push_str("\n\n");
                }
            }
            Section {
                concept_id: format!("c{}", i + 1),
                heading: format!("Part {i}: {}", WORDS[r.random_range(0..WORDS.len())]),
                body,
                formal_expressions: if r.random_bool(0.3) {
                    vec!["a + b = c".into()]
                } else {
                    vec![]
                },
                examples: if r.random_bool(0.3) {
                    vec!["an example".into()]
                } else {
                    vec![]
                },
            }
        })
        .collect();
    Manuscript::new(sections)
}

/// Random per-segment page lists whose spans stay inside `segments`;
/// sometimes a section is skipped so coverage can fail.
pub fn per_segment_pages(r: &mut ChaCha8Rng, segments: &[SectionSpan]) -> Vec<Vec<PageBlueprint>> {
    let mut out = Vec::new();
    for seg in segments {
        let mut pages = Vec::new();
        let mut s = seg.start;
        while s < seg.end {
            let e = r.random_range(s + 1..=seg.end);
            if !r.random_bool(0.05) {
                let k = r.random_range(1..3);
                for _ in 0..k {
                    pages.push(PageBlueprint {
                        page_index: r.random_range(0..100),
                        title: format!("T{}", r.random_range(0..3)),
                        bullet_points: vec!["b".into()],
                        visual_intents: vec![],
                        source_span: SectionSpan::new(s, e),
                        est_density: 1,
                    });
                }
            }
            s = e;
        }
        out.push(pages);
    }
    out
}

/// Sections no page span touches, by brute force.
pub fn oracle_uncovered(pages: &[PageBlueprint], section_count: usize) -> Vec<usize> {
    (0..section_count)
        .filter(|&i| {
            !pages
                .iter()
                .any(|p| p.source_span.start <= i && i < p.source_span.end)
        })
        .collect()
}

// ------------------------------------------------------------------ IR

fn any_f64(r: &mut ChaCha8Rng) -> f64 {
    match r.random_range(0..4) {
        0 => {
            let mut v = f64::from_bits(r.random());
            while !v.is_finite() {
                v = f64::from_bits(r.random());
            }
            v
        }
        1 => r.random_range(-10.0..10.0),
        2 => stepped(r, -8.0, 8.0, 0.1),
        _ => r.random_range(-1e-300..1e-300),
    }
}

fn any_text(r: &mut ChaCha8Rng) -> String {
    let pool = [
        "",
        "plain",
        "quote \" and \\ back",
        "line\nbreak",
        "tab\t",
        "ünï©ødé",
        "数学",
        "\u{1F600}",
        "@@element:x@@",
        "}{][",
    ];
    (0..r.random_range(0..3))
        .map(|_| pool[r.random_range(0..pool.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Arbitrary scene for the ir-json round trip: any finite floats, odd
/// strings, styles, groups and partially scheduled events.
pub fn ir_scene(r: &mut ChaCha8Rng) -> SceneProgram {
    let mut s = SceneProgram::empty(r.random_range(1..50));
    s.stage = [
        Stage::Generated,
        Stage::Synced,
        Stage::Debugged,
        Stage::LaidOut,
        Stage::Final,
    ][r.random_range(0..5)];
    let n = r.random_range(0..12);
    for i in 0..n {
        let kind = [
            ElementKind::Text,
            ElementKind::Formula,
            ElementKind::Shape,
            ElementKind::ImagePlaceholder,
            ElementKind::Group,
        ][r.random_range(0..5)];
        let mut e = SceneElement::new(
            format!("el_{i}"),
            kind,
            any_text(r),
            BBox::new(any_f64(r), any_f64(r), any_f64(r), any_f64(r)),
        );
        for _ in 0..r.random_range(0..3) {
            e.style
                .insert(format!("k{}", r.random_range(0..5)), any_text(r));
        }
        if kind == ElementKind::Group && i > 0 {
            e.children = (0..i)
                .filter(|_| r.random_bool(0.3))
                .map(|c| format!("el_{c}"))
                .collect();
        }
        s.elements.push(e);
    }
    for i in 0..r.random_range(0..10) {
        let verb = [
            Verb::Appear,
            Verb::Disappear,
            Verb::Highlight,
            Verb::Transform,
            Verb::Wait,
        ][r.random_range(0..5)];
        let targets: Vec<String> = (0..r.random_range(0..3))
            .map(|_| format!("el_{}", r.random_range(0..n.max(1))))
            .collect();
        let refs: Vec<&str> = targets.iter().map(String::as_str).collect();
        let mut ev = AnimationEvent::new(format!("a{i}"), verb, &refs, any_f64(r).abs());
        if r.random_bool(0.5) {
            ev.start_s = Some(any_f64(r));
        }
        s.events.push(ev);
    }
    s
}

/// Valid scene for manim-ce emission: unique ids, sane boxes, events with
/// unique anchors targeting existing elements, some of them waits.
pub fn manim_scene(r: &mut ChaCha8Rng) -> SceneProgram {
    let n = r.random_range(1..10);
    let mut s = layout_scene(r, n, 0.1);
    s.events.retain(|_| r.random_bool(0.8));
    let n = s.events.len();
    for i in 0..r.random_range(0..3) {
        let at = r.random_range(0..=n);
        let mut w = AnimationEvent::new(format!("w{i}"), Verb::Wait, &[], 0.5);
        w.start_s = None;
        s.events.insert(at.min(s.events.len()), w);
    }
    let mut t = 0.0;
    for ev in &mut s.events {
        ev.start_s = Some(t);
        t += ev.duration_s;
    }
    s
}

// ----------------------------------------------------------- file trees

/// Every regular file under `root` with its bytes, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .expect("readable dir")
            .flatten()
            .collect();
        entries.sort_by_key(|e| e.path());
        for e in entries {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(
                    p.strip_prefix(root).expect("under root").to_path_buf(),
                    std::fs::read(&p).expect("readable"),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn sample_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample")
}

pub fn multiset<I: IntoIterator<Item = String>>(items: I) -> HashMap<String, usize> {
    let mut m = HashMap::new();
    for i in items {
        *m.entry(i).or_insert(0) += 1;
    }
    m
}

pub fn zero() -> Q {
    Q::zero()
}
