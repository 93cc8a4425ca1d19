//! Layout inspection: find overlaps and frame overflows, relocate the
//! offending elements by scanning a cell grid right-then-down, and apply
//! educator edits on top.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::codegen::dialect::{self, DialectError};
use crate::exact::{self, Rect};
use crate::model::{
    BBox, ConflictReport, Edge, EditSet, ElementKind, FrameSpec, Move, Overflow, Overlap,
    PlacementPlan, ScanOrder, SceneProgram, Stage,
};

/// Elements with this id prefix never move and always count as occupied.
pub const TITLE_PREFIX: &str = "title";

pub fn is_title(id: &str) -> bool {
    id.starts_with(TITLE_PREFIX)
}

/// Box grown by `margin / 2` on every side, so two inflated boxes are
/// disjoint exactly when the raw boxes are at least `margin` apart.
pub fn inflate(b: &BBox, margin: f64) -> BBox {
    BBox::new(b.cx, b.cy, b.w + margin, b.h + margin)
}

/// The inflated box with exact edges.
pub fn inflated_rect(b: &BBox, margin: f64) -> Rect {
    Rect::centered(b.cx, b.cy, b.w, b.h, margin)
}

fn frame_rect(frame: &FrameSpec) -> Rect {
    Rect::from_edges(frame.left(), frame.bottom(), frame.right(), frame.top())
}

/// Violated frame edges and the largest excess past any of them.
pub fn overflow_of(b: &BBox, frame: &FrameSpec) -> Option<(Vec<Edge>, f64)> {
    let r = inflated_rect(b, 0.0);
    let f = frame_rect(frame);
    let checks = [
        (Edge::Left, &f.l, &r.l),
        (Edge::Right, &r.r, &f.r),
        (Edge::Top, &r.t, &f.t),
        (Edge::Bottom, &f.b, &r.b),
    ];
    let violated: Vec<(Edge, f64)> = checks
        .into_iter()
        .filter(|(_, hi, lo)| exact::cmp(&hi[..], &lo[..]) == Ordering::Greater)
        .map(|(e, hi, lo)| (e, exact::diff(&hi[..], &lo[..])))
        .collect();
    if violated.is_empty() {
        return None;
    }
    let excess = violated.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Some((violated.into_iter().map(|(e, _)| e).collect(), excess))
}

/// Overlaps between non-group elements after inflation, and overflows of
/// non-group elements' raw boxes. Groups are containers whose geometry
/// follows their children, so they are not checked themselves.
pub fn detect_conflicts(scene: &SceneProgram, frame: &FrameSpec, margin_u: f64) -> ConflictReport {
    let mut items: Vec<(&str, BBox, Rect)> = scene
        .elements
        .iter()
        .filter(|e| e.kind != ElementKind::Group)
        .map(|e| (e.id.as_str(), e.bbox, inflated_rect(&e.bbox, margin_u)))
        .collect();
    items.sort_by(|a, b| a.0.cmp(b.0));
    let mut overlaps = Vec::new();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            if let Some(area) = items[i].2.overlap_area(&items[j].2) {
                overlaps.push(Overlap {
                    a: items[i].0.to_string(),
                    b: items[j].0.to_string(),
                    overlap_area_u2: area,
                });
            }
        }
    }
    let overflows = items
        .iter()
        .filter_map(|(id, raw, _)| {
            overflow_of(raw, frame).map(|(violated_edges, excess_u)| Overflow {
                element_id: id.to_string(),
                violated_edges,
                excess_u,
            })
        })
        .collect();
    ConflictReport {
        page_index: scene.page_index,
        overlaps,
        overflows,
    }
}

/// Same as [`detect_conflicts`] but keeping only entries that involve one
/// of `ids`.
pub fn conflicts_involving(report: &ConflictReport, ids: &BTreeSet<&str>) -> ConflictReport {
    ConflictReport {
        page_index: report.page_index,
        overlaps: report
            .overlaps
            .iter()
            .filter(|o| ids.contains(o.a.as_str()) || ids.contains(o.b.as_str()))
            .cloned()
            .collect(),
        overflows: report
            .overflows
            .iter()
            .filter(|o| ids.contains(o.element_id.as_str()))
            .cloned()
            .collect(),
    }
}

/// Discretization of the frame. Column 0 is the left edge, row 0 the top.
/// Grid line `k` sits at exactly `left + k * cell_u` (resp. `top - k * cell_u`).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub cell_u: f64,
    pub cols: usize,
    pub rows: usize,
    pub frame: FrameSpec,
    pub occupied: HashSet<(usize, usize)>,
}

fn product(k: usize, c: f64) -> (f64, f64) {
    let p = k as f64 * c;
    (p, (k as f64).mul_add(c, -p))
}

impl OccupancyGrid {
    pub fn new(frame: &FrameSpec, cell_u: f64) -> Self {
        assert!(cell_u > 0.0, "cell size must be positive");
        OccupancyGrid {
            cell_u,
            cols: (frame.width_u / cell_u).ceil() as usize,
            rows: (frame.height_u / cell_u).ceil() as usize,
            frame: *frame,
            occupied: HashSet::new(),
        }
    }

    /// Exact x of vertical grid line `col`.
    pub fn x_line(&self, col: usize) -> [f64; 3] {
        let (p, e) = product(col, self.cell_u);
        [self.frame.left(), p, e]
    }

    /// Exact y of horizontal grid line `row`.
    pub fn y_line(&self, row: usize) -> [f64; 3] {
        let (p, e) = product(row, self.cell_u);
        [self.frame.top(), -p, -e]
    }

    pub fn cell_rect(&self, col: usize, row: usize) -> Rect {
        Rect {
            l: self.x_line(col),
            r: self.x_line(col + 1),
            b: self.y_line(row + 1),
            t: self.y_line(row),
        }
    }

    pub fn cell_box(&self, col: usize, row: usize) -> BBox {
        let left = self.frame.left() + col as f64 * self.cell_u;
        let top = self.frame.top() - row as f64 * self.cell_u;
        BBox::from_edges(left, top - self.cell_u, left + self.cell_u, top)
    }

    /// Columns whose cells share positive width with `[l, r]`: the first
    /// has its right line past `l`, the last its left line before `r`.
    fn col_range(&self, r: &Rect) -> (usize, usize) {
        let c = self.cell_u;
        let fl = self.frame.left();
        let mut lo =
            (((r.l.iter().sum::<f64>() - fl) / c).floor().max(0.0) as usize).min(self.cols);
        while lo > 0 && exact::cmp(&self.x_line(lo), &r.l) == Ordering::Greater {
            lo -= 1;
        }
        while lo < self.cols && exact::cmp(&self.x_line(lo + 1), &r.l) != Ordering::Greater {
            lo += 1;
        }
        let mut hi = (((r.r.iter().sum::<f64>() - fl) / c).ceil().max(0.0) as usize).min(self.cols);
        while hi < self.cols && exact::cmp(&self.x_line(hi), &r.r) == Ordering::Less {
            hi += 1;
        }
        while hi > 0 && exact::cmp(&self.x_line(hi - 1), &r.r) != Ordering::Less {
            hi -= 1;
        }
        (lo, hi.max(lo))
    }

    fn row_range(&self, r: &Rect) -> (usize, usize) {
        let c = self.cell_u;
        let ft = self.frame.top();
        let mut lo =
            (((ft - r.t.iter().sum::<f64>()) / c).floor().max(0.0) as usize).min(self.rows);
        while lo > 0 && exact::cmp(&self.y_line(lo), &r.t) == Ordering::Less {
            lo -= 1;
        }
        while lo < self.rows && exact::cmp(&self.y_line(lo + 1), &r.t) != Ordering::Less {
            lo += 1;
        }
        let mut hi = (((ft - r.b.iter().sum::<f64>()) / c).ceil().max(0.0) as usize).min(self.rows);
        while hi < self.rows && exact::cmp(&self.y_line(hi), &r.b) == Ordering::Greater {
            hi += 1;
        }
        while hi > 0 && exact::cmp(&self.y_line(hi - 1), &r.b) != Ordering::Greater {
            hi -= 1;
        }
        (lo, hi.max(lo))
    }

    /// Cells sharing positive area with `r`.
    pub fn cells_under(&self, r: &Rect) -> Vec<(usize, usize)> {
        let (c0, c1) = self.col_range(r);
        let (r0, r1) = self.row_range(r);
        let mut out = Vec::with_capacity((c1 - c0) * (r1 - r0));
        for row in r0..r1 {
            for col in c0..c1 {
                out.push((col, row));
            }
        }
        out
    }

    pub fn occupy(&mut self, r: &Rect) {
        for cell in self.cells_under(r) {
            self.occupied.insert(cell);
        }
    }

    pub fn is_free(&self, r: &Rect) -> bool {
        let (c0, c1) = self.col_range(r);
        let (r0, r1) = self.row_range(r);
        (r0..r1).all(|row| (c0..c1).all(|col| !self.occupied.contains(&(col, row))))
    }

    /// Candidate cells in scan order starting at `start`, wrapping once.
    pub fn scan(
        &self,
        order: ScanOrder,
        start: (usize, usize),
    ) -> impl Iterator<Item = (usize, usize)> + '_ {
        let ScanOrder::HorizontalRightThenVerticalDown = order;
        let n = self.cols * self.rows;
        let s = start.1 * self.cols + start.0;
        (0..n).map(move |k| {
            let i = (s + k) % n;
            (i % self.cols, i / self.cols)
        })
    }

    /// Cell holding the top-left corner of `r`, clamped into the grid: the
    /// last column whose left line is at or left of the corner, and the
    /// last row whose top line is at or above it.
    pub fn cell_of_top_left(&self, r: &Rect) -> (usize, usize) {
        let c = self.cell_u;
        let guess_c = ((r.l.iter().sum::<f64>() - self.frame.left()) / c).floor();
        let guess_r = ((self.frame.top() - r.t.iter().sum::<f64>()) / c).floor();
        let mut col = guess_c.clamp(0.0, (self.cols - 1) as f64) as usize;
        let mut row = guess_r.clamp(0.0, (self.rows - 1) as f64) as usize;
        while col + 1 < self.cols && exact::cmp(&self.x_line(col + 1), &r.l) != Ordering::Greater {
            col += 1;
        }
        while col > 0 && exact::cmp(&self.x_line(col), &r.l) == Ordering::Greater {
            col -= 1;
        }
        while row + 1 < self.rows && exact::cmp(&self.y_line(row + 1), &r.t) != Ordering::Less {
            row += 1;
        }
        while row > 0 && exact::cmp(&self.y_line(row), &r.t) == Ordering::Less {
            row -= 1;
        }
        (col, row)
    }
}

/// Raw box of size `w × h` whose inflated box has its top-left corner as
/// close as possible to the top-left corner of cell `(col, row)` without
/// crossing into the cell's left or upper neighbour: `cx` is the smallest
/// `f64` and `cy` the largest that keep the inflated box right of and below
/// those grid lines.
pub fn placed_at(
    grid: &OccupancyGrid,
    col: usize,
    row: usize,
    w: f64,
    h: f64,
    margin: f64,
) -> BBox {
    let xl = grid.x_line(col);
    let yt = grid.y_line(row);
    let left_ok = |cx: f64| exact::cmp(&[cx, -w / 2.0, -margin / 2.0], &xl) != Ordering::Less;
    let top_ok = |cy: f64| exact::cmp(&[cy, h / 2.0, margin / 2.0], &yt) != Ordering::Greater;
    let cx = exact::least_f64(xl.iter().sum::<f64>() + (w + margin) / 2.0, left_ok);
    let cy = exact::greatest_f64(yt.iter().sum::<f64>() - (h + margin) / 2.0, top_ok);
    BBox::new(cx, cy, w, h)
}

fn fits_in_frame(r: &Rect, frame: &FrameSpec) -> bool {
    r.within(&frame_rect(frame))
}

/// Conflicted elements that may move, most severe first, ties by id.
/// Severity is summed overlap area plus overflow excess.
pub fn processing_order(report: &ConflictReport, scene: &SceneProgram) -> Vec<String> {
    let mut severity: BTreeMap<&str, f64> = BTreeMap::new();
    for o in &report.overlaps {
        *severity.entry(o.a.as_str()).or_default() += o.overlap_area_u2;
        *severity.entry(o.b.as_str()).or_default() += o.overlap_area_u2;
    }
    for o in &report.overflows {
        *severity.entry(o.element_id.as_str()).or_default() += o.excess_u;
    }
    let mut ids: Vec<(&str, f64)> = severity
        .into_iter()
        .filter(|(id, _)| {
            !is_title(id)
                && scene
                    .element(id)
                    .is_some_and(|e| e.kind != ElementKind::Group)
        })
        .collect();
    ids.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ids.into_iter().map(|(id, _)| id.to_string()).collect()
}

/// Layout knobs shared by the retrieve and apply steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutParams {
    pub frame: FrameSpec,
    pub margin_u: f64,
    pub cell_u: f64,
}

/// One scan pass with `fixed` elements held in place.
fn scan_pass(
    scene: &SceneProgram,
    order: &[String],
    fixed: &BTreeSet<String>,
    p: &LayoutParams,
    scan: ScanOrder,
) -> (Vec<Move>, Option<String>) {
    let mut grid = OccupancyGrid::new(&p.frame, p.cell_u);
    let movable: BTreeSet<&str> = order
        .iter()
        .map(String::as_str)
        .filter(|id| !fixed.contains(*id))
        .collect();
    for el in &scene.elements {
        if el.kind != ElementKind::Group && !movable.contains(el.id.as_str()) {
            grid.occupy(&inflated_rect(&el.bbox, p.margin_u));
        }
    }
    let mut moves = Vec::new();
    for id in order.iter().filter(|id| movable.contains(id.as_str())) {
        let el = scene.element(id).expect("ordered ids resolve");
        let start = grid.cell_of_top_left(&inflated_rect(&el.bbox, p.margin_u));
        let found = grid.scan(scan, start).find_map(|(c, r)| {
            let raw = placed_at(&grid, c, r, el.bbox.w, el.bbox.h, p.margin_u);
            let infl = inflated_rect(&raw, p.margin_u);
            (fits_in_frame(&infl, &p.frame) && grid.is_free(&infl)).then_some((raw, infl))
        });
        match found {
            Some((raw, infl)) => {
                grid.occupy(&infl);
                moves.push(Move {
                    element_id: id.clone(),
                    new_bbox: raw,
                });
            }
            None => return (moves, Some(id.clone())),
        }
    }
    (moves, None)
}

/// Positions for every conflicted movable element: the first cell in scan
/// order whose inflated box is in-frame and touches no occupied cell. An
/// element with no such cell is left in place, counted as occupied, and the
/// pass is rerun, so moved elements never land on one that stayed.
pub fn retrieve_positions(
    report: &ConflictReport,
    scene: &SceneProgram,
    params: &LayoutParams,
    scan: ScanOrder,
) -> PlacementPlan {
    let order = processing_order(report, scene);
    let mut fixed: BTreeSet<String> = BTreeSet::new();
    loop {
        let (moves, stuck) = scan_pass(scene, &order, &fixed, params, scan);
        match stuck {
            Some(id) => {
                fixed.insert(id);
            }
            None => {
                let unresolved = order
                    .iter()
                    .filter(|id| fixed.contains(*id))
                    .cloned()
                    .collect();
                return PlacementPlan { moves, unresolved };
            }
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ApplyError {
    #[error("move targets missing element {0:?}")]
    MissingElement(String),
    #[error(transparent)]
    Dialect(#[from] DialectError),
}

pub fn apply_layout(
    scene: &SceneProgram,
    plan: &PlacementPlan,
    dialect_name: &str,
) -> Result<SceneProgram, ApplyError> {
    let mut out = scene.clone();
    for m in &plan.moves {
        out.element_mut(&m.element_id)
            .ok_or_else(|| ApplyError::MissingElement(m.element_id.clone()))?
            .bbox = m.new_bbox;
    }
    out.recompute_groups();
    out.advance(Stage::LaidOut);
    dialect::refresh_source(&mut out, dialect_name)?;
    Ok(out)
}

/// Detect, retrieve and apply in one go.
pub fn layout_pass(
    scene: &SceneProgram,
    params: &LayoutParams,
    dialect_name: &str,
) -> Result<(SceneProgram, ConflictReport, PlacementPlan), ApplyError> {
    let report = detect_conflicts(scene, &params.frame, params.margin_u);
    let plan = retrieve_positions(&report, scene, params, ScanOrder::default());
    let out = apply_layout(scene, &plan, dialect_name)?;
    Ok((out, report, plan))
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EditError {
    #[error("edit names missing element {0:?}")]
    MissingElement(String),
    #[error("edit for {0:?} has a malformed box")]
    BadBox(String),
    #[error("edit moves group {0:?}; move its children instead")]
    GroupGeometry(String),
    #[error("edit set is for page {got}, scene is page {want}")]
    WrongPage { got: usize, want: usize },
    #[error(transparent)]
    Dialect(#[from] DialectError),
}

/// Applies educator edits verbatim and reports the conflicts they leave.
/// Deleting an element removes it from groups and event targets; an event
/// left without targets is dropped.
pub fn apply_human_edits(
    scene: &SceneProgram,
    edits: &EditSet,
    params: &LayoutParams,
    dialect_name: &str,
) -> Result<(SceneProgram, ConflictReport), EditError> {
    if edits.page_index != scene.page_index {
        return Err(EditError::WrongPage {
            got: edits.page_index,
            want: scene.page_index,
        });
    }
    let mut out = scene.clone();
    let mut deleted: HashSet<String> = HashSet::new();
    for e in &edits.edits {
        let el = out
            .element_mut(&e.element_id)
            .ok_or_else(|| EditError::MissingElement(e.element_id.clone()))?;
        if let Some(b) = e.new_bbox {
            if !b.is_well_formed() {
                return Err(EditError::BadBox(e.element_id.clone()));
            }
            if el.kind == ElementKind::Group && !el.children.is_empty() {
                return Err(EditError::GroupGeometry(e.element_id.clone()));
            }
            el.bbox = b;
        }
        if let Some(c) = &e.new_content {
            el.content = c.clone();
        }
        if e.delete {
            deleted.insert(e.element_id.clone());
        }
    }
    if !deleted.is_empty() {
        out.elements.retain(|e| !deleted.contains(&e.id));
        for el in &mut out.elements {
            el.children.retain(|c| !deleted.contains(c));
        }
        out.events.retain_mut(|ev| {
            if ev.target_ids.is_empty() {
                return true;
            }
            ev.target_ids.retain(|t| !deleted.contains(t));
            !ev.target_ids.is_empty()
        });
    }
    out.recompute_groups();
    out.advance(Stage::Final);
    dialect::refresh_source(&mut out, dialect_name)?;
    let report = detect_conflicts(&out, &params.frame, params.margin_u);
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AnimationEvent, Edit, SceneElement, Verb};

    const FRAME: FrameSpec = FrameSpec {
        width_u: 16.0,
        height_u: 9.0,
    };

    fn params(margin: f64) -> LayoutParams {
        LayoutParams {
            frame: FRAME,
            margin_u: margin,
            cell_u: 0.25,
        }
    }

    fn scene(boxes: &[(&str, BBox)]) -> SceneProgram {
        let mut s = SceneProgram::empty(1);
        for (id, b) in boxes {
            s.elements
                .push(SceneElement::new(*id, ElementKind::Text, *id, *b));
            let mut ev = AnimationEvent::new(format!("a_{id}"), Verb::Appear, &[id], 1.0);
            ev.start_s = Some(s.events.len() as f64);
            s.events.push(ev);
        }
        s
    }

    #[test]
    fn disjoint_boxes_do_not_overlap() {
        let s = scene(&[
            ("a", BBox::new(0.0, 0.0, 2.0, 1.0)),
            ("b", BBox::new(5.0, 0.0, 2.0, 1.0)),
        ]);
        assert!(detect_conflicts(&s, &FRAME, 0.0).is_empty());
    }

    #[test]
    fn coincident_boxes_overlap_by_their_area() {
        let s = scene(&[
            ("b", BBox::new(0.0, 0.0, 2.0, 1.0)),
            ("a", BBox::new(0.0, 0.0, 2.0, 1.0)),
        ]);
        let r = detect_conflicts(&s, &FRAME, 0.0);
        assert_eq!(r.overlaps.len(), 1);
        assert_eq!(
            (r.overlaps[0].a.as_str(), r.overlaps[0].b.as_str()),
            ("a", "b")
        );
        assert_eq!(r.overlaps[0].overlap_area_u2, 2.0);
    }

    #[test]
    fn margin_turns_near_misses_into_overlaps() {
        let s = scene(&[
            ("a", BBox::new(0.0, 0.0, 2.0, 1.0)),
            ("b", BBox::new(2.05, 0.0, 2.0, 1.0)),
        ]);
        assert!(detect_conflicts(&s, &FRAME, 0.0).is_empty());
        assert_eq!(detect_conflicts(&s, &FRAME, 0.1).overlaps.len(), 1);
    }

    #[test]
    fn overflow_records_edges_and_max_excess() {
        let s = scene(&[("a", BBox::new(7.5, 4.0, 2.0, 2.0))]);
        let r = detect_conflicts(&s, &FRAME, 0.0);
        assert_eq!(r.overflows[0].violated_edges, vec![Edge::Right, Edge::Top]);
        assert_eq!(r.overflows[0].excess_u, 0.5);
    }

    #[test]
    fn grid_dimensions() {
        let g = OccupancyGrid::new(&FRAME, 0.25);
        assert_eq!((g.cols, g.rows), (64, 36));
        let g = OccupancyGrid::new(&FRAME, 0.3);
        assert_eq!((g.cols, g.rows), (54, 30));
    }

    #[test]
    fn single_free_cell_is_found() {
        // coarse grid: 1-unit cells on a 16x9 frame; everything but (3,2) is filled
        let p = LayoutParams {
            frame: FRAME,
            margin_u: 0.0,
            cell_u: 1.0,
        };
        let mut boxes = Vec::new();
        let mut ids = Vec::new();
        for r in 0..9 {
            for c in 0..16 {
                if (c, r) != (3, 2) {
                    ids.push(format!("w{r:02}_{c:02}"));
                    boxes.push(BBox::new(-7.5 + c as f64, 4.0 - r as f64, 1.0, 1.0));
                }
            }
        }
        let mut pairs: Vec<(&str, BBox)> = ids.iter().map(String::as_str).zip(boxes).collect();
        // the mover sits on top of wall cell (0,0)
        pairs.push(("mover", BBox::new(-7.5, 4.0, 1.0, 1.0)));
        let mut s = scene(&pairs);
        // walls are titles so only the mover is movable
        for el in &mut s.elements {
            if el.id.starts_with('w') {
                el.id = format!("title_{}", el.id);
            }
        }
        for ev in &mut s.events {
            if ev.target_ids[0].starts_with('w') {
                ev.target_ids[0] = format!("title_{}", ev.target_ids[0]);
            }
        }
        let report = detect_conflicts(&s, &FRAME, 0.0);
        let plan = retrieve_positions(&report, &s, &p, ScanOrder::default());
        assert_eq!(plan.unresolved, Vec::<String>::new());
        assert_eq!(plan.moves.len(), 1);
        assert_eq!(plan.moves[0].new_bbox, BBox::new(-4.5, 2.0, 1.0, 1.0));
        let out = apply_layout(&s, &plan, "ir-json").unwrap();
        let after = detect_conflicts(&out, &FRAME, 0.0);
        assert!(conflicts_involving(&after, &["mover"].into_iter().collect()).is_empty());
        assert_eq!(out.stage, Stage::LaidOut);
    }

    #[test]
    fn empty_report_gives_empty_plan() {
        let s = scene(&[("a", BBox::new(0.0, 0.0, 1.0, 1.0))]);
        let r = detect_conflicts(&s, &FRAME, 0.1);
        assert_eq!(
            retrieve_positions(&r, &s, &params(0.1), ScanOrder::default()),
            PlacementPlan::default()
        );
        let out = apply_layout(&s, &PlacementPlan::default(), "ir-json").unwrap();
        assert_eq!(out.elements, s.elements);
        assert_eq!(out.stage, Stage::LaidOut);
    }

    #[test]
    fn overlapping_pair_is_separated() {
        let s = scene(&[
            ("title", BBox::new(0.0, 3.75, 10.0, 1.0)),
            ("b1", BBox::new(0.0, 0.0, 4.0, 1.0)),
            ("b2", BBox::new(0.5, 0.25, 4.0, 1.0)),
        ]);
        let (out, before, plan) = layout_pass(&s, &params(0.1), "manim-ce").unwrap();
        assert_eq!(before.overlaps.len(), 1);
        assert!(plan.unresolved.is_empty());
        assert!(detect_conflicts(&out, &FRAME, 0.1).is_empty());
        assert_eq!(
            out.element("title").unwrap().bbox,
            s.element("title").unwrap().bbox
        );
    }

    #[test]
    fn human_edits_win_and_report_new_overlap() {
        let s = scene(&[
            ("a", BBox::new(-4.0, 0.0, 2.0, 1.0)),
            ("b", BBox::new(4.0, 0.0, 2.0, 1.0)),
        ]);
        let edits = EditSet {
            page_index: 1,
            edits: vec![Edit {
                element_id: "b".into(),
                new_bbox: Some(BBox::new(-4.0, 0.0, 2.0, 1.0)),
                new_content: None,
                delete: false,
            }],
            editor: "t".into(),
            timestamp: String::new(),
        };
        let (out, report) = apply_human_edits(&s, &edits, &params(0.1), "ir-json").unwrap();
        assert_eq!(out.stage, Stage::Final);
        assert_eq!(report.overlaps.len(), 1);
        assert_eq!(out.element("a").unwrap().bbox, s.element("a").unwrap().bbox);
    }

    #[test]
    fn deletion_cascades_to_events() {
        let s = scene(&[
            ("a", BBox::new(-4.0, 0.0, 2.0, 1.0)),
            ("b", BBox::new(4.0, 0.0, 2.0, 1.0)),
        ]);
        let edits = EditSet {
            page_index: 1,
            edits: vec![Edit {
                element_id: "b".into(),
                new_bbox: None,
                new_content: None,
                delete: true,
            }],
            editor: String::new(),
            timestamp: String::new(),
        };
        let (out, _) = apply_human_edits(&s, &edits, &params(0.1), "manim-ce").unwrap();
        assert!(out.element("b").is_none());
        assert_eq!(out.anchors(), vec!["a_a"]);
        assert!(out.validate().is_empty());
    }

    #[test]
    fn empty_edit_set_only_promotes() {
        let s = scene(&[("a", BBox::new(0.0, 0.0, 2.0, 1.0))]);
        let (out, _) = apply_human_edits(&s, &EditSet::empty(1), &params(0.1), "ir-json").unwrap();
        assert_eq!(out.elements, s.elements);
        assert_eq!(out.events, s.events);
        assert_eq!(out.stage, Stage::Final);
    }

    #[test]
    fn edit_on_missing_element_is_named() {
        let s = scene(&[("a", BBox::new(0.0, 0.0, 2.0, 1.0))]);
        let mut e = EditSet::empty(1);
        e.edits.push(Edit {
            element_id: "ghost".into(),
            new_bbox: None,
            new_content: Some("x".into()),
            delete: false,
        });
        assert_eq!(
            apply_human_edits(&s, &e, &params(0.1), "ir-json").unwrap_err(),
            EditError::MissingElement("ghost".into())
        );
    }
}
