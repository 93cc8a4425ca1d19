//! HTTP API for the human review step: page previews, conflict reports,
//! edit submission with what-if feedback, approval and continuation.
//!
//! Every mutating call carries the page's current revision as
//! `?revision=N`; a stale revision gets 409.

use serde::Serialize;
use std::fmt::Write as _;
use std::sync::Mutex;

use crate::canon;
use crate::layout;
use crate::model::{ConflictReport, EditSet, ElementKind, FrameSpec, SceneProgram};
use crate::pipeline::{
    GlobalStage, PageStage, Pipeline, PipelineError, RunCtx, RunOutcome, RunState,
};
use crate::store::{PageFile, StoreError};

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Response {
    fn json<T: Serialize>(status: u16, value: &T) -> Self {
        Response {
            status,
            content_type: "application/json",
            body: canon::to_bytes(value).expect("response encodes"),
        }
    }

    fn ok<T: Serialize>(value: &T) -> Self {
        Self::json(200, value)
    }

    fn error(status: u16, code: &str, message: impl Into<String>) -> Self {
        Self::json(
            status,
            &ApiError {
                code: code.to_string(),
                message: message.into(),
            },
        )
    }

    pub fn text(&self) -> &str {
        std::str::from_utf8(&self.body).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub global_stage: Option<GlobalStage>,
    pub pages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct PageSummary {
    pub page_index: usize,
    pub title: String,
    pub stage: PageStage,
    pub revision: u64,
    pub approved: bool,
    pub pending_edits: usize,
    pub conflict_count: usize,
    pub grid_cell_u: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct EditAccepted {
    pub page_index: usize,
    pub revision: u64,
    pub conflicts: ConflictReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct ContinueResult {
    pub global_stage: Option<GlobalStage>,
    pub pending: Vec<usize>,
    pub total_duration_s: Option<f64>,
}

/// Review state for one open run. Holds the run's lock while alive.
pub struct ReviewService {
    pipeline: Pipeline,
    ctx: Mutex<RunCtx>,
}

enum Route<'a> {
    Runs,
    Pages(&'a str),
    Preview(&'a str, usize),
    Conflicts(&'a str, usize),
    Edits(&'a str, usize),
    Approve(&'a str, usize),
    Continue(&'a str),
}

fn route<'a>(method: &str, path: &'a str) -> Result<Route<'a>, Response> {
    let parts: Vec<&str> = path.trim_matches('/').split('/').collect();
    let page = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Response::error(404, "not_found", format!("bad page index {s:?}")))
    };
    let r = match (method, parts.as_slice()) {
        ("GET", ["runs"]) => Route::Runs,
        ("GET", ["runs", id, "pages"]) => Route::Pages(id),
        ("GET", ["runs", id, "pages", i, "preview"]) => Route::Preview(id, page(i)?),
        ("GET", ["runs", id, "pages", i, "conflicts"]) => Route::Conflicts(id, page(i)?),
        ("POST", ["runs", id, "pages", i, "edits"]) => Route::Edits(id, page(i)?),
        ("POST", ["runs", id, "pages", i, "approve"]) => Route::Approve(id, page(i)?),
        ("POST", ["runs", id, "continue"]) => Route::Continue(id),
        (_, ["runs", ..]) => {
            return Err(Response::error(
                405,
                "method_not_allowed",
                format!("{method} {path}"),
            ))
        }
        _ => {
            return Err(Response::error(
                404,
                "not_found",
                format!("no route for {path}"),
            ))
        }
    };
    Ok(r)
}

fn query_param<'a>(query: &'a str, key: &str) -> Option<&'a str> {
    query
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v)
}

fn store_error(e: StoreError) -> Response {
    Response::error(500, "store", e.to_string())
}

fn pipeline_error(e: PipelineError) -> Response {
    let code = if e.is_fixture_miss() {
        "fixture_miss"
    } else {
        "pipeline"
    };
    Response::error(500, code, e.to_string())
}

impl ReviewService {
    /// Opens `run_id` under the pipeline's project. The run must have
    /// finished layout for review to mean anything.
    pub fn open(pipeline: Pipeline, run_id: &str) -> Result<Self, PipelineError> {
        let ctx = pipeline.open(run_id)?;
        Ok(ReviewService {
            pipeline,
            ctx: Mutex::new(ctx),
        })
    }

    pub fn run_id(&self) -> String {
        self.ctx.lock().expect("review state").run_id().to_string()
    }

    /// Dispatches one request. `target` may carry a query string.
    pub fn handle(&self, method: &str, target: &str, body: &[u8]) -> Response {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        let r = match route(method, path) {
            Ok(r) => r,
            Err(resp) => return resp,
        };
        if let Route::Runs = r {
            return self.list_runs();
        }
        let mut ctx = self.ctx.lock().expect("review state");
        let id = match &r {
            Route::Pages(id)
            | Route::Preview(id, _)
            | Route::Conflicts(id, _)
            | Route::Edits(id, _)
            | Route::Approve(id, _)
            | Route::Continue(id) => *id,
            Route::Runs => unreachable!(),
        };
        if id != ctx.run_id() {
            return Response::error(
                404,
                "unknown_run",
                format!("run {id:?} is not being served"),
            );
        }
        if let Route::Preview(_, i)
        | Route::Conflicts(_, i)
        | Route::Edits(_, i)
        | Route::Approve(_, i) = r
        {
            match ctx.state.page_stage(i) {
                None => return Response::error(404, "unknown_page", format!("no page {i}")),
                Some(s) if s < PageStage::LaidOut => {
                    return Response::error(
                        409,
                        "not_ready",
                        format!("page {i} has not been laid out yet"),
                    )
                }
                _ => {}
            }
        }
        match r {
            Route::Runs => unreachable!(),
            Route::Pages(_) => self.pages(&ctx),
            Route::Preview(_, i) => match self.current_scene(&ctx, i) {
                Ok((scene, _)) => Response {
                    status: 200,
                    content_type: "image/svg+xml",
                    body: render_svg(&scene, &ctx.config.frame).into_bytes(),
                },
                Err(e) => e,
            },
            Route::Conflicts(_, i) => match self.current_scene(&ctx, i) {
                Ok((_, report)) => Response::ok(&report),
                Err(e) => e,
            },
            Route::Edits(_, i) => self.post_edits(&mut ctx, i, query, body),
            Route::Approve(_, i) => self.approve(&mut ctx, i, query),
            Route::Continue(_) => self.continue_run(&mut ctx),
        }
    }

    fn list_runs(&self) -> Response {
        let mut runs = Vec::new();
        let entries = match std::fs::read_dir(&self.pipeline.project) {
            Ok(e) => e,
            Err(e) => return Response::error(500, "store", e.to_string()),
        };
        for entry in entries.flatten() {
            let path = entry.path().join("state");
            if let Ok(state) = crate::store::load_from::<RunState>(&path) {
                runs.push(RunSummary {
                    run_id: state.run_id.clone(),
                    global_stage: state.global_stage,
                    pages: state.pages.len(),
                });
            }
        }
        runs.sort_by(|a, b| a.run_id.cmp(&b.run_id));
        Response::ok(&runs)
    }

    fn pages(&self, ctx: &RunCtx) -> Response {
        let mut out = Vec::new();
        for (&i, &stage) in &ctx.state.pages {
            let title = match ctx
                .dir
                .load_page::<crate::model::PageBlueprint>(i, PageFile::Blueprint)
            {
                Ok(b) => b.title,
                Err(e) => return store_error(e),
            };
            let pending_edits = self
                .pending_edits(ctx, i)
                .map(|e| e.edits.len())
                .unwrap_or(0);
            let conflict_count = if stage >= PageStage::LaidOut {
                match self.current_scene(ctx, i) {
                    Ok((_, r)) => r.conflict_count(),
                    Err(e) => return e,
                }
            } else {
                0
            };
            out.push(PageSummary {
                page_index: i,
                title,
                stage,
                revision: ctx.state.revisions.get(&i).copied().unwrap_or(0),
                approved: ctx.state.approved.contains(&i),
                pending_edits,
                conflict_count,
                grid_cell_u: ctx.config.grid_cell_u,
            });
        }
        Response::ok(&out)
    }

    fn pending_edits(&self, ctx: &RunCtx, i: usize) -> Option<EditSet> {
        if ctx.state.page_reached(i, PageStage::Final) || !ctx.dir.has_page(i, PageFile::Edits) {
            return None;
        }
        ctx.dir.load_page(i, PageFile::Edits).ok()
    }

    /// The stored scene with any pending edits applied, plus its report.
    fn current_scene(
        &self,
        ctx: &RunCtx,
        i: usize,
    ) -> Result<(SceneProgram, ConflictReport), Response> {
        let scene: SceneProgram = ctx.dir.load_page(i, PageFile::Scene).map_err(store_error)?;
        match self.pending_edits(ctx, i) {
            Some(edits) => {
                let params = layout::LayoutParams {
                    frame: ctx.config.frame,
                    margin_u: ctx.config.margin_u,
                    cell_u: ctx.config.grid_cell_u,
                };
                layout::apply_human_edits(&scene, &edits, &params, &ctx.config.dialect)
                    .map_err(|e| Response::error(500, "stored_edits", e.to_string()))
            }
            None => {
                let report =
                    layout::detect_conflicts(&scene, &ctx.config.frame, ctx.config.margin_u);
                Ok((scene, report))
            }
        }
    }

    fn check_revision(&self, ctx: &RunCtx, i: usize, query: &str) -> Result<(), Response> {
        let current = ctx.state.revisions.get(&i).copied().unwrap_or(0);
        let given = query_param(query, "revision").ok_or_else(|| {
            Response::error(
                428,
                "revision_required",
                "pass ?revision=<n> from the page listing",
            )
        })?;
        let given: u64 = given
            .parse()
            .map_err(|_| Response::error(400, "bad_request", format!("bad revision {given:?}")))?;
        if given != current {
            return Err(Response::error(
                409,
                "stale_revision",
                format!("page {i} is at revision {current}, request was made against {given}"),
            ));
        }
        Ok(())
    }

    fn post_edits(&self, ctx: &mut RunCtx, i: usize, query: &str, body: &[u8]) -> Response {
        if let Err(e) = self.check_revision(ctx, i, query) {
            return e;
        }
        if ctx.state.page_reached(i, PageStage::Final) {
            return Response::error(409, "page_final", format!("page {i} is already final"));
        }
        let edits: EditSet = match canon::from_slice(body) {
            Ok(e) => e,
            Err(e) => return Response::error(400, "bad_request", e.to_string()),
        };
        if edits.page_index != i {
            return Response::error(
                422,
                "invalid_edit",
                format!("edit set is for page {}, not {i}", edits.page_index),
            );
        }
        let scene: SceneProgram = match ctx.dir.load_page(i, PageFile::Scene) {
            Ok(s) => s,
            Err(e) => return store_error(e),
        };
        let params = layout::LayoutParams {
            frame: ctx.config.frame,
            margin_u: ctx.config.margin_u,
            cell_u: ctx.config.grid_cell_u,
        };
        let report = match layout::apply_human_edits(&scene, &edits, &params, &ctx.config.dialect) {
            Ok((_, r)) => r,
            Err(e) => return Response::error(422, "invalid_edit", e.to_string()),
        };
        if let Err(e) = ctx.dir.save_page(i, PageFile::Edits, &edits) {
            return store_error(e);
        }
        let rev = ctx.state.revisions.entry(i).or_insert(0);
        *rev += 1;
        let revision = *rev;
        ctx.state.approved.remove(&i);
        ctx.state.log("review.edits", Some(i));
        if let Err(e) = ctx.dir.save("state", &ctx.state) {
            return store_error(e);
        }
        Response::ok(&EditAccepted {
            page_index: i,
            revision,
            conflicts: report,
        })
    }

    fn approve(&self, ctx: &mut RunCtx, i: usize, query: &str) -> Response {
        if let Err(e) = self.check_revision(ctx, i, query) {
            return e;
        }
        if !ctx.state.page_reached(i, PageStage::Final) {
            let edits = self
                .pending_edits(ctx, i)
                .unwrap_or_else(|| EditSet::empty(i));
            ctx.state.approved.insert(i);
            if let Err(e) = self.pipeline.finalize_page(ctx, i, &edits) {
                ctx.state.approved.remove(&i);
                return pipeline_error(e);
            }
        } else {
            ctx.state.approved.insert(i);
            if let Err(e) = ctx.dir.save("state", &ctx.state) {
                return store_error(e);
            }
        }
        self.pages_entry(ctx, i)
    }

    fn pages_entry(&self, ctx: &RunCtx, i: usize) -> Response {
        let resp = self.pages(ctx);
        if resp.status != 200 {
            return resp;
        }
        let all: Vec<PageSummary> = canon::from_slice(&resp.body).expect("own output parses");
        match all.into_iter().find(|p| p.page_index == i) {
            Some(p) => Response::ok(&p),
            None => Response::error(404, "unknown_page", format!("no page {i}")),
        }
    }

    fn continue_run(&self, ctx: &mut RunCtx) -> Response {
        if !ctx.state.reached(GlobalStage::Validated) {
            return Response::error(409, "not_ready", "run has not finished layout");
        }
        let pending: Vec<usize> = ctx
            .page_indices()
            .into_iter()
            .filter(|&i| !ctx.state.page_reached(i, PageStage::Final))
            .collect();
        if !pending.is_empty() {
            return Response::json(
                409,
                &ApiError {
                    code: "pages_pending".into(),
                    message: format!("pages awaiting approval: {pending:?}"),
                },
            );
        }
        match self.pipeline.drive(ctx) {
            Ok(RunOutcome::Complete(out)) => Response::ok(&ContinueResult {
                global_stage: ctx.state.global_stage,
                pending: vec![],
                total_duration_s: Some(out.video_plan.total_duration_s),
            }),
            Ok(RunOutcome::AwaitingReview { pending, .. }) => Response::ok(&ContinueResult {
                global_stage: ctx.state.global_stage,
                pending,
                total_duration_s: None,
            }),
            Err(e) => pipeline_error(e),
        }
    }
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '&' => out.push_str("&amp;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

const PX_PER_U: f64 = 100.0;

fn px(v: f64) -> String {
    let r = (v * PX_PER_U * 100.0).round() / 100.0;
    crate::codegen::dialect::fmt_f64(if r == 0.0 { 0.0 } else { r })
}

/// SVG of the scene in frame coordinates, y up, one unit = 100 px.
pub fn render_svg(scene: &SceneProgram, frame: &FrameSpec) -> String {
    let (w, h) = (frame.width_u, frame.height_u);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" data-page="{}">"#,
        px(w),
        px(h),
        px(w),
        px(h),
        scene.page_index
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{}" height="{}" fill="white" stroke="black"/>"#,
        px(w),
        px(h)
    );
    for e in &scene.elements {
        let x = e.bbox.left() - frame.left();
        let y = frame.top() - e.bbox.top();
        let (fill, stroke, dash) = match e.kind {
            ElementKind::Group => ("none", "#888888", r#" stroke-dasharray="4 2""#),
            ElementKind::Formula => ("#eef3ff", "#3355aa", ""),
            ElementKind::Shape => ("#eefaee", "#338833", ""),
            ElementKind::ImagePlaceholder => ("#dddddd", "#666666", ""),
            ElementKind::Text => ("none", "#bbbbbb", ""),
        };
        let kind = canon::to_tree(&e.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            r#"<g data-id="{}" data-kind="{}"><rect x="{}" y="{}" width="{}" height="{}" fill="{}" stroke="{}"{}/>"#,
            esc(&e.id),
            kind,
            px(x),
            px(y),
            px(e.bbox.w),
            px(e.bbox.h),
            fill,
            stroke,
            dash
        );
        if e.kind != ElementKind::Group {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="{}" text-anchor="middle" dominant-baseline="middle">{}</text>"#,
                px(x + e.bbox.w / 2.0),
                px(y + e.bbox.h / 2.0),
                px((e.bbox.h * 0.4).min(0.5)),
                esc(&e.content)
            );
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}

/// Serves the API until the process ends.
pub fn serve(service: &ReviewService, port: u16) -> std::io::Result<()> {
    let server = tiny_http::Server::http(("127.0.0.1", port))
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    log::info!(
        "review API for {} on http://127.0.0.1:{port}",
        service.run_id()
    );
    for mut req in server.incoming_requests() {
        let mut body = Vec::new();
        let resp = match req.as_reader().read_to_end(&mut body) {
            Ok(_) => service.handle(req.method().as_str(), req.url(), &body),
            Err(e) => Response::error(400, "bad_request", e.to_string()),
        };
        let header = tiny_http::Header::from_bytes("Content-Type", resp.content_type)
            .expect("static header");
        let out = tiny_http::Response::from_data(resp.body)
            .with_status_code(resp.status)
            .with_header(header);
        if let Err(e) = req.respond(out) {
            log::warn!("failed to answer request: {e}");
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, SceneElement};

    #[test]
    fn svg_flips_y_and_escapes() {
        let mut scene = SceneProgram::empty(1);
        scene.elements.push(SceneElement::new(
            "a",
            ElementKind::Text,
            "x<y",
            BBox::new(0.0, 4.0, 2.0, 1.0),
        ));
        let svg = render_svg(&scene, &FrameSpec::default());
        assert!(
            svg.contains(r#"<rect x="700.0" y="0.0" width="200.0" height="100.0""#),
            "{svg}"
        );
        assert!(svg.contains("x&lt;y"));
        assert_eq!(svg, render_svg(&scene, &FrameSpec::default()));
    }

    #[test]
    fn routes_and_query() {
        assert!(matches!(route("GET", "/runs"), Ok(Route::Runs)));
        assert!(matches!(
            route("POST", "/runs/r/pages/2/edits"),
            Ok(Route::Edits("r", 2))
        ));
        assert_eq!(
            route("GET", "/runs/r/pages/x/preview")
                .err()
                .unwrap()
                .status,
            404
        );
        assert_eq!(route("DELETE", "/runs").err().unwrap().status, 405);
        assert_eq!(route("GET", "/nope").err().unwrap().status, 404);
        assert_eq!(query_param("a=1&revision=3", "revision"), Some("3"));
        assert_eq!(query_param("", "revision"), None);
    }
}
