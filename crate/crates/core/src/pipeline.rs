//! End-to-end run: compose, paginate, then per page generate, narrate,
//! synchronize, debug and lay out; optional human review; final render and
//! merge. Every completed stage is persisted so a run can resume.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use crate::canon;
use crate::codegen::{self, CodegenError, DialectError, DialectRegistry};
use crate::composer::{self, ComposerError, RefinementAction};
use crate::debugger::{self, DebugError, DebugTrace};
use crate::gateway::{Gateway, GatewayError};
use crate::layout::{self, ApplyError, EditError, LayoutParams};
use crate::model::{
    AudioAsset, ConflictReport, EditSet, LectureOutline, Manuscript, ModelError, NarrationScript,
    PageBlueprint, PipelineConfig, PipelineOutput, PlacementPlan, SceneProgram, Segment,
    VideoArtifact, VideoSegment,
};
use crate::narrator::{
    self, GatewayTts, MockTts, NarrateError, SynthesisResult, TtsBackend, TtsError,
};
use crate::paginator::{self, AggregateError, PaginateError, SegmentError};
use crate::render::{
    ExternalMuxer, ExternalRenderer, MuxError, Muxer, NullMuxer, NullRenderer, RenderFailure,
    RenderJob, Renderer,
};
use crate::store::{PageFile, RunDir, StoreError};
use crate::synchronizer::{self, DriftReport, SyncError, SyncWarning};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlobalStage {
    Planned,
    Paginated,
    Generated,
    Validated,
    AwaitingReview,
    Rendered,
    Merged,
}

/// Furthest completed step of one page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageStage {
    Planned,
    Generated,
    Narrated,
    Synced,
    Debugged,
    LaidOut,
    Final,
    Rendered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: usize,
    pub stage: String,
    #[serde(default)]
    pub page: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub run_id: String,
    #[serde(default)]
    pub global_stage: Option<GlobalStage>,
    #[serde(default)]
    pub pages: BTreeMap<usize, PageStage>,
    #[serde(default)]
    pub approved: BTreeSet<usize>,
    /// Bumped on every accepted edit; echoed back by review clients.
    #[serde(default)]
    pub revisions: BTreeMap<usize, u64>,
    #[serde(default)]
    pub trace: Vec<TraceEvent>,
}

impl RunState {
    pub fn new(run_id: &str) -> Self {
        RunState {
            run_id: run_id.to_string(),
            global_stage: None,
            pages: BTreeMap::new(),
            approved: BTreeSet::new(),
            revisions: BTreeMap::new(),
            trace: Vec::new(),
        }
    }

    pub fn reached(&self, stage: GlobalStage) -> bool {
        self.global_stage.is_some_and(|g| g >= stage)
    }

    pub fn advance(&mut self, stage: GlobalStage) {
        self.global_stage = Some(self.global_stage.map_or(stage, |g| g.max(stage)));
    }

    pub fn page_stage(&self, page: usize) -> Option<PageStage> {
        self.pages.get(&page).copied()
    }

    pub fn page_reached(&self, page: usize, stage: PageStage) -> bool {
        self.page_stage(page).is_some_and(|s| s >= stage)
    }

    pub fn advance_page(&mut self, page: usize, stage: PageStage) {
        let e = self.pages.entry(page).or_insert(stage);
        *e = (*e).max(stage);
    }

    pub fn log(&mut self, stage: impl Into<String>, page: Option<usize>) {
        self.trace.push(TraceEvent {
            seq: self.trace.len(),
            stage: stage.into(),
            page,
        });
    }

    /// How many times `stage` ran for `page`.
    pub fn count(&self, stage: &str, page: Option<usize>) -> usize {
        self.trace
            .iter()
            .filter(|e| e.stage == stage && e.page == page)
            .count()
    }
}

/// Everything the synchronize/debug/layout chain leaves behind for a page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageTrace {
    pub sync_warnings: Vec<SyncWarning>,
    pub drift: DriftReport,
    pub debug: DebugTrace,
    pub conflicts_before_layout: ConflictReport,
    pub placement: PlacementPlan,
    #[serde(default)]
    pub conflicts_after_review: Option<ConflictReport>,
}

#[derive(Debug, thiserror::Error)]
pub enum MergeError {
    #[error("no rendered segment for page {0}")]
    MissingSegment(usize),
}

/// Orders segments by the audio's page order and sums durations. With one
/// page the merged media is that page's segment.
pub fn merge(segments: &[VideoSegment], audio: &[AudioAsset]) -> Result<VideoArtifact, MergeError> {
    let mut ordered = Vec::with_capacity(audio.len());
    for a in audio {
        let seg = segments
            .iter()
            .find(|s| s.page_index == a.page_index)
            .ok_or(MergeError::MissingSegment(a.page_index))?;
        ordered.push(seg.clone());
    }
    let total_duration_s = ordered.iter().map(|s| s.duration_s).sum();
    let merged_ref = match ordered.as_slice() {
        [only] => Some(only.video_ref.clone()),
        _ => None,
    };
    Ok(VideoArtifact {
        segments: ordered,
        merged_ref,
        total_duration_s,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid input: {0}")]
    Model(#[from] ModelError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot resume: {path}: {reason}")]
    Resume { path: PathBuf, reason: String },
    #[error("no run {0:?} in this project")]
    UnknownRun(String),
    #[error("run is locked by process {pid} ({path})")]
    Locked { path: PathBuf, pid: u32 },
    #[error(transparent)]
    Compose(#[from] ComposerError),
    #[error(transparent)]
    Segment(#[from] SegmentError),
    #[error(transparent)]
    Paginate(#[from] PaginateError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Dialect(#[from] DialectError),
    #[error("page {page}: {source}")]
    Codegen { page: usize, source: CodegenError },
    #[error("page {page}: {source}")]
    Narrate { page: usize, source: NarrateError },
    #[error("page {page}: {source}")]
    Tts { page: usize, source: TtsError },
    #[error("page {page}: {source}")]
    Sync { page: usize, source: SyncError },
    #[error("page {page}: {source}")]
    Debug { page: usize, source: DebugError },
    #[error("page {page}: {source}")]
    Layout { page: usize, source: ApplyError },
    #[error("page {page}: {source}")]
    Edit { page: usize, source: EditError },
    #[error(transparent)]
    Render(#[from] RenderFailure),
    #[error(transparent)]
    Mux(#[from] MuxError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error("unknown {what} backend {name:?}")]
    Backend { what: &'static str, name: String },
    #[error("halted after page {0}")]
    Halted(usize),
}

impl PipelineError {
    /// The gateway failure behind this error, if any.
    pub fn gateway(&self) -> Option<&GatewayError> {
        match self {
            PipelineError::Compose(ComposerError::Gateway(g))
            | PipelineError::Paginate(PaginateError::Gateway(g))
            | PipelineError::Codegen {
                source: CodegenError::Gateway(g),
                ..
            }
            | PipelineError::Narrate {
                source: NarrateError::Gateway(g),
                ..
            }
            | PipelineError::Tts {
                source: TtsError::Gateway(g),
                ..
            }
            | PipelineError::Debug {
                source: DebugError::Gateway(g),
                ..
            } => Some(g),
            _ => None,
        }
    }

    pub fn is_fixture_miss(&self) -> bool {
        matches!(self.gateway(), Some(GatewayError::FixtureMiss { .. }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Complete(PipelineOutput),
    AwaitingReview { run_id: String, pending: Vec<usize> },
}

impl RunOutcome {
    pub fn output(&self) -> Option<&PipelineOutput> {
        match self {
            RunOutcome::Complete(o) => Some(o),
            RunOutcome::AwaitingReview { .. } => None,
        }
    }
}

/// Stable id of a run: hash of the canonical outline and config.
pub fn run_id_for(outline: &LectureOutline, config: &PipelineConfig) -> String {
    let mut h = Sha256::new();
    h.update(canon::to_bytes(outline).expect("outline encodes"));
    h.update([0u8]);
    h.update(canon::to_bytes(config).expect("config encodes"));
    format!("run-{}", &hex::encode(h.finalize())[..12])
}

/// Exclusive guard on a run directory, across processes and within one.
/// The file holds the owner's pid; a lock whose owner is gone is taken
/// over.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

fn process_alive(pid: u32) -> bool {
    if cfg!(target_os = "linux") {
        Path::new("/proc").join(pid.to_string()).exists()
    } else {
        false
    }
}

/// Lock files held by this process.
static HELD: Mutex<BTreeSet<PathBuf>> = Mutex::new(BTreeSet::new());

impl RunLock {
    pub fn acquire(dir: &RunDir) -> Result<Self, PipelineError> {
        let path = dir.file("lock");
        let mut held = HELD.lock().unwrap_or_else(|e| e.into_inner());
        if held.contains(&path) {
            return Err(PipelineError::Locked {
                path,
                pid: std::process::id(),
            });
        }
        if let Ok(text) = std::fs::read_to_string(&path) {
            if let Ok(pid) = text.trim().parse::<u32>() {
                if pid != std::process::id() && process_alive(pid) {
                    return Err(PipelineError::Locked { path, pid });
                }
                log::warn!("taking over stale lock of process {pid}");
            }
        }
        crate::store::write_atomic(&path, std::process::id().to_string().as_bytes()).map_err(
            |source| StoreError::Io {
                path: path.clone(),
                source,
            },
        )?;
        held.insert(path.clone());
        Ok(RunLock { path })
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let mut held = HELD.lock().unwrap_or_else(|e| e.into_inner());
        let _ = std::fs::remove_file(&self.path);
        held.remove(&self.path);
    }
}

/// Called after each page's layout is committed; returning `true` stops the
/// run there, as a crash would.
pub type PageHook = Arc<dyn Fn(usize) -> bool + Send + Sync>;

/// Runs `f` over `items` on up to `workers` threads. Results come back
/// through a completion queue and are returned in item order.
pub fn fan_out<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let n = items.len();
    let workers = workers.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            let f = &f;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                if tx.send((i, f(&items[i]))).is_err() {
                    break;
                }
            });
        }
    });
    drop(tx);
    let mut slots: Vec<Option<R>> = (0..n).map(|_| None).collect();
    for (i, r) in rx {
        slots[i] = Some(r);
    }
    slots
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

pub struct Pipeline {
    pub project: PathBuf,
    pub gateway: Gateway,
    pub renderer: Arc<dyn Renderer>,
    pub muxer: Arc<dyn Muxer>,
    pub page_hook: Option<PageHook>,
}

/// An open run: its directory, inputs and state, plus the lock.
pub struct RunCtx {
    pub dir: RunDir,
    pub outline: LectureOutline,
    pub config: PipelineConfig,
    pub state: RunState,
    _lock: RunLock,
}

impl RunCtx {
    pub fn run_id(&self) -> &str {
        &self.state.run_id
    }

    fn save_state(&self) -> Result<(), StoreError> {
        self.dir.save("state", &self.state)
    }

    fn params(&self) -> LayoutParams {
        LayoutParams {
            frame: self.config.frame,
            margin_u: self.config.margin_u,
            cell_u: self.config.grid_cell_u,
        }
    }

    fn workers(&self, items: usize) -> usize {
        items.min(self.config.parallelism.max(1)).max(1)
    }

    pub fn page_indices(&self) -> Vec<usize> {
        self.state.pages.keys().copied().collect()
    }
}

/// Renderer named by the config; the work directory holds emitted sources.
pub fn renderer_from_config(
    config: &PipelineConfig,
    work_dir: &Path,
) -> Result<Arc<dyn Renderer>, PipelineError> {
    match config.renderer.backend.as_str() {
        "null" => Ok(Arc::new(NullRenderer)),
        "external" => Ok(Arc::new(ExternalRenderer {
            backend: config.renderer.clone(),
            work_dir: work_dir.to_path_buf(),
        })),
        other => Err(PipelineError::Backend {
            what: "renderer",
            name: other.to_string(),
        }),
    }
}

pub fn muxer_from_config(
    config: &PipelineConfig,
    work_dir: &Path,
) -> Result<Arc<dyn Muxer>, PipelineError> {
    match config.muxer.backend.as_str() {
        "null" => Ok(Arc::new(NullMuxer)),
        "external" => Ok(Arc::new(ExternalMuxer {
            backend: config.muxer.clone(),
            work_dir: work_dir.to_path_buf(),
        })),
        other => Err(PipelineError::Backend {
            what: "muxer",
            name: other.to_string(),
        }),
    }
}

struct ChainResult {
    scene: SceneProgram,
    trace: PageTrace,
    conflicts: ConflictReport,
}

impl Pipeline {
    pub fn new(project: impl Into<PathBuf>, gateway: Gateway) -> Self {
        Pipeline {
            project: project.into(),
            gateway,
            renderer: Arc::new(NullRenderer),
            muxer: Arc::new(NullMuxer),
            page_hook: None,
        }
    }

    pub fn with_renderer(mut self, r: Arc<dyn Renderer>) -> Self {
        self.renderer = r;
        self
    }

    pub fn with_muxer(mut self, m: Arc<dyn Muxer>) -> Self {
        self.muxer = m;
        self
    }

    pub fn with_page_hook(mut self, hook: PageHook) -> Self {
        self.page_hook = Some(hook);
        self
    }

    pub fn run_dir(&self, run_id: &str) -> RunDir {
        RunDir::new(&self.project, run_id)
    }

    /// Creates the run directory for these inputs, or reopens it when the
    /// same inputs were seen before.
    pub fn create(
        &self,
        outline: &LectureOutline,
        config: &PipelineConfig,
    ) -> Result<RunCtx, PipelineError> {
        outline.validate()?;
        config.validate()?;
        let run_id = run_id_for(outline, config);
        let dir = self.run_dir(&run_id);
        if dir.exists("state") {
            return self.open(&run_id);
        }
        std::fs::create_dir_all(dir.root()).map_err(|source| StoreError::Io {
            path: dir.root().to_path_buf(),
            source,
        })?;
        let lock = RunLock::acquire(&dir)?;
        dir.save("outline", outline)?;
        dir.save("config", config)?;
        let state = RunState::new(&run_id);
        dir.save("state", &state)?;
        Ok(RunCtx {
            dir,
            outline: outline.clone(),
            config: config.clone(),
            state,
            _lock: lock,
        })
    }

    /// Opens an existing run and checks every artifact its state claims.
    pub fn open(&self, run_id: &str) -> Result<RunCtx, PipelineError> {
        let dir = self.run_dir(run_id);
        if !dir.exists("state") {
            return Err(PipelineError::UnknownRun(run_id.to_string()));
        }
        let lock = RunLock::acquire(&dir)?;
        let resume_err = |e: StoreError| PipelineError::Resume {
            path: e.path().to_path_buf(),
            reason: e.to_string(),
        };
        let state: RunState = dir.load("state").map_err(resume_err)?;
        let outline: LectureOutline = dir.load("outline").map_err(resume_err)?;
        let config: PipelineConfig = dir.load("config").map_err(resume_err)?;
        if state.reached(GlobalStage::Planned) {
            dir.load::<Manuscript>("manuscript").map_err(resume_err)?;
        }
        for (&page, &stage) in &state.pages {
            dir.load_page::<PageBlueprint>(page, PageFile::Blueprint)
                .map_err(resume_err)?;
            if stage >= PageStage::Generated {
                let scene: SceneProgram =
                    dir.load_page(page, PageFile::Scene).map_err(resume_err)?;
                if let Some(v) = scene.validate().first() {
                    return Err(PipelineError::Resume {
                        path: dir.page_file(page, PageFile::Scene),
                        reason: v.to_string(),
                    });
                }
            }
            if stage >= PageStage::Narrated {
                dir.load_page::<NarrationScript>(page, PageFile::Script)
                    .map_err(resume_err)?;
                dir.load_page::<SynthesisResult>(page, PageFile::AudioMeta)
                    .map_err(resume_err)?;
            }
            if stage >= PageStage::Rendered {
                dir.load_page::<VideoSegment>(page, PageFile::Segment)
                    .map_err(resume_err)?;
            }
        }
        Ok(RunCtx {
            dir,
            outline,
            config,
            state,
            _lock: lock,
        })
    }

    /// Full run for these inputs; picks up where an earlier run stopped.
    pub fn run(
        &self,
        outline: &LectureOutline,
        config: &PipelineConfig,
    ) -> Result<RunOutcome, PipelineError> {
        let mut ctx = self.create(outline, config)?;
        self.drive(&mut ctx)
    }

    pub fn resume(&self, run_id: &str) -> Result<RunOutcome, PipelineError> {
        let mut ctx = self.open(run_id)?;
        self.drive(&mut ctx)
    }

    pub fn drive(&self, ctx: &mut RunCtx) -> Result<RunOutcome, PipelineError> {
        if ctx.state.reached(GlobalStage::Merged) {
            return Ok(RunOutcome::Complete(ctx.dir.load("output")?));
        }
        self.plan(ctx)?;
        self.paginate(ctx)?;
        self.generate(ctx)?;
        self.validate(ctx)?;
        if let Some(pending) = self.review(ctx)? {
            return Ok(RunOutcome::AwaitingReview {
                run_id: ctx.run_id().to_string(),
                pending,
            });
        }
        self.render(ctx)?;
        Ok(RunOutcome::Complete(self.merge(ctx)?))
    }

    /// Skeleton, expansion and duration refinement.
    pub fn plan(&self, ctx: &mut RunCtx) -> Result<Manuscript, PipelineError> {
        if ctx.state.reached(GlobalStage::Planned) {
            return Ok(ctx.dir.load("manuscript")?);
        }
        let gw = &self.gateway;
        let skeleton = composer::skeletonize(gw, &ctx.outline)?;
        ctx.dir.save("skeleton", &skeleton)?;
        ctx.state.log("compose.skeletonize", None);
        let draft = composer::expand(gw, &skeleton, &ctx.outline.language, ctx.config.parallelism)?;
        ctx.state.log("compose.expand", None);
        let refined = composer::refine(
            gw,
            &draft,
            ctx.config.target_duration_s,
            ctx.config.words_per_minute_default,
        )?;
        ctx.state.log("compose.refine", None);
        #[derive(Serialize)]
        struct RefineRecord<'a> {
            actions: &'a [RefinementAction],
            converged: bool,
            final_estimate_s: f64,
            target_duration_s: f64,
        }
        ctx.dir.save(
            "refine",
            &RefineRecord {
                actions: &refined.actions,
                converged: refined.converged,
                final_estimate_s: refined.final_estimate_s,
                target_duration_s: ctx.config.target_duration_s,
            },
        )?;
        ctx.dir.save("manuscript", &refined.manuscript)?;
        ctx.state.advance(GlobalStage::Planned);
        ctx.save_state()?;
        Ok(refined.manuscript)
    }

    /// Segments the manuscript, paginates segments in parallel and joins.
    pub fn paginate(&self, ctx: &mut RunCtx) -> Result<Vec<PageBlueprint>, PipelineError> {
        if ctx.state.reached(GlobalStage::Paginated) {
            return Ok(ctx.dir.load("blueprints")?);
        }
        let manuscript: Manuscript = ctx.dir.load("manuscript")?;
        let segments: Vec<Segment> =
            paginator::segment(&manuscript, ctx.config.segment_word_budget)?;
        ctx.dir.save("segments", &segments)?;
        let density = ctx.config.page_density_max;
        let results = fan_out(&segments, ctx.workers(segments.len()), |seg| {
            paginator::paginate_segment(&self.gateway, &manuscript, seg, density)
        });
        let mut per_segment = Vec::new();
        for (seg, r) in segments.iter().zip(results) {
            per_segment.push(r?);
            ctx.state
                .log(format!("paginate.segment.{}", seg.index), None);
        }
        let pages = paginator::aggregate(per_segment, manuscript.sections.len())?;
        for p in &pages {
            ctx.dir.save_page(p.page_index, PageFile::Blueprint, p)?;
            ctx.state.advance_page(p.page_index, PageStage::Planned);
        }
        ctx.dir.save("blueprints", &pages)?;
        ctx.state.advance(GlobalStage::Paginated);
        ctx.save_state()?;
        Ok(pages)
    }

    fn blueprints(&self, ctx: &RunCtx) -> Result<Vec<PageBlueprint>, PipelineError> {
        Ok(ctx.dir.load("blueprints")?)
    }

    /// Scene generation fans out over pages; narration then runs page by
    /// page, each conditioned on the previous script.
    pub fn generate(&self, ctx: &mut RunCtx) -> Result<(), PipelineError> {
        if ctx.state.reached(GlobalStage::Generated) {
            return Ok(());
        }
        let pages = self.blueprints(ctx)?;
        let registry = DialectRegistry::default();
        let dialect = registry.resolve(&ctx.config.dialect)?;
        let todo: Vec<&PageBlueprint> = pages
            .iter()
            .filter(|p| !ctx.state.page_reached(p.page_index, PageStage::Generated))
            .collect();
        let frame = ctx.config.frame;
        let results = fan_out(&todo, ctx.workers(todo.len()), |p| {
            codegen::generate_scene(&self.gateway, p, &frame, dialect)
        });
        for (p, r) in todo.iter().zip(results) {
            let scene = r.map_err(|source| PipelineError::Codegen {
                page: p.page_index,
                source,
            })?;
            ctx.dir.save_page(p.page_index, PageFile::Scene, &scene)?;
            ctx.dir
                .save_page_text(p.page_index, PageFile::SceneScript, &scene.source_text)?;
            ctx.state.advance_page(p.page_index, PageStage::Generated);
            ctx.state.log("codegen", Some(p.page_index));
            ctx.save_state()?;
        }

        let language = ctx.outline.language.clone();
        let mock_tts = MockTts {
            wpm: ctx.config.words_per_minute_default,
        };
        let service_tts = GatewayTts {
            gateway: &self.gateway,
            language: language.clone(),
        };
        let tts: &dyn TtsBackend = match ctx.config.tts_backend.as_str() {
            "mock" => &mock_tts,
            "service" => &service_tts,
            other => {
                return Err(PipelineError::Backend {
                    what: "tts",
                    name: other.to_string(),
                })
            }
        };
        let mut prev: Option<NarrationScript> = None;
        for p in &pages {
            let i = p.page_index;
            if ctx.state.page_reached(i, PageStage::Narrated) {
                prev = Some(ctx.dir.load_page(i, PageFile::Script)?);
                continue;
            }
            let scene: SceneProgram = ctx.dir.load_page(i, PageFile::Scene)?;
            let script =
                narrator::compose_narration(&self.gateway, p, prev.as_ref(), &scene, &language)
                    .map_err(|source| PipelineError::Narrate { page: i, source })?;
            let synth = narrator::synthesize(&script, &ctx.config.voice_id, tts)
                .map_err(|source| PipelineError::Tts { page: i, source })?;
            ctx.dir.save_page(i, PageFile::Script, &script)?;
            ctx.dir.save_page(i, PageFile::AudioMeta, &synth)?;
            ctx.state.advance_page(i, PageStage::Narrated);
            ctx.state.log("narrate", Some(i));
            ctx.save_state()?;
            prev = Some(script);
        }
        ctx.state.advance(GlobalStage::Generated);
        ctx.save_state()?;
        Ok(())
    }

    fn chain(&self, ctx: &RunCtx, page: usize) -> Result<ChainResult, PipelineError> {
        let cfg = &ctx.config;
        let scene: SceneProgram = ctx.dir.load_page(page, PageFile::Scene)?;
        let script: NarrationScript = ctx.dir.load_page(page, PageFile::Script)?;
        let synth: SynthesisResult = ctx.dir.load_page(page, PageFile::AudioMeta)?;
        let aligned = synchronizer::align(&scene, &script, &synth, &cfg.dialect)
            .map_err(|source| PipelineError::Sync { page, source })?;
        let drift = synchronizer::check_sync(&aligned.scene, &synth);
        let (debugged, debug) = debugger::run_debug_loop(
            &self.gateway,
            &aligned.scene,
            self.renderer.as_ref(),
            cfg.retry_threshold,
            &cfg.dialect,
        )
        .map_err(|source| PipelineError::Debug { page, source })?;
        let (laid_out, before, placement) =
            layout::layout_pass(&debugged, &ctx.params(), &cfg.dialect)
                .map_err(|source| PipelineError::Layout { page, source })?;
        let conflicts = layout::detect_conflicts(&laid_out, &cfg.frame, cfg.margin_u);
        Ok(ChainResult {
            scene: laid_out,
            trace: PageTrace {
                sync_warnings: aligned.warnings,
                drift,
                debug,
                conflicts_before_layout: before,
                placement,
                conflicts_after_review: None,
            },
            conflicts,
        })
    }

    /// Synchronize, debug and lay out every page, in parallel.
    pub fn validate(&self, ctx: &mut RunCtx) -> Result<(), PipelineError> {
        if ctx.state.reached(GlobalStage::Validated) {
            return Ok(());
        }
        let todo: Vec<usize> = ctx
            .page_indices()
            .into_iter()
            .filter(|&i| !ctx.state.page_reached(i, PageStage::LaidOut))
            .collect();
        let results = {
            let shared: &RunCtx = ctx;
            fan_out(&todo, shared.workers(todo.len()), |&i| {
                self.chain(shared, i)
            })
        };
        for (&i, r) in todo.iter().zip(results) {
            let r = r?;
            self.commit_chain(ctx, i, &r)?;
            if self.page_hook.as_ref().is_some_and(|h| h(i)) {
                return Err(PipelineError::Halted(i));
            }
        }
        ctx.state.advance(GlobalStage::Validated);
        ctx.save_state()?;
        Ok(())
    }

    fn commit_chain(
        &self,
        ctx: &mut RunCtx,
        i: usize,
        r: &ChainResult,
    ) -> Result<(), PipelineError> {
        ctx.dir.save_page(i, PageFile::Scene, &r.scene)?;
        ctx.dir
            .save_page_text(i, PageFile::SceneScript, &r.scene.source_text)?;
        ctx.dir.save_page(i, PageFile::Trace, &r.trace)?;
        ctx.dir.save_page(i, PageFile::Conflicts, &r.conflicts)?;
        for (stage, name) in [
            (PageStage::Synced, "sync"),
            (PageStage::Debugged, "debug"),
            (PageStage::LaidOut, "layout"),
        ] {
            ctx.state.advance_page(i, stage);
            ctx.state.log(name, Some(i));
        }
        ctx.save_state()?;
        Ok(())
    }

    /// Applies one page's edits and marks it final.
    pub fn finalize_page(
        &self,
        ctx: &mut RunCtx,
        i: usize,
        edits: &EditSet,
    ) -> Result<(), PipelineError> {
        let scene: SceneProgram = ctx.dir.load_page(i, PageFile::Scene)?;
        let (fin, report) =
            layout::apply_human_edits(&scene, edits, &ctx.params(), &ctx.config.dialect)
                .map_err(|source| PipelineError::Edit { page: i, source })?;
        let mut trace: PageTrace = ctx.dir.load_page(i, PageFile::Trace)?;
        trace.conflicts_after_review = Some(report.clone());
        ctx.dir.save_page(i, PageFile::Edits, edits)?;
        ctx.dir.save_page(i, PageFile::Scene, &fin)?;
        ctx.dir
            .save_page_text(i, PageFile::SceneScript, &fin.source_text)?;
        ctx.dir.save_page(i, PageFile::Trace, &trace)?;
        ctx.dir.save_page(i, PageFile::Conflicts, &report)?;
        ctx.state.advance_page(i, PageStage::Final);
        ctx.state.log("review", Some(i));
        ctx.save_state()?;
        Ok(())
    }

    /// Human review gate. Without review every page takes an empty edit
    /// set. With review, approved pages take their posted edits and the run
    /// parks until all pages are approved; returns the pages still pending.
    pub fn review(&self, ctx: &mut RunCtx) -> Result<Option<Vec<usize>>, PipelineError> {
        if ctx.config.review_enabled {
            ctx.state.advance(GlobalStage::AwaitingReview);
            ctx.save_state()?;
        }
        let mut pending = Vec::new();
        for i in ctx.page_indices() {
            if ctx.state.page_reached(i, PageStage::Final) {
                continue;
            }
            if ctx.config.review_enabled && !ctx.state.approved.contains(&i) {
                pending.push(i);
                continue;
            }
            let edits = if ctx.dir.has_page(i, PageFile::Edits) {
                ctx.dir.load_page(i, PageFile::Edits)?
            } else {
                EditSet::empty(i)
            };
            self.finalize_page(ctx, i, &edits)?;
        }
        Ok((!pending.is_empty()).then_some(pending))
    }

    /// Full render of each final page, muxed with its narration.
    pub fn render(&self, ctx: &mut RunCtx) -> Result<(), PipelineError> {
        if ctx.state.reached(GlobalStage::Rendered) {
            return Ok(());
        }
        let todo: Vec<usize> = ctx
            .page_indices()
            .into_iter()
            .filter(|&i| !ctx.state.page_reached(i, PageStage::Rendered))
            .collect();
        let media = ctx.dir.file("media");
        let results = {
            let shared: &RunCtx = ctx;
            fan_out(&todo, shared.workers(todo.len()), |&i| {
                self.render_page(shared, i, &media)
            })
        };
        for (&i, r) in todo.iter().zip(results) {
            let seg = r?;
            ctx.dir.save_page(i, PageFile::Segment, &seg)?;
            ctx.state.advance_page(i, PageStage::Rendered);
            ctx.state.log("render", Some(i));
            ctx.save_state()?;
        }
        ctx.state.advance(GlobalStage::Rendered);
        ctx.save_state()?;
        Ok(())
    }

    pub fn render_page(
        &self,
        ctx: &RunCtx,
        i: usize,
        media: &Path,
    ) -> Result<VideoSegment, PipelineError> {
        let scene: SceneProgram = ctx.dir.load_page(i, PageFile::Scene)?;
        let synth: SynthesisResult = ctx.dir.load_page(i, PageFile::AudioMeta)?;
        let job = RenderJob {
            page_index: i,
            dialect: &ctx.config.dialect,
            source: &scene.source_text,
        };
        let video = self.renderer.render(&job, media)?;
        let audio_ref = synth
            .audio
            .media_ref
            .clone()
            .unwrap_or_else(|| format!("mock://tts/page-{i}"));
        let muxed = self.muxer.mux(i, &video, &audio_ref, media)?;
        Ok(VideoSegment {
            page_index: i,
            video_ref: muxed,
            audio_ref,
            duration_s: synth.audio.duration_s,
        })
    }

    pub fn merge(&self, ctx: &mut RunCtx) -> Result<PipelineOutput, PipelineError> {
        let mut segments = Vec::new();
        let mut audio = Vec::new();
        let mut scripts = Vec::new();
        for i in ctx.page_indices() {
            let synth: SynthesisResult = ctx.dir.load_page(i, PageFile::AudioMeta)?;
            audio.push(synth.audio);
            if ctx.dir.has_page(i, PageFile::Segment) {
                segments.push(ctx.dir.load_page(i, PageFile::Segment)?);
            }
            scripts.push(ctx.dir.load_page::<NarrationScript>(i, PageFile::Script)?);
        }
        let mut video = merge(&segments, &audio)?;
        if video.segments.len() > 1 {
            let refs: Vec<String> = video.segments.iter().map(|s| s.video_ref.clone()).collect();
            video.merged_ref = self.muxer.concat(&refs, &ctx.dir.file("media"))?;
        }
        let output = PipelineOutput {
            video_plan: video,
            lecture_scripts: scripts,
            manuscript: ctx.dir.load("manuscript")?,
        };
        ctx.dir.save("video", &output.video_plan)?;
        ctx.dir.save("output", &output)?;
        ctx.state.log("merge", None);
        ctx.state.advance(GlobalStage::Merged);
        ctx.save_state()?;
        Ok(output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(page: usize, d: f64) -> VideoSegment {
        VideoSegment {
            page_index: page,
            video_ref: format!("v{page}"),
            audio_ref: format!("a{page}"),
            duration_s: d,
        }
    }

    fn audio(page: usize, d: f64) -> AudioAsset {
        AudioAsset {
            page_index: page,
            media_ref: None,
            duration_s: d,
            speaking_rate: 2.0,
        }
    }

    #[test]
    fn merge_sums_durations() {
        let v = merge(
            &[seg(3, 30.0), seg(1, 10.0), seg(2, 20.0)],
            &[audio(1, 10.0), audio(2, 20.0), audio(3, 30.0)],
        )
        .unwrap();
        assert_eq!(v.total_duration_s, 60.0);
        assert_eq!(
            v.segments.iter().map(|s| s.page_index).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn merge_of_one_page_is_that_segment() {
        let v = merge(&[seg(1, 4.0)], &[audio(1, 4.0)]).unwrap();
        assert_eq!(v.merged_ref.as_deref(), Some("v1"));
        assert_eq!(v.total_duration_s, 4.0);
    }

    #[test]
    fn merge_names_missing_page() {
        assert!(matches!(
            merge(&[seg(1, 1.0)], &[audio(1, 1.0), audio(2, 1.0)]),
            Err(MergeError::MissingSegment(2))
        ));
    }

    #[test]
    fn fan_out_keeps_item_order() {
        let items: Vec<u64> = (0..50).collect();
        assert_eq!(
            fan_out(&items, 4, |x| x * 2),
            items.iter().map(|x| x * 2).collect::<Vec<_>>()
        );
        assert!(fan_out(&Vec::<u8>::new(), 4, |x| *x).is_empty());
    }

    #[test]
    fn page_stages_never_regress() {
        let mut s = RunState::new("r");
        s.advance_page(1, PageStage::LaidOut);
        s.advance_page(1, PageStage::Generated);
        assert_eq!(s.page_stage(1), Some(PageStage::LaidOut));
        s.advance(GlobalStage::Validated);
        s.advance(GlobalStage::Planned);
        assert_eq!(s.global_stage, Some(GlobalStage::Validated));
    }
}
