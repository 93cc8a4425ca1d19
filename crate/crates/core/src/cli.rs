//! Command-line front end. Exit codes: 0 success, 1 usage, 2 runtime
//! error, 3 fixture miss.

use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::canon;
use crate::gateway::{FixtureStore, Gateway, HttpLlmTransport, HttpTtsTransport, Service};
use crate::layout;
use crate::mock::MockLlm;
use crate::model::{LectureOutline, PipelineConfig, SceneProgram};
use crate::pipeline::{
    muxer_from_config, renderer_from_config, GlobalStage, PageStage, Pipeline, PipelineError,
    RunCtx, RunOutcome, RunState,
};
use crate::review::{self, ReviewService};
use crate::store::PageFile;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_FIXTURE_MISS: i32 = 3;

/// Set to a page index to make `generate` exit abruptly right after that
/// page's layout is persisted.
pub const HALT_ENV: &str = "LECTERN_HALT_AFTER_PAGE";

#[derive(Debug, Parser)]
#[command(
    name = "lectern",
    version,
    about = "Compile a lecture outline into narrated, laid-out animation pages"
)]
pub struct Cli {
    /// Project directory holding run directories.
    #[arg(long, global = true, default_value = "project")]
    pub project: PathBuf,
    /// Answer LLM requests with the built-in deterministic mock.
    #[arg(long, global = true)]
    pub mock: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub target_duration: Option<f64>,
    #[arg(long)]
    pub dialect: Option<String>,
    /// Park the run for human review before the final render.
    #[arg(long)]
    pub review: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct FixtureArgs {
    /// Answer every service call from recorded fixtures; no network.
    #[arg(long, conflicts_with = "record")]
    pub replay: Option<PathBuf>,
    /// Record every service answer under this directory.
    #[arg(long)]
    pub record: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Run id; may be omitted when the project holds exactly one run.
    #[arg(long)]
    pub run: Option<String>,
    #[command(flatten)]
    pub fixtures: FixtureArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full run from an outline.
    Generate {
        #[arg(long)]
        outline: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        fixtures: FixtureArgs,
    },
    /// Continue an interrupted run.
    Resume {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compose the manuscript; creates the run when given an outline.
    Plan {
        #[arg(long)]
        outline: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Split the manuscript into page blueprints.
    Paginate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Bring the run up to page `i`'s final scene and render that page.
    RenderPage {
        #[arg(long)]
        page: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print a page's stage and layout conflicts.
    Inspect {
        #[arg(long)]
        page: usize,
        #[arg(long)]
        run: Option<String>,
    },
    /// Serve the review API for a run.
    Serve {
        #[arg(long)]
        run: Option<String>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[command(flatten)]
        fixtures: FixtureArgs,
    },
    /// Manage recorded service answers.
    Fixtures {
        #[command(subcommand)]
        action: FixturesCmd,
    },
}

#[derive(Debug, Subcommand)]
pub enum FixturesCmd {
    /// Run the outline in a scratch project, recording every answer.
    Record {
        #[arg(long)]
        outline: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Replay the outline in a scratch project; fails on any miss.
    Verify {
        #[arg(long)]
        outline: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Pipeline(e) if e.is_fixture_miss() => EXIT_FIXTURE_MISS,
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

fn read_input<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    canon::from_slice(&bytes).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(args: &ConfigArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => read_input(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = args.parallelism {
        cfg.parallelism = p;
    }
    if let Some(t) = args.target_duration {
        cfg.target_duration_s = t;
    }
    if let Some(d) = &args.dialect {
        cfg.dialect = d.clone();
    }
    if args.review {
        cfg.review_enabled = true;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn build_gateway(seed: u64, fixtures: &FixtureArgs, mock: bool) -> Gateway {
    let store = match (&fixtures.replay, &fixtures.record) {
        (Some(dir), _) => FixtureStore::replay(dir),
        (None, Some(dir)) => FixtureStore::record(dir),
        (None, None) => FixtureStore::passthrough(),
    };
    let mut gw = Gateway::new(store, seed);
    if mock {
        gw = gw.with_transport(Service::Llm, Arc::new(MockLlm));
    } else if let Some(t) = HttpLlmTransport::from_env() {
        gw = gw.with_transport(Service::Llm, Arc::new(t));
    }
    if let Some(t) = HttpTtsTransport::from_env() {
        gw = gw.with_transport(Service::Tts, Arc::new(t));
    }
    gw
}

fn build_pipeline(
    project: &Path,
    cfg: &PipelineConfig,
    gw: Gateway,
    run_root: &Path,
) -> Result<Pipeline, CliError> {
    let media = run_root.join("media");
    Ok(Pipeline::new(project, gw)
        .with_renderer(renderer_from_config(cfg, &media)?)
        .with_muxer(muxer_from_config(cfg, &media)?))
}

fn halt_hook() -> Option<crate::pipeline::PageHook> {
    let page: usize = std::env::var(HALT_ENV).ok()?.parse().ok()?;
    Some(Arc::new(move |i| {
        if i == page {
            eprintln!("halting after page {i} ({HALT_ENV})");
            std::process::exit(137);
        }
        false
    }))
}

/// The named run, or the only run in the project.
fn resolve_run(project: &Path, run: Option<&str>) -> Result<String, CliError> {
    if let Some(r) = run {
        return Ok(r.to_string());
    }
    let mut found = Vec::new();
    if let Ok(entries) = std::fs::read_dir(project) {
        for e in entries.flatten() {
            if e.path().join("state").is_file() {
                found.push(e.file_name().to_string_lossy().into_owned());
            }
        }
    }
    found.sort();
    match found.len() {
        1 => Ok(found.remove(0)),
        0 => Err(CliError::Runtime(format!(
            "no runs in {}",
            project.display()
        ))),
        _ => Err(CliError::Usage(format!(
            "several runs in {}; pass --run ({})",
            project.display(),
            found.join(", ")
        ))),
    }
}

fn stored_config(project: &Path, run_id: &str) -> Result<PipelineConfig, CliError> {
    let path = project.join(run_id).join("config");
    if !path.is_file() {
        return Err(PipelineError::UnknownRun(run_id.to_string()).into());
    }
    read_input(&path)
}

/// Pipeline plus opened run for an existing run id.
fn open_run(cli: &Cli, run: &RunArgs) -> Result<(Pipeline, RunCtx), CliError> {
    let run_id = resolve_run(&cli.project, run.run.as_deref())?;
    let cfg = stored_config(&cli.project, &run_id)?;
    let gw = build_gateway(cfg.seed, &run.fixtures, cli.mock);
    let p = build_pipeline(&cli.project, &cfg, gw, &cli.project.join(&run_id))?;
    let ctx = p.open(&run_id)?;
    Ok((p, ctx))
}

fn report(outcome: &RunOutcome, run_id: &str, out: &mut dyn std::io::Write) {
    match outcome {
        RunOutcome::Complete(o) => {
            let _ = writeln!(
                out,
                "run {run_id}: {} pages, {:.3} s",
                o.video_plan.segments.len(),
                o.video_plan.total_duration_s
            );
        }
        RunOutcome::AwaitingReview { pending, .. } => {
            let _ = writeln!(out, "run {run_id}: awaiting review of pages {pending:?}; start `lectern serve --run {run_id}`");
        }
    }
}

fn scratch_dir(tag: &str) -> PathBuf {
    std::env::temp_dir().join(format!("lectern-{tag}-{}", std::process::id()))
}

fn fixtures_run(
    cli: &Cli,
    outline: &Path,
    config: &ConfigArgs,
    fixtures: FixtureArgs,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let o: LectureOutline = read_input(outline)?;
    let cfg = resolve_config(config)?;
    let project = scratch_dir("fixtures");
    let _ = std::fs::remove_dir_all(&project);
    let verify = fixtures.replay.is_some();
    let gw = build_gateway(cfg.seed, &fixtures, cli.mock);
    let p = build_pipeline(
        &project,
        &cfg,
        gw,
        &project.join(crate::pipeline::run_id_for(&o, &cfg)),
    )?;
    let result = p.run(&o, &cfg);
    let calls = p.gateway.transport_calls();
    drop(p);
    let _ = std::fs::remove_dir_all(&project);
    let outcome = result?;
    if verify {
        let _ = writeln!(
            out,
            "fixtures complete: replay finished with {calls} network calls"
        );
    } else {
        let _ = writeln!(out, "recorded {calls} service answers");
    }
    if let RunOutcome::AwaitingReview { .. } = outcome {
        let _ = writeln!(out, "(stopped at the review gate)");
    }
    Ok(())
}

fn execute(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate {
            outline,
            config,
            fixtures,
        } => {
            let o: LectureOutline = read_input(outline)?;
            let cfg = resolve_config(config)?;
            let run_id = crate::pipeline::run_id_for(&o, &cfg);
            let gw = build_gateway(cfg.seed, fixtures, cli.mock);
            let mut p = build_pipeline(&cli.project, &cfg, gw, &cli.project.join(&run_id))?;
            if let Some(h) = halt_hook() {
                p = p.with_page_hook(h);
            }
            let mut ctx = p.create(&o, &cfg)?;
            if ctx.state.reached(GlobalStage::Merged) {
                let _ = writeln!(out, "run {run_id} already complete; nothing to do");
            }
            let outcome = p.drive(&mut ctx)?;
            report(&outcome, &run_id, out);
        }
        Command::Resume { run } => {
            let (mut p, mut ctx) = open_run(cli, run)?;
            if let Some(h) = halt_hook() {
                p = p.with_page_hook(h);
            }
            let run_id = ctx.run_id().to_string();
            let outcome = p.drive(&mut ctx)?;
            report(&outcome, &run_id, out);
        }
        Command::Plan {
            outline,
            config,
            run,
        } => {
            let (p, mut ctx) = match outline {
                Some(path) => {
                    let o: LectureOutline = read_input(path)?;
                    let cfg = resolve_config(config)?;
                    let run_id = crate::pipeline::run_id_for(&o, &cfg);
                    let gw = build_gateway(cfg.seed, &run.fixtures, cli.mock);
                    let p = build_pipeline(&cli.project, &cfg, gw, &cli.project.join(&run_id))?;
                    let ctx = p.create(&o, &cfg)?;
                    (p, ctx)
                }
                None => open_run(cli, run)?,
            };
            if ctx.state.reached(GlobalStage::Planned) {
                let _ = writeln!(
                    out,
                    "run {}: manuscript already planned; nothing to do",
                    ctx.run_id()
                );
            } else {
                let m = p.plan(&mut ctx)?;
                let _ = writeln!(
                    out,
                    "run {}: manuscript with {} sections, {} words",
                    ctx.run_id(),
                    m.sections.len(),
                    m.word_count
                );
            }
        }
        Command::Paginate { run } => {
            let (p, mut ctx) = open_run(cli, run)?;
            if ctx.state.reached(GlobalStage::Paginated) {
                let _ = writeln!(
                    out,
                    "run {}: already paginated; nothing to do",
                    ctx.run_id()
                );
            } else {
                p.plan(&mut ctx)?;
                let pages = p.paginate(&mut ctx)?;
                let _ = writeln!(out, "run {}: {} pages", ctx.run_id(), pages.len());
            }
        }
        Command::RenderPage { page, run } => {
            let (p, mut ctx) = open_run(cli, run)?;
            let i = *page;
            if ctx.state.page_reached(i, PageStage::Rendered) {
                let _ = writeln!(out, "page {i} already rendered; nothing to do");
                return Ok(());
            }
            p.plan(&mut ctx)?;
            p.paginate(&mut ctx)?;
            if ctx.state.page_stage(i).is_none() {
                return Err(CliError::Usage(format!(
                    "run {} has no page {i}",
                    ctx.run_id()
                )));
            }
            p.generate(&mut ctx)?;
            p.validate(&mut ctx)?;
            p.review(&mut ctx)?;
            if !ctx.state.page_reached(i, PageStage::Final) {
                return Err(CliError::Runtime(format!(
                    "page {i} awaits review approval"
                )));
            }
            let seg = p.render_page(&ctx, i, &ctx.dir.file("media"))?;
            ctx.dir
                .save_page(i, PageFile::Segment, &seg)
                .map_err(PipelineError::from)?;
            ctx.state.advance_page(i, PageStage::Rendered);
            ctx.state.log("render", Some(i));
            ctx.dir
                .save("state", &ctx.state)
                .map_err(PipelineError::from)?;
            let _ = writeln!(out, "page {i}: {} ({:.3} s)", seg.video_ref, seg.duration_s);
        }
        Command::Inspect { page, run } => {
            let run_id = resolve_run(&cli.project, run.as_deref())?;
            let cfg = stored_config(&cli.project, &run_id)?;
            let dir = crate::store::RunDir::new(&cli.project, &run_id);
            let state: RunState = dir.load("state").map_err(PipelineError::from)?;
            let i = *page;
            let stage = state
                .page_stage(i)
                .ok_or_else(|| CliError::Usage(format!("run {run_id} has no page {i}")))?;
            let _ = writeln!(
                out,
                "page {i}: stage {}",
                canon::to_tree(&stage)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default()
            );
            if !dir.has_page(i, PageFile::Scene) {
                let _ = writeln!(out, "no scene yet");
                return Ok(());
            }
            let scene: SceneProgram = dir
                .load_page(i, PageFile::Scene)
                .map_err(PipelineError::from)?;
            let rep = layout::detect_conflicts(&scene, &cfg.frame, cfg.margin_u);
            for o in &rep.overlaps {
                let _ = writeln!(out, "overlap {} {} area={:.4}", o.a, o.b, o.overlap_area_u2);
            }
            for o in &rep.overflows {
                let edges: Vec<String> = o
                    .violated_edges
                    .iter()
                    .filter_map(|e| {
                        canon::to_tree(e)
                            .ok()
                            .and_then(|v| v.as_str().map(String::from))
                    })
                    .collect();
                let _ = writeln!(
                    out,
                    "overflow {} edges={} excess={:.4}",
                    o.element_id,
                    edges.join(","),
                    o.excess_u
                );
            }
            if rep.is_empty() {
                let _ = writeln!(out, "no conflicts");
            }
        }
        Command::Serve {
            run,
            port,
            fixtures,
        } => {
            let run_id = resolve_run(&cli.project, run.as_deref())?;
            let cfg = stored_config(&cli.project, &run_id)?;
            let gw = build_gateway(cfg.seed, fixtures, cli.mock);
            let p = build_pipeline(&cli.project, &cfg, gw, &cli.project.join(&run_id))?;
            let svc = ReviewService::open(p, &run_id)?;
            let _ = writeln!(out, "serving run {run_id} on http://127.0.0.1:{port}");
            review::serve(&svc, *port).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        Command::Fixtures { action } => match action {
            FixturesCmd::Record {
                outline,
                config,
                dir,
            } => {
                let f = FixtureArgs {
                    replay: None,
                    record: Some(dir.clone()),
                };
                fixtures_run(cli, outline, config, f, out)?;
            }
            FixturesCmd::Verify {
                outline,
                config,
                dir,
            } => {
                let f = FixtureArgs {
                    replay: Some(dir.clone()),
                    record: None,
                };
                fixtures_run(cli, outline, config, f, out)?;
            }
        },
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// writing normal output to `out`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
