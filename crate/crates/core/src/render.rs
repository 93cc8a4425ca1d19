//! Renderer and muxer contracts. Scripts are checked (compile only) during
//! debugging and rendered in full once at the end of a run.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use crate::codegen::dialect::{ELEMENT_MARK, MANIM_CE};
use crate::model::{CommandBackend, TEMPLATE_STYLE_KEY};

#[derive(Debug, Clone)]
pub struct RenderJob<'a> {
    pub page_index: usize,
    pub dialect: &'a str,
    pub source: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CheckOutcome {
    Ok,
    Error(String),
}

/// The renderer could not be run at all; says nothing about the script.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("renderer unavailable: {0}")]
pub struct RendererUnavailable(pub String);

#[derive(Debug, thiserror::Error)]
pub enum RenderFailure {
    #[error(transparent)]
    Unavailable(#[from] RendererUnavailable),
    #[error("page {page} failed to render: {trace}")]
    Script { page: usize, trace: String },
}

pub trait Renderer: Send + Sync {
    fn check(&self, job: &RenderJob) -> Result<CheckOutcome, RendererUnavailable>;
    /// Full render into `out_dir`; returns a reference to the produced media.
    fn render(&self, job: &RenderJob, out_dir: &Path) -> Result<String, RenderFailure>;
}

/// Accepts everything and writes nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullRenderer;

impl Renderer for NullRenderer {
    fn check(&self, _job: &RenderJob) -> Result<CheckOutcome, RendererUnavailable> {
        Ok(CheckOutcome::Ok)
    }

    fn render(&self, job: &RenderJob, _out_dir: &Path) -> Result<String, RenderFailure> {
        Ok(format!("mock://render/page-{}", job.page_index))
    }
}

/// Kinds the template library replaces; templated elements always render.
pub fn is_complex_kind(kind: &str) -> bool {
    matches!(kind, "formula" | "shape" | "image_placeholder")
}

/// First line (1-based) constructing a complex element that is not a
/// template, in either dialect.
pub fn first_complex_line(source: &str) -> Option<usize> {
    if let Ok(doc) = serde_json::from_str::<serde_json::Value>(source) {
        let els = doc.get("elements")?.as_array()?;
        let id = els.iter().find_map(|e| {
            let kind = e.get("kind")?.as_str()?;
            let templated = e
                .get("style")
                .and_then(|s| s.get(TEMPLATE_STYLE_KEY))
                .is_some();
            (is_complex_kind(kind) && !templated).then(|| e.get("id")?.as_str())?
        })?;
        let needle = format!("\"id\": {}", serde_json::Value::from(id));
        return source
            .lines()
            .position(|l| l.contains(&needle))
            .map(|i| i + 1);
    }
    source
        .lines()
        .position(|line| {
            line.find(ELEMENT_MARK).is_some_and(|pos| {
                let tail = &line[pos..];
                let kind = tail
                    .split_whitespace()
                    .find_map(|w| w.strip_prefix("kind="));
                kind.is_some_and(is_complex_kind) && !tail.contains(" template=")
            })
        })
        .map(|i| i + 1)
}

/// Fault injection for tests: the first `failures` checks of a script that
/// still holds a complex, non-template element fail with a trace pointing at
/// that element's line. Templated scripts always pass.
#[derive(Debug)]
pub struct ScriptedRenderer {
    remaining: AtomicUsize,
    calls: AtomicUsize,
    unavailable_first: AtomicUsize,
}

impl ScriptedRenderer {
    pub fn failing(failures: usize) -> Self {
        ScriptedRenderer {
            remaining: AtomicUsize::new(failures),
            calls: AtomicUsize::new(0),
            unavailable_first: AtomicUsize::new(0),
        }
    }

    /// The first `n` calls report the renderer as unreachable.
    pub fn with_outages(self, n: usize) -> Self {
        self.unavailable_first.store(n, Ordering::SeqCst);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Renderer for ScriptedRenderer {
    fn check(&self, job: &RenderJob) -> Result<CheckOutcome, RendererUnavailable> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if self
            .unavailable_first
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(RendererUnavailable("scripted outage".into()));
        }
        let Some(line) = first_complex_line(job.source) else {
            return Ok(CheckOutcome::Ok);
        };
        match self.remaining.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)) {
            Ok(_) => Ok(CheckOutcome::Error(format!(
                "Traceback (most recent call last):\n  File \"scene.py\", line {line}, in construct\nValueError: scripted failure"
            ))),
            Err(_) => Ok(CheckOutcome::Ok),
        }
    }

    fn render(&self, job: &RenderJob, out_dir: &Path) -> Result<String, RenderFailure> {
        NullRenderer.render(job, out_dir)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandResult {
    pub status: Option<i32>,
    pub stderr: String,
    pub timed_out: bool,
}

/// Runs `argv` in `cwd` with a wall-clock limit, capturing stderr.
pub fn run_command(
    argv: &[String],
    cwd: &Path,
    timeout: Duration,
) -> Result<CommandResult, RendererUnavailable> {
    let (prog, args) = argv
        .split_first()
        .ok_or_else(|| RendererUnavailable("empty command".into()))?;
    let mut child = Command::new(prog)
        .args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| RendererUnavailable(format!("cannot start {prog}: {e}")))?;
    let mut stderr = child.stderr.take().expect("piped stderr");
    let reader = std::thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr.read_to_string(&mut buf);
        buf
    });
    let started = Instant::now();
    let (status, timed_out) = loop {
        match child.try_wait() {
            Ok(Some(st)) => break (st.code(), false),
            Ok(None) if started.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                break (None, true);
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(10)),
            Err(e) => return Err(RendererUnavailable(format!("waiting on {prog}: {e}"))),
        }
    };
    let stderr = reader.join().unwrap_or_default();
    Ok(CommandResult {
        status,
        stderr,
        timed_out,
    })
}

/// Substitutes `{name}` placeholders in every argument.
pub fn fill_command(template: &[String], vars: &[(&str, &str)]) -> Vec<String> {
    template
        .iter()
        .map(|arg| {
            vars.iter().fold(arg.clone(), |acc, (k, v)| {
                acc.replace(&format!("{{{k}}}"), v)
            })
        })
        .collect()
}

/// A user-configured command. The backend's `check_command` (or `command`
/// when unset) runs in check mode, `command` in full mode. The source is
/// written to `<work_dir>/page_<i>.<ext>` before each call.
#[derive(Debug, Clone)]
pub struct ExternalRenderer {
    pub backend: CommandBackend,
    pub work_dir: PathBuf,
}

impl ExternalRenderer {
    fn write_source(&self, job: &RenderJob) -> Result<PathBuf, RendererUnavailable> {
        std::fs::create_dir_all(&self.work_dir).map_err(|e| RendererUnavailable(e.to_string()))?;
        let ext = if job.dialect == MANIM_CE {
            "py"
        } else {
            "json"
        };
        let path = self.work_dir.join(format!("page_{}.{ext}", job.page_index));
        std::fs::write(&path, job.source).map_err(|e| RendererUnavailable(e.to_string()))?;
        Ok(path)
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.backend.timeout_s.max(0.001))
    }
}

impl Renderer for ExternalRenderer {
    fn check(&self, job: &RenderJob) -> Result<CheckOutcome, RendererUnavailable> {
        let src = self.write_source(job)?;
        let cmd = if self.backend.check_command.is_empty() {
            &self.backend.command
        } else {
            &self.backend.check_command
        };
        let argv = fill_command(cmd, &[("source", &src.to_string_lossy()), ("output", "")]);
        let r = run_command(&argv, &self.work_dir, self.timeout())?;
        Ok(match (r.timed_out, r.status) {
            (true, _) => {
                CheckOutcome::Error(format!("timed out after {} s", self.backend.timeout_s))
            }
            (false, Some(0)) => CheckOutcome::Ok,
            (false, _) => CheckOutcome::Error(r.stderr),
        })
    }

    fn render(&self, job: &RenderJob, out_dir: &Path) -> Result<String, RenderFailure> {
        let src = self.write_source(job)?;
        std::fs::create_dir_all(out_dir).map_err(|e| RendererUnavailable(e.to_string()))?;
        let out = out_dir.join(format!("page_{}.mp4", job.page_index));
        let argv = fill_command(
            &self.backend.command,
            &[
                ("source", &src.to_string_lossy()),
                ("output", &out.to_string_lossy()),
            ],
        );
        let r = run_command(&argv, &self.work_dir, self.timeout())?;
        if r.timed_out || r.status != Some(0) {
            return Err(RenderFailure::Script {
                page: job.page_index,
                trace: if r.timed_out {
                    "timed out".into()
                } else {
                    r.stderr
                },
            });
        }
        Ok(out.to_string_lossy().into_owned())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MuxError {
    #[error(transparent)]
    Unavailable(#[from] RendererUnavailable),
    #[error("mux of page {page} failed: {stderr}")]
    Failed { page: usize, stderr: String },
}

/// Combines one rendered segment with its narration audio.
pub trait Muxer: Send + Sync {
    fn mux(
        &self,
        page_index: usize,
        video_ref: &str,
        audio_ref: &str,
        out_dir: &Path,
    ) -> Result<String, MuxError>;
    /// Joins muxed segments in the given order; `None` when the backend
    /// has no way to concatenate.
    fn concat(&self, segment_refs: &[String], out_dir: &Path) -> Result<Option<String>, MuxError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NullMuxer;

impl Muxer for NullMuxer {
    fn mux(
        &self,
        page_index: usize,
        _video: &str,
        _audio: &str,
        _out: &Path,
    ) -> Result<String, MuxError> {
        Ok(format!("mock://mux/page-{page_index}"))
    }

    fn concat(&self, _segments: &[String], _out: &Path) -> Result<Option<String>, MuxError> {
        Ok(Some("mock://merged".into()))
    }
}

#[derive(Debug, Clone)]
pub struct ExternalMuxer {
    pub backend: CommandBackend,
    pub work_dir: PathBuf,
}

impl Muxer for ExternalMuxer {
    fn mux(
        &self,
        page_index: usize,
        video_ref: &str,
        audio_ref: &str,
        out_dir: &Path,
    ) -> Result<String, MuxError> {
        std::fs::create_dir_all(out_dir).map_err(|e| RendererUnavailable(e.to_string()))?;
        let out = out_dir.join(format!("segment_{page_index}.mp4"));
        let argv = fill_command(
            &self.backend.command,
            &[
                ("source", video_ref),
                ("audio", audio_ref),
                ("output", &out.to_string_lossy()),
            ],
        );
        let r = run_command(
            &argv,
            &self.work_dir,
            Duration::from_secs_f64(self.backend.timeout_s.max(0.001)),
        )?;
        if r.timed_out || r.status != Some(0) {
            return Err(MuxError::Failed {
                page: page_index,
                stderr: r.stderr,
            });
        }
        Ok(out.to_string_lossy().into_owned())
    }

    fn concat(&self, segment_refs: &[String], out_dir: &Path) -> Result<Option<String>, MuxError> {
        if self.backend.concat_command.is_empty() {
            return Ok(None);
        }
        std::fs::create_dir_all(out_dir).map_err(|e| RendererUnavailable(e.to_string()))?;
        let list = out_dir.join("segments.txt");
        let body: String = segment_refs
            .iter()
            .map(|r| format!("file '{r}'\n"))
            .collect();
        std::fs::write(&list, body).map_err(|e| RendererUnavailable(e.to_string()))?;
        let out = out_dir.join("lecture.mp4");
        let argv = fill_command(
            &self.backend.concat_command,
            &[
                ("list", &list.to_string_lossy()),
                ("output", &out.to_string_lossy()),
            ],
        );
        let r = run_command(
            &argv,
            &self.work_dir,
            Duration::from_secs_f64(self.backend.timeout_s.max(0.001)),
        )?;
        if r.timed_out || r.status != Some(0) {
            return Err(MuxError::Failed {
                page: 0,
                stderr: r.stderr,
            });
        }
        Ok(Some(out.to_string_lossy().into_owned()))
    }
}
