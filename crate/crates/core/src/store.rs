//! On-disk project layout and crash-safe writes.
//!
//! ```text
//! <project>/<run-id>/
//!   config  outline  skeleton  manuscript  segments  state  video
//!   pages/<i>/blueprint scene scene_script script audio-meta conflicts trace edits
//! ```

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::canon;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Corrupt {
        path: PathBuf,
        #[source]
        source: canon::CanonError,
    },
    #[error("encoding {path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: canon::CanonError,
    },
}

impl StoreError {
    pub fn path(&self) -> &Path {
        match self {
            StoreError::Io { path, .. }
            | StoreError::Corrupt { path, .. }
            | StoreError::Encode { path, .. } => path,
        }
    }
}

/// Writes through a sibling temp file and renames it into place, so readers
/// see either the old bytes or the new ones.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("artifact");
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PageFile {
    Blueprint,
    Scene,
    SceneScript,
    Script,
    AudioMeta,
    Conflicts,
    Trace,
    Edits,
    Segment,
}

impl PageFile {
    pub fn file_name(&self) -> &'static str {
        match self {
            PageFile::Blueprint => "blueprint",
            PageFile::Scene => "scene",
            PageFile::SceneScript => "scene_script",
            PageFile::Script => "script",
            PageFile::AudioMeta => "audio-meta",
            PageFile::Conflicts => "conflicts",
            PageFile::Trace => "trace",
            PageFile::Edits => "edits",
            PageFile::Segment => "segment",
        }
    }
}

/// Paths of one run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(project: impl AsRef<Path>, run_id: &str) -> Self {
        RunDir {
            root: project.as_ref().join(run_id),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn page_dir(&self, page: usize) -> PathBuf {
        self.root.join("pages").join(page.to_string())
    }

    pub fn page_file(&self, page: usize, f: PageFile) -> PathBuf {
        self.page_dir(page).join(f.file_name())
    }

    pub fn exists(&self, name: &str) -> bool {
        self.file(name).exists()
    }

    pub fn save<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), StoreError> {
        save_to(&self.file(name), value)
    }

    pub fn load<T: DeserializeOwned>(&self, name: &str) -> Result<T, StoreError> {
        load_from(&self.file(name))
    }

    pub fn save_page<T: Serialize + ?Sized>(
        &self,
        page: usize,
        f: PageFile,
        value: &T,
    ) -> Result<(), StoreError> {
        save_to(&self.page_file(page, f), value)
    }

    pub fn load_page<T: DeserializeOwned>(
        &self,
        page: usize,
        f: PageFile,
    ) -> Result<T, StoreError> {
        load_from(&self.page_file(page, f))
    }

    pub fn save_page_text(&self, page: usize, f: PageFile, text: &str) -> Result<(), StoreError> {
        let path = self.page_file(page, f);
        write_atomic(&path, text.as_bytes()).map_err(|source| StoreError::Io { path, source })
    }

    pub fn has_page(&self, page: usize, f: PageFile) -> bool {
        self.page_file(page, f).exists()
    }
}

pub fn save_to<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), StoreError> {
    let bytes = canon::to_bytes(value).map_err(|source| StoreError::Encode {
        path: path.to_path_buf(),
        source,
    })?;
    write_atomic(path, &bytes).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_from<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    canon::from_slice(&bytes).map_err(|source| StoreError::Corrupt {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/b/c");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        let names: Vec<_> = fs::read_dir(p.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn corrupt_file_error_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::new(dir.path(), "r1");
        run.save_page_text(2, PageFile::Scene, "{\"page_index\": 2,")
            .unwrap();
        let err = run
            .load_page::<crate::model::SceneProgram>(2, PageFile::Scene)
            .unwrap_err();
        assert!(err.path().ends_with("pages/2/scene"));
        assert!(matches!(err, StoreError::Corrupt { .. }));
    }
}
