use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One clip: mono audio plus optional direction sources and caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipEntry {
    pub id: String,
    pub audio: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
}

/// A JSON array of clips. Relative paths resolve against `base_dir`, the
/// directory holding the manifest file.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipManifest {
    pub entries: Vec<ClipEntry>,
    pub base_dir: PathBuf,
}

impl ClipManifest {
    pub fn new(entries: Vec<ClipEntry>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.id.is_empty() {
                return Err(Error::InvalidArgument("clip ids must be non-empty".into()));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self {
            entries,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<ClipEntry> = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(entries, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    /// Entries with every path made absolute, so the manifest can be written
    /// anywhere.
    pub fn absolute_entries(&self) -> Result<Vec<ClipEntry>> {
        let abs = |p: &Path| std::path::absolute(self.resolve(p)).map_err(|e| Error::io(p, e));
        self.entries
            .iter()
            .map(|e| {
                Ok(ClipEntry {
                    id: e.id.clone(),
                    audio: abs(&e.audio)?,
                    heatmap: e.heatmap.as_deref().map(abs).transpose()?,
                    trajectory: e.trajectory.as_deref().map(abs).transpose()?,
                    caption: e.caption.clone(),
                })
            })
            .collect()
    }

    /// Writes the entries, with absolute paths, as pretty JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(&self.absolute_entries()?).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
