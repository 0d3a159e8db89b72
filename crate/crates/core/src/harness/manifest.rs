//! Task manifests: JSON Lines with a header line followed by one row per clip.
//!
//! ```text
//! {"name":"pitch","role":"eval","metric":"accuracy","classes":["low","mid","high"]}
//! {"clip_id":"a1","clip_path":"clips/a1.wav","label":"low","split":"train","source_tag":"synth"}
//! ```
//!
//! Clip paths are resolved against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::SplitClips;
use crate::error::{Error, Result};
use crate::frontend::wav;
use crate::probes::{TaskMetric, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Whether a manifest is a probing task or a distillation corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManifestRole {
    Eval,
    Distill,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub name: String,
    pub role: ManifestRole,
    #[serde(default)]
    pub metric: TaskMetric,
    #[serde(default)]
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub clip_id: String,
    pub clip_path: PathBuf,
    pub label: String,
    pub split: Split,
    #[serde(default)]
    pub source_tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub rows: Vec<ManifestRow>,
    /// Directory clip paths are relative to.
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn task(&self) -> TaskSpec {
        TaskSpec {
            name: self.header.name.clone(),
            metric: self.header.metric,
            num_classes: self.header.classes.len(),
        }
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.header.classes.iter().position(|c| c == label)
    }

    pub fn rows_in(&self, split: Split) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        self.root.join(&row.clip_path)
    }

    /// Checks the invariants that [`ingest_manifest`] enforces.
    pub fn validate(&self, path: &Path) -> Result<()> {
        let err = |line: usize, message: String| Error::Manifest {
            path: path.to_path_buf(),
            line,
            message,
        };
        let eval = self.header.role == ManifestRole::Eval;
        if eval && self.header.classes.len() < 2 {
            return Err(err(1, "a task needs at least two classes".into()));
        }
        if eval && self.header.metric == TaskMetric::Eer && self.header.classes.len() != 2 {
            return Err(err(1, "eer tasks must be binary".into()));
        }
        let mut seen = HashSet::new();
        for (i, row) in self.rows.iter().enumerate() {
            if !seen.insert(row.clip_id.as_str()) {
                return Err(Error::DuplicateClip(row.clip_id.clone()));
            }
            if eval && self.label_index(&row.label).is_none() {
                return Err(err(i + 2, format!("unknown label {:?}", row.label)));
            }
        }
        if eval {
            for split in Split::ALL {
                if self.rows_in(split).next().is_none() {
                    return Err(Error::MissingSplit(split.name()));
                }
            }
        } else if self.rows.is_empty() {
            return Err(Error::MissingSplit("train"));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut w = std::io::BufWriter::new(fs::File::create(path)?);
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.rows {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads every clip of `split`, checking the sample rate.
    pub fn load_split(&self, split: Split, sample_rate: u32) -> Result<SplitClips> {
        let mut out = SplitClips::default();
        for row in self.rows_in(split) {
            out.ids.push(row.clip_id.clone());
            out.waves.push(wav::read_wav(&self.resolve(row), sample_rate)?);
            out.labels.push(self.label_index(&row.label).unwrap_or(0));
        }
        Ok(out)
    }
}

/// Parses and validates a manifest; every referenced clip must exist and
/// be a readable mono 16-bit WAV.
pub fn ingest_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)?;
    let p = path.to_path_buf();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| Error::Manifest {
        path: p.clone(),
        line: 1,
        message: "empty manifest".into(),
    })?;
    let header: ManifestHeader = serde_json::from_str(first).map_err(|e| Error::Manifest {
        path: p.clone(),
        line: 1,
        message: format!("header: {e}"),
    })?;
    let mut rows = Vec::new();
    for (i, line) in lines {
        let row: ManifestRow = serde_json::from_str(line).map_err(|e| Error::Manifest {
            path: p.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    let manifest = DatasetManifest {
        header,
        rows,
        root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    manifest.validate(path)?;
    for row in &manifest.rows {
        wav::probe_wav(&manifest.resolve(row))?;
    }
    Ok(manifest)
}
