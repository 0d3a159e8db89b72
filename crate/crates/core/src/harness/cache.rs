//! Embedding cache: one `<stem>.f32` file of row-major little-endian f32
//! vectors plus a `<stem>.json` sidecar naming the rows.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::frontend::SpectrogramConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheMeta {
    pub model_id: String,
    pub task: String,
    pub dims: usize,
    pub clip_ids: Vec<String>,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheFile {
    pub meta: CacheMeta,
    data: Vec<f32>,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// `<dir>/<model>__<task>` cache stem.
pub fn cache_stem(dir: &Path, model_id: &str, task: &str) -> PathBuf {
    dir.join(format!("{model_id}__{task}"))
}

/// SHA-256 over the frontend config, the frame advance and the model bytes.
pub fn fingerprint(cfg: &SpectrogramConfig, advance_s: f64, model_bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(advance_s.to_le_bytes());
    h.update((model_bytes.len() as u64).to_le_bytes());
    h.update(model_bytes);
    hex::encode(h.finalize())
}

impl CacheFile {
    pub fn new(meta: CacheMeta, vectors: &[EmbeddingVector]) -> Result<Self> {
        if vectors.len() != meta.clip_ids.len() {
            return Err(Error::ShapeMismatch {
                context: "cache rows vs clip_ids",
                expected: meta.clip_ids.len(),
                actual: vectors.len(),
            });
        }
        let mut data = Vec::with_capacity(vectors.len() * meta.dims);
        for v in vectors {
            if v.dim() != meta.dims {
                return Err(Error::ShapeMismatch {
                    context: "cache row",
                    expected: meta.dims,
                    actual: v.dim(),
                });
            }
            data.extend_from_slice(v.as_slice());
        }
        Ok(Self { meta, data })
    }

    pub fn write(&self, stem: &Path) -> Result<()> {
        if let Some(dir) = stem.parent() {
            fs::create_dir_all(dir)?;
        }
        let bytes: Vec<u8> = self.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(with_ext(stem, "f32"), bytes)?;
        fs::write(with_ext(stem, "json"), serde_json::to_vec_pretty(&self.meta)?)?;
        Ok(())
    }

    pub fn read(stem: &Path) -> Result<Self> {
        let meta_path = with_ext(stem, "json");
        if !meta_path.exists() {
            return Err(Error::CacheMiss(stem.display().to_string()));
        }
        let meta: CacheMeta = serde_json::from_slice(&fs::read(&meta_path)?)?;
        let bytes = fs::read(with_ext(stem, "f32"))?;
        let expected = meta.dims * meta.clip_ids.len() * 4;
        if bytes.len() != expected {
            return Err(Error::ShapeMismatch {
                context: "cache payload bytes",
                expected,
                actual: bytes.len(),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self { meta, data })
    }

    /// Reads the cache only when its fingerprint matches; a stale or absent
    /// file yields `None`.
    pub fn read_valid(stem: &Path, fingerprint: &str) -> Result<Option<Self>> {
        match Self::read(stem) {
            Ok(f) if f.meta.fingerprint == fingerprint => Ok(Some(f)),
            Ok(_) | Err(Error::CacheMiss(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn len(&self) -> usize {
        self.meta.clip_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.clip_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.meta.dims..(i + 1) * self.meta.dims]
    }

    pub fn get(&self, clip_id: &str) -> Option<EmbeddingVector> {
        let i = self.meta.clip_ids.iter().position(|c| c == clip_id)?;
        Some(EmbeddingVector(self.row(i).to_vec()))
    }

    pub fn vectors(&self) -> Vec<EmbeddingVector> {
        (0..self.len()).map(|i| EmbeddingVector(self.row(i).to_vec())).collect()
    }

    pub fn into_entries(self) -> Vec<(String, Vec<f32>)> {
        let dims = self.meta.dims;
        self.meta
            .clip_ids
            .into_iter()
            .zip(self.data.chunks(dims.max(1)).map(|c| c.to_vec()))
            .collect()
    }
}
