//! Teacher embedding models.
//!
//! The real teacher is a large pretrained network that is not available
//! here, so two deterministic synthetic teachers stand in for it: a seeded
//! random projection of the flattened patch squashed by `tanh`, and the same
//! with one hidden `tanh` layer. A third mode serves embeddings that were
//! computed elsewhere and stored in the embedding cache.

use std::collections::HashMap;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{EmbeddingVector, PatchEmbedder};
use crate::error::{Error, Result};
use crate::frontend::{LogMelFrontend, LogMelPatch, PatchShape, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeacherKind {
    SyntheticLinear,
    SyntheticMlp,
    ExternalPrecomputed,
}

impl std::str::FromStr for TeacherKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic-linear" => Ok(Self::SyntheticLinear),
            "synthetic-mlp" => Ok(Self::SyntheticMlp),
            "external-precomputed" => Ok(Self::ExternalPrecomputed),
            other => Err(Error::Config(format!("unknown teacher kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherSpec {
    pub embedding_dim: usize,
    pub seed: u64,
    pub kind: TeacherKind,
    /// Pre-activation scale of the synthetic projection.
    pub gain: f64,
    /// Log-mel level subtracted before projecting.
    pub input_center: f64,
    /// Embedding-cache stem holding precomputed patch embeddings.
    pub cache: Option<PathBuf>,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            seed: 1234,
            kind: TeacherKind::SyntheticLinear,
            gain: 0.25,
            input_center: -1.0,
            cache: None,
        }
    }
}

impl TeacherSpec {
    pub fn build(&self, shape: PatchShape) -> Result<Box<dyn Teacher>> {
        if self.embedding_dim == 0 {
            return Err(Error::Config("teacher embedding_dim must be >= 1".into()));
        }
        Ok(match self.kind {
            TeacherKind::SyntheticLinear | TeacherKind::SyntheticMlp => {
                Box::new(SyntheticTeacher::new(self, shape)?)
            }
            TeacherKind::ExternalPrecomputed => {
                let stem = self.cache.as_ref().ok_or_else(|| {
                    Error::Config("external-precomputed teacher needs a cache path".into())
                })?;
                Box::new(PrecomputedTeacher::load(stem, self.embedding_dim, shape)?)
            }
        })
    }
}

pub trait Teacher: PatchEmbedder + Send + Sync {
    fn patch_shape(&self) -> PatchShape;
}

fn check_shape(p: &LogMelPatch, shape: PatchShape) -> Result<()> {
    if p.shape != shape || p.values.len() != shape.len() {
        return Err(Error::ShapeMismatch {
            context: "teacher input patch",
            expected: shape.len(),
            actual: p.values.len(),
        });
    }
    Ok(())
}

/// Seeded random-projection teacher.
#[derive(Debug, Clone)]
pub struct SyntheticTeacher {
    shape: PatchShape,
    dim: usize,
    center: f64,
    /// `dim × input_len` row-major, already multiplied by `gain / √input_len`.
    projection: Vec<f32>,
    /// `dim × dim` output layer for the MLP variant, scaled by `1/√dim`.
    output: Option<Vec<f32>>,
}

impl SyntheticTeacher {
    pub fn new(spec: &TeacherSpec, shape: PatchShape) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Config("teacher patch shape is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let n = shape.len();
        let scale = spec.gain / (n as f64).sqrt();
        let projection = (0..spec.embedding_dim * n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (z * scale) as f32
            })
            .collect();
        let output = (spec.kind == TeacherKind::SyntheticMlp).then(|| {
            let s = 2.0 / (spec.embedding_dim as f64).sqrt();
            (0..spec.embedding_dim * spec.embedding_dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (z * s) as f32
                })
                .collect()
        });
        Ok(Self {
            shape,
            dim: spec.embedding_dim,
            center: spec.input_center,
            projection,
            output,
        })
    }

    /// Row `k` of the effective projection (gain already applied).
    pub fn projection_row(&self, k: usize) -> &[f32] {
        let n = self.shape.len();
        &self.projection[k * n..(k + 1) * n]
    }

    pub fn is_mlp(&self) -> bool {
        self.output.is_some()
    }
}

impl PatchEmbedder for SyntheticTeacher {
    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn embed_patch(&self, patch: &LogMelPatch) -> Result<EmbeddingVector> {
        check_shape(patch, self.shape)?;
        let hidden: Vec<f64> = self
            .projection
            .chunks_exact(self.shape.len())
            .map(|row| {
                let pre: f64 = row
                    .iter()
                    .zip(&patch.values)
                    .map(|(&w, &x)| w as f64 * (x as f64 - self.center))
                    .sum();
                pre.tanh()
            })
            .collect();
        let out = match &self.output {
            None => hidden.iter().map(|&h| h as f32).collect(),
            Some(w2) => w2
                .chunks_exact(self.dim)
                .map(|row| {
                    let pre: f64 = row.iter().zip(&hidden).map(|(&w, h)| w as f64 * h).sum();
                    pre.tanh() as f32
                })
                .collect(),
        };
        Ok(EmbeddingVector(out))
    }
}

impl Teacher for SyntheticTeacher {
    fn patch_shape(&self) -> PatchShape {
        self.shape
    }
}

/// Content key of a patch: SHA-256 over its shape and little-endian values.
pub fn patch_key(p: &LogMelPatch) -> String {
    let mut h = Sha256::new();
    h.update((p.shape.frames as u64).to_le_bytes());
    h.update((p.shape.bins as u64).to_le_bytes());
    for v in &p.values {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Teacher embeddings computed offline, looked up by [`patch_key`].
#[derive(Debug, Clone)]
pub struct PrecomputedTeacher {
    shape: PatchShape,
    dim: usize,
    table: HashMap<String, Vec<f32>>,
}

impl PrecomputedTeacher {
    pub fn from_entries(
        shape: PatchShape,
        dim: usize,
        entries: impl IntoIterator<Item = (String, Vec<f32>)>,
    ) -> Result<Self> {
        let mut table = HashMap::new();
        for (key, v) in entries {
            if v.len() != dim {
                return Err(Error::ShapeMismatch {
                    context: "precomputed teacher entry",
                    expected: dim,
                    actual: v.len(),
                });
            }
            table.insert(key, v);
        }
        Ok(Self { shape, dim, table })
    }

    /// Loads a cache file pair written by [`crate::harness::cache`].
    pub fn load(stem: &std::path::Path, dim: usize, shape: PatchShape) -> Result<Self> {
        let file = crate::harness::cache::CacheFile::read(stem)?;
        if file.meta.dims != dim {
            return Err(Error::ShapeMismatch {
                context: "precomputed teacher cache",
                expected: dim,
                actual: file.meta.dims,
            });
        }
        Self::from_entries(shape, dim, file.into_entries())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl PatchEmbedder for PrecomputedTeacher {
    fn embedding_dim(&self) -> usize {
        self.dim
    }

    fn embed_patch(&self, patch: &LogMelPatch) -> Result<EmbeddingVector> {
        check_shape(patch, self.shape)?;
        let key = patch_key(patch);
        self.table
            .get(&key)
            .map(|v| EmbeddingVector(v.clone()))
            .ok_or(Error::CacheMiss(key))
    }
}

impl Teacher for PrecomputedTeacher {
    fn patch_shape(&self) -> PatchShape {
        self.shape
    }
}

pub fn teacher_embed_patch(p: &LogMelPatch, teacher: &dyn Teacher) -> Result<EmbeddingVector> {
    teacher.embed_patch(p)
}

/// Mean teacher embedding over all patches of the clip.
pub fn teacher_embed_clip(
    w: &Waveform,
    teacher: &dyn Teacher,
    frontend: &LogMelFrontend,
    advance_s: f64,
) -> Result<EmbeddingVector> {
    teacher.embed_clip(w, frontend, advance_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::SpectrogramConfig;

    fn small_shape() -> PatchShape {
        PatchShape { frames: 6, bins: 5 }
    }

    fn patch(values: Vec<f32>) -> LogMelPatch {
        LogMelPatch::new(values, small_shape(), 0.0).unwrap()
    }

    fn spec(kind: TeacherKind, seed: u64) -> TeacherSpec {
        TeacherSpec {
            embedding_dim: 8,
            seed,
            kind,
            ..Default::default()
        }
    }

    #[test]
    fn silence_embedding_is_deterministic() {
        let t = spec(TeacherKind::SyntheticLinear, 7).build(small_shape()).unwrap();
        let silent = patch(vec![(1e-6f64).ln() as f32; 30]);
        let a = t.embed_patch(&silent).unwrap();
        let b = t.embed_patch(&silent).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 8);
        let rebuilt = spec(TeacherKind::SyntheticLinear, 7).build(small_shape()).unwrap();
        assert_eq!(rebuilt.embed_patch(&silent).unwrap(), a);
    }

    #[test]
    fn single_cell_change_obeys_lipschitz_bound() {
        let s = spec(TeacherKind::SyntheticLinear, 3);
        let t = SyntheticTeacher::new(&s, small_shape()).unwrap();
        let base: Vec<f32> = (0..30).map(|i| (i as f32 * 0.37).sin() * 3.0 - 6.0).collect();
        let mut bumped = base.clone();
        let delta = 0.8f32;
        bumped[11] += delta;
        let a = t.embed_patch(&patch(base)).unwrap();
        let b = t.embed_patch(&patch(bumped)).unwrap();
        for k in 0..8 {
            let row_norm: f64 = t
                .projection_row(k)
                .iter()
                .map(|&w| (w as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            // tanh has slope at most 1
            let bound = row_norm * delta as f64;
            assert!(((a.0[k] - b.0[k]) as f64).abs() <= bound + 1e-6);
        }
    }

    #[test]
    fn seeds_and_kinds_differ() {
        let p = patch((0..30).map(|i| (i as f32 * 1.3).cos() * 4.0 - 5.0).collect());
        let a = spec(TeacherKind::SyntheticLinear, 1).build(small_shape()).unwrap();
        let b = spec(TeacherKind::SyntheticLinear, 2).build(small_shape()).unwrap();
        let m = spec(TeacherKind::SyntheticMlp, 1).build(small_shape()).unwrap();
        let ea = a.embed_patch(&p).unwrap();
        assert_ne!(ea, b.embed_patch(&p).unwrap());
        let em = m.embed_patch(&p).unwrap();
        assert_ne!(ea, em);
        assert!(em.0.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let t = spec(TeacherKind::SyntheticLinear, 1).build(small_shape()).unwrap();
        let p = LogMelPatch::new(vec![0.0; 12], PatchShape { frames: 3, bins: 4 }, 0.0).unwrap();
        assert!(matches!(t.embed_patch(&p), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn precomputed_lookup_and_miss() {
        let p = patch(vec![0.5; 30]);
        let other = patch(vec![0.25; 30]);
        let t = PrecomputedTeacher::from_entries(
            small_shape(),
            2,
            [(patch_key(&p), vec![1.0, -1.0])],
        )
        .unwrap();
        assert_eq!(t.embed_patch(&p).unwrap().0, vec![1.0, -1.0]);
        assert!(matches!(t.embed_patch(&other), Err(Error::CacheMiss(_))));
    }

    #[test]
    fn external_kind_needs_cache() {
        let s = TeacherSpec {
            kind: TeacherKind::ExternalPrecomputed,
            ..Default::default()
        };
        assert!(matches!(s.build(small_shape()), Err(Error::Config(_))));
    }

    #[test]
    fn clip_embedding_of_one_patch_equals_patch_embedding() {
        let cfg = SpectrogramConfig::default();
        let fe = LogMelFrontend::new(cfg.clone()).unwrap();
        let t = TeacherSpec::default().build(cfg.patch_shape()).unwrap();
        let w = Waveform::new(
            (0..32_000).map(|i| (i as f32 * 0.05).sin() * 0.3).collect(),
            16_000,
        )
        .unwrap();
        let clip = teacher_embed_clip(&w, t.as_ref(), &fe, 1.0).unwrap();
        let single = teacher_embed_patch(&fe.log_mel(&w).unwrap(), t.as_ref()).unwrap();
        assert_eq!(clip, single);
        assert_eq!(clip.dim(), 64);
    }
}
