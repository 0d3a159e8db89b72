use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{LogMelFrontend, LogMelPatch, Waveform};

/// A fixed-length embedding from the teacher or a student.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f32>);

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Unweighted coordinate-wise mean, accumulated in f64.
    pub fn mean_of(items: &[EmbeddingVector]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot average zero embeddings".into()))?;
        let dim = first.dim();
        let mut acc = vec![0.0f64; dim];
        for e in items {
            if e.dim() != dim {
                return Err(Error::ShapeMismatch {
                    context: "embedding mean",
                    expected: dim,
                    actual: e.dim(),
                });
            }
            for (a, v) in acc.iter_mut().zip(&e.0) {
                *a += *v as f64;
            }
        }
        let n = items.len() as f64;
        Ok(Self(acc.into_iter().map(|a| (a / n) as f32).collect()))
    }
}

/// Anything that maps one log-mel patch to one embedding.
pub trait PatchEmbedder {
    fn embedding_dim(&self) -> usize;

    fn embed_patch(&self, patch: &LogMelPatch) -> Result<EmbeddingVector>;

    /// Frames the clip at `advance_s` and averages the patch embeddings.
    fn embed_clip(
        &self,
        w: &Waveform,
        frontend: &LogMelFrontend,
        advance_s: f64,
    ) -> Result<EmbeddingVector> {
        let patches = frontend.frame_patches(w, advance_s)?;
        let outputs = patches
            .iter()
            .map(|p| self.embed_patch(p))
            .collect::<Result<Vec<_>>>()?;
        EmbeddingVector::mean_of(&outputs)
    }
}
