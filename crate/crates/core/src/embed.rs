//! Clip-level embeddings from any patch embedder and the frame-advance sweep.

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingVector, PatchEmbedder};
use crate::error::{Error, Result};
use crate::frontend::{LogMelFrontend, Waveform};
use crate::probes::{select_on_dev, LabeledEmbeddings, ProbeVariant, TaskSpec};
use crate::students::{Real, StudentModel};

/// Labeled clips of one split, in manifest order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SplitClips {
    pub ids: Vec<String>,
    pub waves: Vec<Waveform>,
    pub labels: Vec<usize>,
}

impl SplitClips {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Equal-weight mean of the student's outputs over every framed patch.
pub fn student_embed_clip<T: Real>(
    m: &StudentModel<T>,
    w: &Waveform,
    frontend: &LogMelFrontend,
    advance_s: f64,
) -> Result<EmbeddingVector> {
    m.embed_clip(w, frontend, advance_s)
}

/// One embedding per clip, in input order.
pub fn embed_clips(
    model: &dyn PatchEmbedder,
    waves: &[Waveform],
    frontend: &LogMelFrontend,
    advance_s: f64,
) -> Result<Vec<EmbeddingVector>> {
    waves
        .iter()
        .map(|w| model.embed_clip(w, frontend, advance_s))
        .collect()
}

pub fn embed_split(
    model: &dyn PatchEmbedder,
    split: &SplitClips,
    frontend: &LogMelFrontend,
    advance_s: f64,
) -> Result<LabeledEmbeddings> {
    let vectors = embed_clips(model, &split.waves, frontend, advance_s)?;
    LabeledEmbeddings::new(&vectors, split.labels.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub advance_s: f64,
    pub dev_metric: f64,
    pub probe_type: ProbeVariant,
}

/// For each advance, embeds train and dev and reports the dev score of the
/// dev-best probe. Test clips are not an input.
pub fn sweep_frame_advance(
    model: &dyn PatchEmbedder,
    train: &SplitClips,
    dev: &SplitClips,
    task: &TaskSpec,
    frontend: &LogMelFrontend,
    advances: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if advances.is_empty() {
        return Err(Error::InvalidInput("advance list is empty".into()));
    }
    if let Some(a) = advances.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidInput(format!("frame advance must be positive, got {a}")));
    }
    if train.is_empty() {
        return Err(Error::MissingSplit("train"));
    }
    if dev.is_empty() {
        return Err(Error::MissingSplit("dev"));
    }
    advances
        .iter()
        .map(|&advance_s| {
            let tr = embed_split(model, train, frontend, advance_s)?;
            let dv = embed_split(model, dev, frontend, advance_s)?;
            let (candidates, best) = select_on_dev(&tr, &dv, task, seed)?;
            Ok(SweepRow {
                advance_s,
                dev_metric: candidates[best].dev.metric,
                probe_type: candidates[best].variant,
            })
        })
        .collect()
}

pub fn write_sweep_csv(path: &std::path::Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["advance", "dev_metric", "probe_type"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.advance_s.to_string(),
            r.dev_metric.to_string(),
            r.probe_type.name().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{PatchShape, SpectrogramConfig};
    use crate::probes::TaskMetric;
    use crate::students::{InputNorm, StudentConfig, StudentFamily};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn frontend() -> LogMelFrontend {
        LogMelFrontend::new(SpectrogramConfig {
            sample_rate: 1600,
            num_mel_bins: 8,
            fmin_hz: 50.0,
            fmax_hz: 750.0,
            ..SpectrogramConfig::default()
        })
        .unwrap()
    }

    fn model(shape: PatchShape) -> StudentModel {
        StudentModel::init(&StudentConfig {
            family: StudentFamily::ConvResnetLike,
            depth: 1,
            width: 4,
            embedding_dim: 5,
            seed: 3,
            input: shape,
            input_norm: InputNorm { mean: -4.0, std: 4.0 },
        })
        .unwrap()
    }

    fn noise(n: usize, amp: f32, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..n).map(|_| rng.random_range(-amp..amp)).collect(), 1600).unwrap()
    }

    #[test]
    fn two_second_clip_equals_single_patch_output() {
        let fe = frontend();
        let m = model(fe.patch_shape());
        let w = noise(3200, 0.3, 1);
        let p = fe.log_mel(&w).unwrap();
        assert_eq!(student_embed_clip(&m, &w, &fe, 2.0).unwrap(), m.embed_patch(&p).unwrap());
    }

    #[test]
    fn four_second_clip_averages_two_patches_within_bounds() {
        let fe = frontend();
        let m = model(fe.patch_shape());
        let w = noise(6400, 0.3, 2);
        let e = student_embed_clip(&m, &w, &fe, 2.0).unwrap();
        let halves: Vec<EmbeddingVector> = [0..3200, 3200..6400]
            .into_iter()
            .map(|r| {
                let piece = Waveform::new(w.samples[r].to_vec(), 1600).unwrap();
                m.embed_patch(&fe.log_mel(&piece).unwrap()).unwrap()
            })
            .collect();
        assert_eq!(e.dim(), 5);
        for k in 0..5 {
            let (a, b) = (halves[0].0[k], halves[1].0[k]);
            assert!((e.0[k] as f64 - (a as f64 + b as f64) / 2.0).abs() < 1e-6);
            assert!(e.0[k] >= a.min(b) && e.0[k] <= a.max(b));
        }
    }

    fn split(n: usize, seed: u64) -> SplitClips {
        let mut s = SplitClips::default();
        for i in 0..n {
            let label = i % 2;
            let amp = if label == 0 { 0.05 } else { 0.5 };
            s.ids.push(format!("c{seed}_{i}"));
            s.waves.push(noise(2400 + 400 * (i % 5), amp, seed * 1000 + i as u64));
            s.labels.push(label);
        }
        s
    }

    #[test]
    fn sweep_is_reproducible_and_row_per_advance() {
        let fe = frontend();
        let m = model(fe.patch_shape());
        let task = TaskSpec {
            name: "loud".into(),
            metric: TaskMetric::Accuracy,
            num_classes: 2,
        };
        let (tr, dv) = (split(16, 1), split(10, 2));
        let advances = [0.5, 1.0, 1.0, 2.0];
        let a = sweep_frame_advance(&m, &tr, &dv, &task, &fe, &advances, 0).unwrap();
        let b = sweep_frame_advance(&m, &tr, &dv, &task, &fe, &advances, 0).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a, b);
        assert_eq!(a[1].dev_metric, a[2].dev_metric);
        assert!(sweep_frame_advance(&m, &tr, &dv, &task, &fe, &[], 0).is_err());
        assert!(sweep_frame_advance(&m, &tr, &dv, &task, &fe, &[0.0], 0).is_err());
        assert!(matches!(
            sweep_frame_advance(&m, &tr, &SplitClips::default(), &task, &fe, &[1.0], 0),
            Err(Error::MissingSplit("dev"))
        ));
    }
}
