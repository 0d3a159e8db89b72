//! In-memory pipeline pieces shared by the CLI, the examples and the
//! acceptance suite: framed task splits, corpus statistics, distillation
//! runs and probe evaluation across several models.

use crate::distill::{train_student, LossCurve, MatchingMode, RandomCropSource, TrainConfig};
use crate::embed::SplitClips;
use crate::embedding::{EmbeddingVector, PatchEmbedder};
use crate::error::{Error, Result};
use crate::frontend::{LogMelFrontend, LogMelPatch, Waveform};
use crate::probes::{evaluate_task, LabeledEmbeddings, ProbeResult, TaskEmbeddings, TaskSpec};
use crate::students::{InputNorm, StudentConfig, StudentModel};
use crate::teacher::Teacher;

use super::manifest::Split;
use super::synth::{split_clips, task_clips, SynthConfig, SynthTask};

/// One task's clips, by split.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub spec: TaskSpec,
    pub train: SplitClips,
    pub dev: SplitClips,
    pub test: SplitClips,
}

impl TaskData {
    pub fn split(&self, split: Split) -> &SplitClips {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// The four synthetic tasks, generated in memory.
pub fn synthetic_tasks(
    cfg: &SynthConfig,
    teacher: &dyn Teacher,
    frontend: &LogMelFrontend,
    advance_s: f64,
) -> Result<Vec<TaskData>> {
    SynthTask::ALL
        .iter()
        .map(|&task| {
            let clips = task_clips(task, cfg, teacher, frontend, advance_s)?;
            Ok(TaskData {
                spec: task.spec(),
                train: split_clips(&clips, Split::Train),
                dev: split_clips(&clips, Split::Dev),
                test: split_clips(&clips, Split::Test),
            })
        })
        .collect()
}

/// A split whose clips are already framed, so several models can be
/// evaluated without repeating the frontend.
#[derive(Debug, Clone, PartialEq)]
pub struct FramedSplit {
    pub ids: Vec<String>,
    pub labels: Vec<usize>,
    pub patches: Vec<Vec<LogMelPatch>>,
}

impl FramedSplit {
    pub fn new(split: &SplitClips, frontend: &LogMelFrontend, advance_s: f64) -> Result<Self> {
        Ok(Self {
            ids: split.ids.clone(),
            labels: split.labels.clone(),
            patches: split
                .waves
                .iter()
                .map(|w| frontend.frame_patches(w, advance_s))
                .collect::<Result<_>>()?,
        })
    }

    /// Clip embeddings: the equal-weight mean over each clip's patches.
    pub fn embed(&self, model: &dyn PatchEmbedder) -> Result<Vec<EmbeddingVector>> {
        self.patches
            .iter()
            .map(|ps| {
                let outs = ps
                    .iter()
                    .map(|p| model.embed_patch(p))
                    .collect::<Result<Vec<_>>>()?;
                EmbeddingVector::mean_of(&outs)
            })
            .collect()
    }

    pub fn labeled(&self, model: &dyn PatchEmbedder) -> Result<LabeledEmbeddings> {
        LabeledEmbeddings::new(&self.embed(model)?, self.labels.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FramedTask {
    pub spec: TaskSpec,
    pub train: FramedSplit,
    pub dev: FramedSplit,
    pub test: FramedSplit,
}

impl FramedTask {
    pub fn new(task: &TaskData, frontend: &LogMelFrontend, advance_s: f64) -> Result<Self> {
        Ok(Self {
            spec: task.spec.clone(),
            train: FramedSplit::new(&task.train, frontend, advance_s)?,
            dev: FramedSplit::new(&task.dev, frontend, advance_s)?,
            test: FramedSplit::new(&task.test, frontend, advance_s)?,
        })
    }

    pub fn embeddings(&self, model: &dyn PatchEmbedder) -> Result<TaskEmbeddings> {
        Ok(TaskEmbeddings {
            train: self.train.labeled(model)?,
            dev: self.dev.labeled(model)?,
            test: self.test.labeled(model)?,
        })
    }

    pub fn evaluate(&self, model: &dyn PatchEmbedder, seed: u64) -> Result<ProbeResult> {
        evaluate_task(&self.embeddings(model)?, &self.spec, seed)
    }
}

/// Mean and standard deviation of log-mel cells over the patches of `waves`.
pub fn input_norm_from(waves: &[Waveform], frontend: &LogMelFrontend, advance_s: f64) -> Result<InputNorm> {
    let (mut sum, mut sq, mut n) = (0.0f64, 0.0f64, 0usize);
    for w in waves {
        for p in frontend.frame_patches(w, advance_s)? {
            for &v in &p.values {
                sum += v as f64;
                sq += (v as f64) * (v as f64);
            }
            n += p.values.len();
        }
    }
    if n == 0 {
        return Err(Error::InvalidInput("no clips to normalize over".into()));
    }
    let mean = sum / n as f64;
    let std = (sq / n as f64 - mean * mean).max(0.0).sqrt();
    Ok(InputNorm {
        mean: mean as f32,
        std: if std > 0.0 { std as f32 } else { 1.0 },
    })
}

/// Initializes `cfg` and distills it on random crops of `clips`.
pub fn distill_student(
    cfg: &StudentConfig,
    clips: &[(String, Waveform)],
    teacher: &dyn Teacher,
    frontend: &LogMelFrontend,
    mode: MatchingMode,
    advance_s: f64,
    tc: &TrainConfig,
) -> Result<(StudentModel<f32>, LossCurve)> {
    cfg.check_run(teacher.embedding_dim(), frontend.patch_shape())?;
    let model = StudentModel::init(cfg)?;
    let mut source = RandomCropSource::new(clips, mode, teacher, frontend, advance_s)?;
    train_student(model, &mut source, tc)
}

/// Probe results of one model on every task, in task order.
pub fn evaluate_model(
    model: &dyn PatchEmbedder,
    tasks: &[FramedTask],
    seed: u64,
) -> Result<Vec<ProbeResult>> {
    tasks.iter().map(|t| t.evaluate(model, seed)).collect()
}
