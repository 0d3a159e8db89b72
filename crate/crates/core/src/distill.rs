//! Distillation targets and the student training loop.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingVector, PatchEmbedder};
use crate::error::{Error, Result};
use crate::frontend::{LogMelFrontend, LogMelPatch, Waveform};
use crate::students::{Real, StudentModel};
use crate::teacher::Teacher;

/// Which teacher output a training window is regressed onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchingMode {
    /// The teacher's output on the window the student sees.
    Local,
    /// The teacher's average output over the whole clip.
    Global,
}

impl std::str::FromStr for MatchingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Self::Local),
            "global" => Ok(Self::Global),
            _ => Err(Error::Config(format!("unknown matching mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillExample {
    pub patch: LogMelPatch,
    pub target: EmbeddingVector,
    pub clip_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    AdamLike,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Mse,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub loss: LossKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 8,
            steps: 2000,
            optimizer: OptimizerKind::AdamLike,
            seed: 0,
            loss: LossKind::Mse,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return Err(Error::Config("batch_size and steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// One example per framed patch of `w`.
pub fn make_targets(
    w: &Waveform,
    clip_id: &str,
    mode: MatchingMode,
    teacher: &dyn Teacher,
    frontend: &LogMelFrontend,
    advance_s: f64,
) -> Result<Vec<DistillExample>> {
    let patches = frontend.frame_patches(w, advance_s)?;
    let local = patches
        .iter()
        .map(|p| teacher.embed_patch(p))
        .collect::<Result<Vec<_>>>()?;
    let targets = match mode {
        MatchingMode::Local => local,
        MatchingMode::Global => {
            let mean = EmbeddingVector::mean_of(&local)?;
            vec![mean; patches.len()]
        }
    };
    Ok(patches
        .into_iter()
        .zip(targets)
        .map(|(patch, target)| DistillExample {
            patch,
            target,
            clip_id: clip_id.to_string(),
        })
        .collect())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            context: "prediction vs target",
            expected: b,
            actual: a,
        });
    }
    Ok(())
}

pub fn distill_loss(pred: &EmbeddingVector, target: &EmbeddingVector, kind: LossKind) -> Result<f64> {
    let pred: Vec<f64> = pred.0.iter().map(|&v| v as f64).collect();
    Ok(loss_and_grad(&pred, target.as_slice(), kind)?.0)
}

/// Loss value and its gradient with respect to `pred`.
pub fn loss_and_grad<T: Real>(pred: &[T], target: &[f32], kind: LossKind) -> Result<(f64, Vec<T>)> {
    check_lengths(pred.len(), target.len())?;
    let n = pred.len() as f64;
    match kind {
        LossKind::Mse => {
            let diff: Vec<f64> = pred
                .iter()
                .zip(target)
                .map(|(&p, &t)| p.as_f64() - t as f64)
                .collect();
            let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
            Ok((loss, diff.iter().map(|d| T::of(2.0 * d / n)).collect()))
        }
        LossKind::Cosine => {
            let p: Vec<f64> = pred.iter().map(|v| v.as_f64()).collect();
            let t: Vec<f64> = target.iter().map(|&v| v as f64).collect();
            let pp = p.iter().map(|v| v * v).sum::<f64>().sqrt();
            let tt = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if pp == 0.0 || tt == 0.0 {
                return Err(Error::Degenerate("cosine loss of a zero vector".into()));
            }
            let dot = p.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>();
            let cos = dot / (pp * tt);
            let grad = p
                .iter()
                .zip(&t)
                .map(|(pi, ti)| T::of(-(ti / (pp * tt) - cos * pi / (pp * pp))))
                .collect();
            Ok(((1.0 - cos).max(0.0), grad))
        }
    }
}

/// Supplies training examples in a deterministic order given the RNG.
pub trait ExampleSource {
    fn next_example(&mut self, rng: &mut ChaCha8Rng) -> Result<DistillExample>;
}

/// A fixed list of examples visited in a fresh shuffled order every epoch.
#[derive(Debug, Clone)]
pub struct ExampleSet {
    examples: Vec<DistillExample>,
    order: Vec<usize>,
    cursor: usize,
}

impl ExampleSet {
    pub fn new(examples: Vec<DistillExample>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidInput("no training examples".into()));
        }
        let n = examples.len();
        Ok(Self {
            examples,
            order: (0..n).collect(),
            cursor: n,
        })
    }

    pub fn examples(&self) -> &[DistillExample] {
        &self.examples
    }
}

impl ExampleSource for ExampleSet {
    fn next_example(&mut self, rng: &mut ChaCha8Rng) -> Result<DistillExample> {
        if self.cursor == self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let ex = self.examples[self.order[self.cursor]].clone();
        self.cursor += 1;
        Ok(ex)
    }
}

struct CropClip {
    id: String,
    frames: Vec<f32>,
    num_frames: usize,
    global: Option<EmbeddingVector>,
}

/// Windows cut at a random hop-aligned offset of each clip, one clip after
/// another in a reshuffled order each epoch. Each clip is analyzed once up
/// front; local targets are computed from the teacher on demand.
pub struct RandomCropSource<'a> {
    clips: Vec<CropClip>,
    teacher: &'a dyn Teacher,
    frontend: &'a LogMelFrontend,
    mode: MatchingMode,
    order: Vec<usize>,
    cursor: usize,
}

impl<'a> RandomCropSource<'a> {
    /// `advance_s` only affects global targets, which average the teacher
    /// over the clip framed at that advance.
    pub fn new(
        clips: &[(String, Waveform)],
        mode: MatchingMode,
        teacher: &'a dyn Teacher,
        frontend: &'a LogMelFrontend,
        advance_s: f64,
    ) -> Result<Self> {
        if clips.is_empty() {
            return Err(Error::InvalidInput("no training clips".into()));
        }
        let bins = frontend.patch_shape().bins;
        let mut out = Vec::with_capacity(clips.len());
        for (id, w) in clips {
            let (padded, _) = frontend.plan(w, advance_s)?;
            let frames = frontend.clip_frames(&padded.samples);
            let global = match mode {
                MatchingMode::Local => None,
                MatchingMode::Global => Some(teacher.embed_clip(w, frontend, advance_s)?),
            };
            out.push(CropClip {
                id: id.clone(),
                num_frames: frames.len() / bins,
                frames,
                global,
            });
        }
        let n = out.len();
        Ok(Self {
            clips: out,
            teacher,
            frontend,
            mode,
            order: (0..n).collect(),
            cursor: n,
        })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// The window starting at frame `start` of clip `i` with its target.
    pub fn example_at(&self, i: usize, start: usize) -> Result<DistillExample> {
        let clip = &self.clips[i];
        let shape = self.frontend.patch_shape();
        if start + shape.frames > clip.num_frames {
            return Err(Error::Framing(format!(
                "crop at frame {start} exceeds clip {} ({} frames)",
                clip.id, clip.num_frames
            )));
        }
        let values = clip.frames[start * shape.bins..(start + shape.frames) * shape.bins].to_vec();
        let hop_s = self.frontend.config().hop_samples() as f64 / self.frontend.config().sample_rate as f64;
        let patch = LogMelPatch::new(values, shape, start as f64 * hop_s)?;
        let target = match (&self.mode, &clip.global) {
            (MatchingMode::Global, Some(g)) => g.clone(),
            _ => self.teacher.embed_patch(&patch)?,
        };
        Ok(DistillExample {
            patch,
            target,
            clip_id: clip.id.clone(),
        })
    }

    pub fn max_start(&self, i: usize) -> usize {
        self.clips[i].num_frames - self.frontend.patch_shape().frames
    }
}

impl ExampleSource for RandomCropSource<'_> {
    fn next_example(&mut self, rng: &mut ChaCha8Rng) -> Result<DistillExample> {
        if self.cursor == self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let i = self.order[self.cursor];
        self.cursor += 1;
        let start = rng.random_range(0..=self.max_start(i));
        self.example_at(i, start)
    }
}

/// Per-step mean mini-batch loss.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurve(pub Vec<f64>);

impl LossCurve {
    pub fn first(&self) -> Option<f64> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.0.last().copied()
    }

    /// Mean over the first `k` and last `k` steps.
    pub fn leading_trailing(&self, k: usize) -> (f64, f64) {
        let k = k.min(self.0.len()).max(1);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        (mean(&self.0[..k]), mean(&self.0[self.0.len() - k..]))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "step,loss")?;
        for (i, l) in self.0.iter().enumerate() {
            writeln!(w, "{i},{l}")?;
        }
        w.flush()?;
        Ok(())
    }
}

enum OptState {
    Sgd,
    Momentum(Vec<f32>),
    Adam { m: Vec<f32>, v: Vec<f32>, t: i32 },
}

const MOMENTUM: f32 = 0.9;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f32 = 1e-8;

impl OptState {
    fn new(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => OptState::Sgd,
            OptimizerKind::SgdMomentum => OptState::Momentum(vec![0.0; n]),
            OptimizerKind::AdamLike => OptState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f32], grads: &[f32], lr: f64) {
        match self {
            OptState::Sgd => {
                let lr = lr as f32;
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptState::Momentum(vel) => {
                let lr = lr as f32;
                for ((p, g), v) in params.iter_mut().zip(grads).zip(vel.iter_mut()) {
                    *v = MOMENTUM * *v + g;
                    *p -= lr * *v;
                }
            }
            OptState::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - BETA1.powi(*t);
                let c2 = 1.0 - BETA2.powi(*t);
                let step = (lr * c2.sqrt() / c1) as f32;
                let (b1, b2) = (BETA1 as f32, BETA2 as f32);
                for (((p, &g), mi), vi) in params.iter_mut().zip(grads).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = b1 * *mi + (1.0 - b1) * g;
                    *vi = b2 * *vi + (1.0 - b2) * g * g;
                    *p -= step * *mi / (vi.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Mean loss of `model` over `examples`.
pub fn mean_loss(model: &StudentModel<f32>, examples: &[DistillExample], kind: LossKind) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::InvalidInput("no examples to score".into()));
    }
    let mut total = 0.0;
    for ex in examples {
        let pred = model.embed_patch(&ex.patch)?;
        total += distill_loss(&pred, &ex.target, kind)?;
    }
    Ok(total / examples.len() as f64)
}

/// Runs `tc.steps` mini-batch updates drawing examples from `source`.
pub fn train_student<S: ExampleSource + ?Sized>(
    mut model: StudentModel<f32>,
    source: &mut S,
    tc: &TrainConfig,
) -> Result<(StudentModel<f32>, LossCurve)> {
    tc.validate()?;
    let n = model.param_count();
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut opt = OptState::new(tc.optimizer, n);
    let mut grads = vec![0.0f32; n];
    let mut curve = Vec::with_capacity(tc.steps);
    let scale = 1.0 / tc.batch_size as f32;
    let embedding_dim = model.config().embedding_dim;

    for step in 0..tc.steps {
        grads.fill(0.0);
        let mut batch_loss = 0.0;
        for _ in 0..tc.batch_size {
            let ex = source.next_example(&mut rng)?;
            if ex.target.dim() != embedding_dim {
                return Err(Error::ShapeMismatch {
                    context: "distillation target",
                    expected: embedding_dim,
                    actual: ex.target.dim(),
                });
            }
            if ex.patch.shape != model.config().input {
                return Err(Error::ShapeMismatch {
                    context: "distillation patch",
                    expected: model.config().input.len(),
                    actual: ex.patch.shape.len(),
                });
            }
            let target = ex.target.as_slice();
            batch_loss += model.forward_backward(&ex.patch.values, &mut grads, |out| {
                loss_and_grad(out, target, tc.loss)
            })?;
        }
        let loss = batch_loss / tc.batch_size as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { step, loss });
        }
        curve.push(loss);
        for g in &mut grads {
            *g *= scale;
        }
        opt.step(model.params_mut(), &grads, tc.learning_rate);
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { step, loss: f64::NAN });
        }
    }
    Ok((model, LossCurve(curve)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{PatchShape, SpectrogramConfig};
    use crate::students::{InputNorm, StudentConfig, StudentFamily};
    use crate::teacher::{TeacherKind, TeacherSpec};

    fn ev(v: &[f32]) -> EmbeddingVector {
        EmbeddingVector(v.to_vec())
    }

    #[test]
    fn loss_examples() {
        let a = ev(&[1.0, 0.0]);
        let b = ev(&[0.0, 1.0]);
        assert_eq!(distill_loss(&a, &a, LossKind::Mse).unwrap(), 0.0);
        assert_eq!(distill_loss(&a, &b, LossKind::Mse).unwrap(), 1.0);
        assert!((distill_loss(&a, &b, LossKind::Cosine).unwrap() - 1.0).abs() < 1e-12);
        let t = ev(&[0.3, -1.2, 2.0]);
        let p = ev(&[0.9, -3.6, 6.0]);
        assert!(distill_loss(&p, &t, LossKind::Cosine).unwrap().abs() < 1e-12);
        assert!(matches!(
            distill_loss(&ev(&[0.0, 0.0]), &a, LossKind::Cosine),
            Err(Error::Degenerate(_))
        ));
        assert!(distill_loss(&ev(&[1.0]), &a, LossKind::Mse).is_err());
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let t = [0.4f32, -0.7, 1.1];
        let p = [0.2f64, 0.5, -0.3];
        for kind in [LossKind::Mse, LossKind::Cosine] {
            let (_, g) = loss_and_grad(&p, &t, kind).unwrap();
            for i in 0..3 {
                let h = 1e-6;
                let mut hi = p;
                hi[i] += h;
                let mut lo = p;
                lo[i] -= h;
                let num = (loss_and_grad(&hi, &t, kind).unwrap().0 - loss_and_grad(&lo, &t, kind).unwrap().0)
                    / (2.0 * h);
                assert!((num - g[i]).abs() < 1e-7, "{kind:?} {i}");
            }
        }
    }

    fn small_frontend() -> LogMelFrontend {
        LogMelFrontend::new(SpectrogramConfig {
            sample_rate: 1600,
            num_mel_bins: 8,
            fmin_hz: 50.0,
            fmax_hz: 750.0,
            ..SpectrogramConfig::default()
        })
        .unwrap()
    }

    fn noise(n: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..n).map(|_| rng.random_range(-0.5f32..0.5)).collect(), 1600).unwrap()
    }

    fn teacher(shape: PatchShape) -> Box<dyn Teacher> {
        TeacherSpec {
            embedding_dim: 4,
            kind: TeacherKind::SyntheticLinear,
            ..TeacherSpec::default()
        }
        .build(shape)
        .unwrap()
    }

    #[test]
    fn two_second_clip_local_equals_global() {
        let fe = small_frontend();
        let t = teacher(fe.patch_shape());
        let w = noise(3200, 1);
        let l = make_targets(&w, "c", MatchingMode::Local, t.as_ref(), &fe, 2.0).unwrap();
        let g = make_targets(&w, "c", MatchingMode::Global, t.as_ref(), &fe, 2.0).unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(l, g);
    }

    #[test]
    fn four_second_clip_targets() {
        let fe = small_frontend();
        let t = teacher(fe.patch_shape());
        let w = noise(6400, 2);
        let g = make_targets(&w, "c", MatchingMode::Global, t.as_ref(), &fe, 1.0).unwrap();
        let l = make_targets(&w, "c", MatchingMode::Local, t.as_ref(), &fe, 1.0).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.iter().all(|e| e.target == g[0].target));
        // independent per-patch evaluation
        let per: Vec<Vec<f32>> = fe
            .frame_patches(&w, 1.0)
            .unwrap()
            .iter()
            .map(|p| t.embed_patch(p).unwrap().0)
            .collect();
        for k in 0..4 {
            let mean = per.iter().map(|v| v[k] as f64).sum::<f64>() / 3.0;
            assert!((g[0].target.0[k] as f64 - mean).abs() < 1e-6);
        }
        assert_ne!(l[0].target, l[1].target);
        assert_ne!(l[1].target, l[2].target);
    }

    fn student(fe: &LogMelFrontend, width: usize, seed: u64) -> StudentModel<f32> {
        StudentModel::init(&StudentConfig {
            family: StudentFamily::ConvScaledLike,
            depth: 1,
            width,
            embedding_dim: 4,
            seed,
            input: fe.patch_shape(),
            input_norm: InputNorm { mean: -4.0, std: 4.0 },
        })
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let fe = small_frontend();
        let t = teacher(fe.patch_shape());
        let ex = make_targets(&noise(3200, 3), "c", MatchingMode::Local, t.as_ref(), &fe, 2.0).unwrap();
        let m = student(&fe, 4, 0);
        let tc = TrainConfig {
            learning_rate: 0.0,
            steps: 5,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let (trained, curve) = train_student(m.clone(), &mut ExampleSet::new(ex).unwrap(), &tc).unwrap();
        assert_eq!(trained.params(), m.params());
        assert!(curve.0.iter().all(|&l| l == curve.0[0]));
    }

    #[test]
    fn overfits_a_single_example() {
        let fe = small_frontend();
        let t = teacher(fe.patch_shape());
        let ex = make_targets(&noise(3200, 4), "c", MatchingMode::Local, t.as_ref(), &fe, 2.0).unwrap();
        let tc = TrainConfig {
            learning_rate: 1e-2,
            steps: 300,
            batch_size: 1,
            ..TrainConfig::default()
        };
        let mut set = ExampleSet::new(ex.clone()).unwrap();
        let (trained, _) = train_student(student(&fe, 6, 1), &mut set, &tc).unwrap();
        assert!(mean_loss(&trained, &ex, LossKind::Mse).unwrap() <= 1e-3);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let fe = small_frontend();
        let t = teacher(fe.patch_shape());
        let clips: Vec<(String, Waveform)> = (0..4)
            .map(|i| (format!("c{i}"), noise(2400 + 900 * i, 10 + i as u64)))
            .collect();
        let tc = TrainConfig {
            steps: 20,
            batch_size: 3,
            seed: 7,
            ..TrainConfig::default()
        };
        let run = || {
            let mut src = RandomCropSource::new(&clips, MatchingMode::Local, t.as_ref(), &fe, 2.0).unwrap();
            train_student(student(&fe, 4, 2), &mut src, &tc).unwrap()
        };
        let (a, ca) = run();
        let (b, cb) = run();
        assert_eq!(a.params(), b.params());
        assert_eq!(ca, cb);
        assert!(a.params().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn crops_match_direct_analysis_and_global_is_constant() {
        let fe = small_frontend();
        let t = teacher(fe.patch_shape());
        let w = noise(8000, 5);
        let clips = vec![("c".to_string(), w.clone())];
        let src = RandomCropSource::new(&clips, MatchingMode::Local, t.as_ref(), &fe, 1.0).unwrap();
        let direct = fe.frame_patches(&w, 1.0).unwrap();
        let per_second = 100; // frames per second at a 10 ms hop
        for (k, p) in direct.iter().enumerate() {
            let ex = src.example_at(0, k * per_second).unwrap();
            assert_eq!(ex.patch.values, p.values);
            assert_eq!(ex.target, t.embed_patch(p).unwrap());
        }
        assert!(src.example_at(0, src.max_start(0) + 1).is_err());

        let glob = RandomCropSource::new(&clips, MatchingMode::Global, t.as_ref(), &fe, 1.0).unwrap();
        let expected = t.embed_clip(&w, &fe, 1.0).unwrap();
        assert_eq!(glob.example_at(0, 17).unwrap().target, expected);
    }

    #[test]
    fn bad_train_config_is_rejected() {
        for tc in [
            TrainConfig { steps: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() },
        ] {
            assert!(tc.validate().is_err());
        }
    }
}
