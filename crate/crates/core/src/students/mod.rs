//! Small fixed-context student models.
//!
//! Three families share one skeleton: a strided stem that reads the whole
//! log-mel patch, `depth` family-specific blocks of `width` channels, mean
//! pooling over time and a final linear projection to the teacher's
//! embedding size.
//!
//! * `conv-resnet-like`: residual stacks of two k=3 convolutions.
//! * `conv-scaled-like`: residual inverted bottlenecks (1×1 expand, k=3
//!   depthwise, 1×1 project), widths scaled by `width`.
//! * `attention-like`: non-overlapping time patches as tokens, a learned
//!   position table, and single-head self-attention plus MLP blocks.
//!
//! Models are generic over the float type so that the same code is checked
//! against finite differences in f64 and trained in f32.

pub mod layers;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingVector, PatchEmbedder};
use crate::error::{Error, Result};
use crate::frontend::{LogMelPatch, PatchShape};
pub use layers::Real;
use layers::{backward_seq, forward_seq, Act, Entry, Op};

const CONV_STEM: usize = 4;
const TOKEN_FRAMES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudentFamily {
    ConvResnetLike,
    ConvScaledLike,
    AttentionLike,
}

impl StudentFamily {
    pub const ALL: [StudentFamily; 3] = [
        StudentFamily::ConvResnetLike,
        StudentFamily::ConvScaledLike,
        StudentFamily::AttentionLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StudentFamily::ConvResnetLike => "conv-resnet-like",
            StudentFamily::ConvScaledLike => "conv-scaled-like",
            StudentFamily::AttentionLike => "attention-like",
        }
    }

    fn stem_frames(self) -> usize {
        match self {
            StudentFamily::AttentionLike => TOKEN_FRAMES,
            _ => CONV_STEM,
        }
    }
}

impl std::str::FromStr for StudentFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown student family {s:?}")))
    }
}

/// Fixed affine map applied to log-mel cells before the stem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: f32,
    pub std: f32,
}

impl Default for InputNorm {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentConfig {
    pub family: StudentFamily,
    pub depth: usize,
    pub width: usize,
    pub embedding_dim: usize,
    pub seed: u64,
    pub input: PatchShape,
    #[serde(default)]
    pub input_norm: InputNorm,
}

impl StudentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 || self.embedding_dim == 0 {
            return Err(Error::Config(format!(
                "depth, width and embedding_dim must be >= 1 (got {}, {}, {})",
                self.depth, self.width, self.embedding_dim
            )));
        }
        if self.input.bins == 0 || self.input.frames < self.family.stem_frames() {
            return Err(Error::Config(format!(
                "{} needs at least {} frames and 1 bin, got {:?}",
                self.family.name(),
                self.family.stem_frames(),
                self.input
            )));
        }
        if !(self.input_norm.std > 0.0) || !self.input_norm.mean.is_finite() {
            return Err(Error::Config("input_norm.std must be positive".into()));
        }
        Ok(())
    }

    /// Fails when the student cannot be paired with the run's teacher and
    /// frontend.
    pub fn check_run(&self, embedding_dim: usize, shape: PatchShape) -> Result<()> {
        if self.embedding_dim != embedding_dim {
            return Err(Error::ShapeMismatch {
                context: "student embedding_dim vs teacher",
                expected: embedding_dim,
                actual: self.embedding_dim,
            });
        }
        if self.input != shape {
            return Err(Error::ShapeMismatch {
                context: "student input patch vs frontend",
                expected: shape.len(),
                actual: self.input.len(),
            });
        }
        Ok(())
    }

    pub fn size_mb(&self) -> Result<f64> {
        Ok(size_mb(param_count(self)?))
    }
}

/// Reported model size: 4 bytes per parameter, in MiB.
pub fn size_mb(param_count: usize) -> f64 {
    4.0 * param_count as f64 / (1u64 << 20) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    FanIn(usize),
    Zero,
    Small,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    #[serde(skip)]
    init: Init,
}

impl ParamTensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Default)]
struct Builder {
    table: Vec<ParamTensor>,
    next: usize,
}

impl Builder {
    fn alloc(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let offset = self.next;
        let t = ParamTensor {
            name,
            shape,
            offset,
            init,
        };
        self.next += t.len();
        self.table.push(t);
        offset
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, kernel: usize, stride: usize, pad: usize) -> Op {
        let w = self.alloc(format!("{name}.w"), vec![kernel, cin, cout], Init::FanIn(kernel * cin));
        let b = self.alloc(format!("{name}.b"), vec![cout], Init::Zero);
        Op::Conv {
            cin,
            cout,
            kernel,
            stride,
            pad,
            w,
            b,
        }
    }

    fn dense(&mut self, name: &str, cin: usize, cout: usize) -> Op {
        let w = self.alloc(format!("{name}.w"), vec![cin, cout], Init::FanIn(cin));
        let b = self.alloc(format!("{name}.b"), vec![cout], Init::Zero);
        Op::Dense { cin, cout, w, b }
    }

    fn depthwise(&mut self, name: &str, ch: usize, kernel: usize) -> Op {
        let w = self.alloc(format!("{name}.w"), vec![kernel, ch], Init::FanIn(kernel));
        let b = self.alloc(format!("{name}.b"), vec![ch], Init::Zero);
        Op::Depthwise { ch, kernel, w, b }
    }

    fn attention(&mut self, name: &str, ch: usize) -> Op {
        let mut m = |s: &str| self.alloc(format!("{name}.{s}"), vec![ch, ch], Init::FanIn(ch));
        let (wq, wk, wv, wo) = (m("wq"), m("wk"), m("wv"), m("wo"));
        Op::Attention { ch, wq, wk, wv, wo }
    }
}

/// The op graph and parameter table of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    ops: Vec<Op>,
    table: Vec<ParamTensor>,
    count: usize,
}

impl Layout {
    pub fn new(cfg: &StudentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut b = Builder::default();
        let (bins, w) = (cfg.input.bins, cfg.width);
        let mut ops = Vec::new();
        match cfg.family {
            StudentFamily::ConvResnetLike => {
                ops.push(b.conv("stem", bins, w, CONV_STEM, CONV_STEM, 0));
                ops.push(Op::Silu);
                for d in 0..cfg.depth {
                    let inner = vec![
                        b.conv(&format!("block{d}.conv1"), w, w, 3, 1, 1),
                        Op::Silu,
                        b.conv(&format!("block{d}.conv2"), w, w, 3, 1, 1),
                    ];
                    ops.push(Op::Residual(inner));
                    ops.push(Op::Silu);
                }
            }
            StudentFamily::ConvScaledLike => {
                ops.push(b.conv("stem", bins, w, CONV_STEM, CONV_STEM, 0));
                ops.push(Op::Silu);
                for d in 0..cfg.depth {
                    let inner = vec![
                        b.dense(&format!("block{d}.expand"), w, 2 * w),
                        Op::Silu,
                        b.depthwise(&format!("block{d}.depthwise"), 2 * w, 3),
                        Op::Silu,
                        b.dense(&format!("block{d}.project"), 2 * w, w),
                    ];
                    ops.push(Op::Residual(inner));
                }
            }
            StudentFamily::AttentionLike => {
                ops.push(b.conv("patchify", bins, w, TOKEN_FRAMES, TOKEN_FRAMES, 0));
                let tokens = (cfg.input.frames - TOKEN_FRAMES) / TOKEN_FRAMES + 1;
                let p = b.alloc("pos".into(), vec![tokens, w], Init::Small);
                ops.push(Op::PosEmbed { len: tokens, ch: w, p });
                for d in 0..cfg.depth {
                    ops.push(Op::Residual(vec![b.attention(&format!("block{d}.attn"), w)]));
                    ops.push(Op::Residual(vec![
                        b.dense(&format!("block{d}.mlp1"), w, 2 * w),
                        Op::Silu,
                        b.dense(&format!("block{d}.mlp2"), 2 * w, w),
                    ]));
                }
            }
        }
        ops.push(Op::MeanPool);
        ops.push(b.dense("head", w, cfg.embedding_dim));
        Ok(Self {
            ops,
            count: b.next,
            table: b.table,
        })
    }

    pub fn param_count(&self) -> usize {
        self.count
    }

    pub fn table(&self) -> &[ParamTensor] {
        &self.table
    }
}

/// Number of trainable parameters, from shape arithmetic alone.
pub fn param_count(cfg: &StudentConfig) -> Result<usize> {
    Ok(Layout::new(cfg)?.param_count())
}

/// The five-rung size ladder, smallest first: one residual conv rung, two
/// scaled conv rungs and two attention rungs.
pub fn desk_ladder(input: PatchShape, embedding_dim: usize, seed: u64) -> Vec<StudentConfig> {
    use StudentFamily::*;
    [
        (ConvResnetLike, 1, 16),
        (ConvResnetLike, 1, 24),
        (ConvScaledLike, 2, 24),
        (AttentionLike, 1, 32),
        (AttentionLike, 2, 48),
    ]
    .into_iter()
    .map(|(family, depth, width)| StudentConfig {
        family,
        depth,
        width,
        embedding_dim,
        seed,
        input,
        input_norm: InputNorm::default(),
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentModel<T = f32> {
    config: StudentConfig,
    layout: Layout,
    params: Vec<T>,
}

/// Seeded fan-in-scaled initialization.
pub fn init_student<T: Real>(cfg: &StudentConfig) -> Result<StudentModel<T>> {
    StudentModel::init(cfg)
}

impl<T: Real> StudentModel<T> {
    pub fn init(cfg: &StudentConfig) -> Result<Self> {
        let layout = Layout::new(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = vec![T::zero(); layout.count];
        for t in &layout.table {
            let std = match t.init {
                Init::FanIn(fan_in) => 1.0 / (fan_in as f64).sqrt(),
                Init::Small => 0.1,
                Init::Zero => continue,
            };
            for p in &mut params[t.range()] {
                let z: f64 = StandardNormal.sample(&mut rng);
                *p = T::of(z * std);
            }
        }
        Ok(Self {
            config: cfg.clone(),
            layout,
            params,
        })
    }

    pub fn from_params(cfg: &StudentConfig, params: Vec<T>) -> Result<Self> {
        let layout = Layout::new(cfg)?;
        if params.len() != layout.count {
            return Err(Error::ShapeMismatch {
                context: "student parameter vector",
                expected: layout.count,
                actual: params.len(),
            });
        }
        Ok(Self {
            config: cfg.clone(),
            layout,
            params,
        })
    }

    pub fn config(&self) -> &StudentConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn cast<U: Real>(&self) -> StudentModel<U> {
        StudentModel {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| U::of(p.as_f64())).collect(),
        }
    }

    fn input_act(&self, values: &[f32]) -> Result<Act<T>> {
        let shape = self.config.input;
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                context: "student input patch",
                expected: shape.len(),
                actual: values.len(),
            });
        }
        let InputNorm { mean, std } = self.config.input_norm;
        let (mean, inv) = (T::of(mean as f64), T::one() / T::of(std as f64));
        Ok(Act {
            len: shape.frames,
            ch: shape.bins,
            data: values.iter().map(|&v| (T::of(v as f64) - mean) * inv).collect(),
        })
    }

    fn check_patch(&self, p: &LogMelPatch) -> Result<()> {
        if p.shape != self.config.input {
            return Err(Error::ShapeMismatch {
                context: "student input patch",
                expected: self.config.input.len(),
                actual: p.shape.len(),
            });
        }
        Ok(())
    }

    /// Raw forward pass over a flattened `frames × bins` patch.
    pub fn forward_values(&self, values: &[f32]) -> Result<Vec<T>> {
        let x = self.input_act(values)?;
        Ok(forward_seq(&self.layout.ops, &self.params, x, None).data)
    }

    /// Forward with tape, then backward with the cotangent from `loss`.
    /// Parameter gradients are added into `grads`; returns the loss value.
    pub fn forward_backward<F>(&self, values: &[f32], grads: &mut [T], loss: F) -> Result<f64>
    where
        F: FnOnce(&[T]) -> Result<(f64, Vec<T>)>,
    {
        if grads.len() != self.params.len() {
            return Err(Error::ShapeMismatch {
                context: "gradient buffer",
                expected: self.params.len(),
                actual: grads.len(),
            });
        }
        let x = self.input_act(values)?;
        let mut tape: Vec<Entry<T>> = Vec::with_capacity(self.layout.ops.len());
        let out = forward_seq(&self.layout.ops, &self.params, x, Some(&mut tape));
        let (value, grad_out) = loss(&out.data)?;
        if grad_out.len() != out.data.len() {
            return Err(Error::ShapeMismatch {
                context: "output cotangent",
                expected: out.data.len(),
                actual: grad_out.len(),
            });
        }
        let g = Act {
            len: 1,
            ch: out.ch,
            data: grad_out,
        };
        backward_seq(&self.layout.ops, &self.params, tape, g, grads);
        Ok(value)
    }

    /// Parameter gradient of `⟨grad_out, forward(p)⟩`.
    pub fn backward(&self, p: &LogMelPatch, grad_out: &[T]) -> Result<Vec<T>> {
        self.check_patch(p)?;
        let mut grads = vec![T::zero(); self.params.len()];
        self.forward_backward(&p.values, &mut grads, |out| {
            let value = out.iter().zip(grad_out).map(|(&o, &g)| (o * g).as_f64()).sum();
            Ok((value, grad_out.to_vec()))
        })?;
        Ok(grads)
    }
}

impl<T: Real> PatchEmbedder for StudentModel<T> {
    fn embedding_dim(&self) -> usize {
        self.config.embedding_dim
    }

    fn embed_patch(&self, p: &LogMelPatch) -> Result<EmbeddingVector> {
        self.check_patch(p)?;
        let out = self.forward_values(&p.values)?;
        Ok(EmbeddingVector(out.into_iter().map(|v| v.as_f64() as f32).collect()))
    }
}

/// Deterministic forward pass producing one embedding per patch.
pub fn student_forward<T: Real>(m: &StudentModel<T>, p: &LogMelPatch) -> Result<EmbeddingVector> {
    m.embed_patch(p)
}

pub fn student_backward<T: Real>(m: &StudentModel<T>, p: &LogMelPatch, grad_out: &[T]) -> Result<Vec<T>> {
    m.backward(p, grad_out)
}
