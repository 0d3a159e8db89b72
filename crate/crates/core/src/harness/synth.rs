//! Seeded synthetic benchmark: harmonic tones with noise and envelopes,
//! four probing tasks keyed to features visible in the log-mel patch, and
//! two unlabeled distillation corpora.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::{DatasetManifest, ManifestHeader, ManifestRole, ManifestRow, Split};
use crate::embed::SplitClips;
use crate::error::{Error, Result};
use crate::frontend::{wav, LogMelFrontend, Waveform};
use crate::probes::{TaskMetric, TaskSpec};
use crate::teacher::Teacher;

pub const SAMPLE_RATE: u32 = 16_000;

/// Seed for item `index` of stream `tag` under `root`.
pub fn derive_seed(root: u64, tag: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Everything that determines one rendered clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipParams {
    pub duration_s: f64,
    pub f0_hz: f64,
    /// Harmonic `h` has amplitude `h^-tilt`.
    pub tilt: f64,
    pub noise_level: f64,
    pub noise_cutoff_hz: f64,
    pub am_rate_hz: f64,
    pub am_depth: f64,
    /// Level of the narrow 5–6.5 kHz artifact band; 0 when absent.
    pub artifact_level: f64,
    pub gain: f64,
    /// Highest harmonic frequency.
    pub tone_limit_hz: f64,
    /// Content above this frequency is removed.
    pub band_limit_hz: f64,
    /// Gains in dB at log-spaced centers from 100 Hz to Nyquist,
    /// interpolated in log frequency. Empty means a flat spectrum.
    #[serde(default)]
    pub envelope_db: Vec<f64>,
    pub seed: u64,
}

const ARTIFACT_BAND: (f64, f64) = (5000.0, 6500.0);
const ARTIFACT_LEVELS: (f64, f64) = (0.015, 0.15);
const ENVELOPE_BANDS: usize = 12;
const ENVELOPE_DB: f64 = 12.0;
const NYQUIST: f64 = SAMPLE_RATE as f64 / 2.0;

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Where nuisance parameters are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    /// Band-limited to 2 kHz, never carries the artifact band.
    SourceA,
    /// Full band, occasionally carries high-band energy.
    SourceB,
    /// The probing tasks' own distribution.
    Eval,
}

impl Source {
    pub fn tag(self) -> &'static str {
        match self {
            Source::SourceA => "source-a",
            Source::SourceB => "source-b",
            Source::Eval => "eval",
        }
    }
}

const PITCH_RANGES: [(f64, f64); 3] = [(100.0, 160.0), (180.0, 290.0), (320.0, 520.0)];
const TILT_RANGES: [(f64, f64); 2] = [(0.3, 0.9), (1.2, 2.0)];

/// Nuisance-randomized parameters for one clip.
pub fn sample_params(rng: &mut ChaCha8Rng, source: Source, duration: (f64, f64)) -> ClipParams {
    let pitch = PITCH_RANGES[rng.random_range(0..3)];
    let tilt = TILT_RANGES[rng.random_range(0..2)];
    let (band_limit_hz, tone_limit_hz, noise_cutoff_hz, artifact_level) = match source {
        Source::SourceA => (2000.0, 2000.0, rng.random_range(800.0..2000.0), 0.0),
        Source::SourceB => {
            let art = if rng.random_bool(0.3) {
                log_uniform(rng, ARTIFACT_LEVELS.0, ARTIFACT_LEVELS.1)
            } else {
                0.0
            };
            let tone = rng.random_range(3000.0..NYQUIST);
            (NYQUIST, tone, rng.random_range(800.0..NYQUIST), art)
        }
        Source::Eval => (NYQUIST, 4000.0, rng.random_range(800.0..4000.0), 0.0),
    };
    ClipParams {
        duration_s: rng.random_range(duration.0..=duration.1),
        f0_hz: log_uniform(rng, pitch.0, pitch.1),
        tilt: rng.random_range(tilt.0..tilt.1),
        noise_level: log_uniform(rng, 0.02, 0.5),
        noise_cutoff_hz,
        am_rate_hz: rng.random_range(0.5..6.0),
        am_depth: rng.random_range(0.0..0.6),
        artifact_level,
        gain: log_uniform(rng, 0.05, 0.4),
        tone_limit_hz,
        band_limit_hz,
        envelope_db: Vec::new(),
        seed: rng.random(),
    }
}

/// `n` samples of Gaussian noise whose spectrum is confined to `[lo, hi)` Hz.
/// The noise is generated periodically on the next power-of-two length and
/// truncated.
fn band_noise(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let len = n.next_power_of_two();
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(StandardNormal.sample(rng), 0.0))
        .collect();
    band_limit(&mut buf, lo, hi);
    buf.truncate(n);
    buf.into_iter().map(|c| c.re).collect()
}

fn band_limit(buf: &mut [Complex<f64>], lo: f64, hi: f64) {
    let len = buf.len();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(buf);
    let bin_hz = SAMPLE_RATE as f64 / len as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * bin_hz;
        if f < lo || f >= hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(buf);
    let scale = 1.0 / len as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
}

/// Multiplies the spectrum of `x` by the interpolated envelope.
fn shape_spectrum(x: &mut [f64], envelope_db: &[f64]) {
    let k = envelope_db.len();
    if k == 0 {
        return;
    }
    let len = x.len().next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(len, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let (lo, hi) = (100.0f64.ln(), NYQUIST.ln());
    let bin_hz = SAMPLE_RATE as f64 / len as f64;
    for (b, c) in buf.iter_mut().enumerate() {
        let f = (b.min(len - b) as f64 * bin_hz).max(100.0);
        let pos = if k == 1 { 0.0 } else { (f.ln() - lo) / (hi - lo) * (k - 1) as f64 };
        let i = (pos.floor() as usize).min(k - 1);
        let frac = pos - i as f64;
        let db = envelope_db[i] * (1.0 - frac) + envelope_db[(i + 1).min(k - 1)] * frac;
        *c *= 10f64.powf(db / 20.0) / len as f64;
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    for (v, c) in x.iter_mut().zip(buf) {
        *v = c.re;
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Renders a clip and rounds it through 16-bit PCM, so the in-memory
/// waveform equals what a WAV round trip returns.
pub fn render(p: &ClipParams) -> Waveform {
    let sr = SAMPLE_RATE as f64;
    let n = ((p.duration_s * sr).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let mut tone = vec![0.0f64; n];
    let mut h = 1;
    let tone_limit = p.tone_limit_hz.min(p.band_limit_hz).min(NYQUIST - 100.0);
    while (h as f64) * p.f0_hz < tone_limit {
        let amp = (h as f64).powf(-p.tilt);
        let phase = rng.random_range(0.0..2.0 * PI);
        let w = 2.0 * PI * h as f64 * p.f0_hz / sr;
        // phasor recurrence, re-anchored every block to bound drift
        let step = Complex::from_polar(1.0, w);
        for (b, block) in tone.chunks_mut(4096).enumerate() {
            let mut z = Complex::from_polar(amp, w * (b * 4096) as f64 + phase);
            for v in block {
                *v += z.im;
                z *= step;
            }
        }
        h += 1;
    }
    let tone_rms = rms(&tone).max(1e-12);

    let noise = band_noise(&mut rng, n, 0.0, p.noise_cutoff_hz.min(p.band_limit_hz));
    let noise_rms = rms(&noise).max(1e-12);

    let mut artifact = vec![0.0; n];
    if p.artifact_level > 0.0 {
        artifact = band_noise(&mut rng, n, ARTIFACT_BAND.0, ARTIFACT_BAND.1.min(p.band_limit_hz));
    }
    let artifact_rms = rms(&artifact).max(1e-12);

    let mut mix: Vec<f64> = (0..n)
        .map(|i| {
            tone[i] / tone_rms
                + p.noise_level * noise[i] / noise_rms
                + p.artifact_level * artifact[i] / artifact_rms
        })
        .collect();
    if !p.envelope_db.is_empty() {
        let before = rms(&mix).max(1e-12);
        shape_spectrum(&mut mix, &p.envelope_db);
        let after = rms(&mix).max(1e-12);
        mix.iter_mut().for_each(|v| *v *= before / after);
    }

    let ramp = (0.02 * sr) as usize;
    let am_phase = rng.random_range(0.0..2.0 * PI);
    let samples: Vec<f32> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let fade = ((i.min(n - 1 - i) as f64) / ramp as f64).min(1.0);
            let env = fade * (1.0 + p.am_depth * (2.0 * PI * p.am_rate_hz * t + am_phase).sin());
            let v = (p.gain * env * mix[i]).clamp(-1.0, 1.0) as f32;
            wav::dequantize(wav::quantize(v))
        })
        .collect();
    Waveform {
        samples,
        sample_rate: SAMPLE_RATE,
    }
}

/// The four probing tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthTask {
    /// Three fundamental-frequency bands.
    Pitch,
    /// Bright versus dark harmonic tilt.
    Brightness,
    /// Binary, scored by EER: artifact band present or not.
    Spoof,
    /// Sign of the teacher's first clip-embedding coordinate about its median.
    TeacherSign,
}

impl SynthTask {
    pub const ALL: [SynthTask; 4] = [
        SynthTask::Pitch,
        SynthTask::Brightness,
        SynthTask::Spoof,
        SynthTask::TeacherSign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SynthTask::Pitch => "pitch",
            SynthTask::Brightness => "brightness",
            SynthTask::Spoof => "spoof",
            SynthTask::TeacherSign => "teacher-sign",
        }
    }

    pub fn classes(self) -> Vec<String> {
        let c: &[&str] = match self {
            SynthTask::Pitch => &["low", "mid", "high"],
            SynthTask::Brightness => &["bright", "dark"],
            SynthTask::Spoof => &["bonafide", "spoof"],
            SynthTask::TeacherSign => &["below", "above"],
        };
        c.iter().map(|s| s.to_string()).collect()
    }

    pub fn metric(self) -> TaskMetric {
        match self {
            SynthTask::Spoof => TaskMetric::Eer,
            _ => TaskMetric::Accuracy,
        }
    }

    pub fn spec(self) -> TaskSpec {
        TaskSpec {
            name: self.name().to_string(),
            metric: self.metric(),
            num_classes: self.classes().len(),
        }
    }

    /// Sets the label-bearing parameter for `class`.
    fn condition(self, p: &mut ClipParams, class: usize, rng: &mut ChaCha8Rng) {
        match self {
            SynthTask::Pitch => {
                let (lo, hi) = PITCH_RANGES[class];
                p.f0_hz = log_uniform(rng, lo, hi);
            }
            SynthTask::Brightness => {
                let (lo, hi) = TILT_RANGES[class];
                p.tilt = rng.random_range(lo..hi);
            }
            SynthTask::Spoof => {
                p.artifact_level = if class == 1 {
                    log_uniform(rng, ARTIFACT_LEVELS.0, ARTIFACT_LEVELS.1)
                } else {
                    0.0
                };
            }
            SynthTask::TeacherSign => {
                p.envelope_db = (0..ENVELOPE_BANDS)
                    .map(|_| rng.random_range(-ENVELOPE_DB..ENVELOPE_DB))
                    .collect();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub train_clips: usize,
    pub dev_clips: usize,
    pub test_clips: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    /// Roughly one label in `flip_period` per class is flipped.
    pub flip_period: usize,
    pub corpus_clips: usize,
    pub corpus_min_duration_s: f64,
    pub corpus_max_duration_s: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            train_clips: 200,
            dev_clips: 200,
            test_clips: 200,
            min_duration_s: 1.0,
            max_duration_s: 8.0,
            flip_period: 100,
            corpus_clips: 500,
            corpus_min_duration_s: 2.0,
            corpus_max_duration_s: 6.0,
        }
    }
}

impl SynthConfig {
    fn split_sizes(&self) -> [(Split, usize); 3] {
        [
            (Split::Train, self.train_clips),
            (Split::Dev, self.dev_clips),
            (Split::Test, self.test_clips),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub id: String,
    pub params: ClipParams,
    pub wave: Waveform,
    pub label: usize,
    pub split: Split,
}

/// Flips one member in `period` of each class (at least one per class) to
/// another class, cycling through the alternatives.
pub fn flip_labels(labels: &mut [usize], num_classes: usize, period: usize) {
    let original = labels.to_vec();
    let period = period.max(2);
    for c in 0..num_classes {
        let members: Vec<usize> = (0..original.len()).filter(|&i| original[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let phase = (period / 2).min(members.len() - 1);
        for (k, &i) in members.iter().enumerate().skip(phase).step_by(period) {
            let shift = 1 + (k / period) % (num_classes - 1);
            labels[i] = (c + shift) % num_classes;
        }
    }
}

fn eval_clip(
    task: SynthTask,
    cfg: &SynthConfig,
    split: Split,
    i: usize,
    class: usize,
) -> (ClipParams, Waveform) {
    let seed = derive_seed(cfg.seed, &format!("{}/{}", task.name(), split.name()), i as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = sample_params(&mut rng, Source::Eval, (cfg.min_duration_s, cfg.max_duration_s));
    task.condition(&mut params, class, &mut rng);
    let wave = render(&params);
    (params, wave)
}

/// Candidates whose first teacher coordinate falls inside this central
/// quantile band are dropped, so the two classes are separated by a margin.
const SIGN_MARGIN: (f64, f64) = (0.35, 0.65);

fn teacher_sign_clips(
    cfg: &SynthConfig,
    teacher: &dyn Teacher,
    frontend: &LogMelFrontend,
    advance_s: f64,
) -> Result<Vec<SynthClip>> {
    let task = SynthTask::TeacherSign;
    let mut pools = Vec::new();
    let mut all = Vec::new();
    for (split, n) in cfg.split_sizes() {
        let mut pool = Vec::with_capacity(2 * n);
        for i in 0..2 * n {
            let (params, wave) = eval_clip(task, cfg, split, i, 0);
            let v = teacher.embed_clip(&wave, frontend, advance_s)?.0[0] as f64;
            all.push(v);
            pool.push((i, params, wave, v));
        }
        pools.push((split, n, pool));
    }
    all.sort_by(f64::total_cmp);
    let q = |f: f64| all[((all.len() - 1) as f64 * f).round() as usize];
    let (lo, hi) = (q(SIGN_MARGIN.0), q(SIGN_MARGIN.1));
    let mut clips = Vec::new();
    for (split, n, pool) in pools {
        let mut by_class: [Vec<_>; 2] = [Vec::new(), Vec::new()];
        for (i, params, wave, v) in pool {
            if v < lo {
                by_class[0].push((i, params, wave));
            } else if v > hi {
                by_class[1].push((i, params, wave));
            }
        }
        let need = [n.div_ceil(2), n / 2];
        if by_class[0].len() < need[0] || by_class[1].len() < need[1] {
            return Err(Error::Degenerate(format!(
                "teacher-sign {}: too few clips outside the margin",
                split.name()
            )));
        }
        let mut iters = by_class.map(|c| c.into_iter());
        for k in 0..n {
            let label = k % 2;
            let (i, params, wave) = iters[label].next().expect("counted above");
            clips.push(SynthClip {
                id: format!("{}-{}-{i:04}", task.name(), split.name()),
                params,
                wave,
                label,
                split,
            });
        }
    }
    Ok(clips)
}

/// Generates one task's clips in memory. The teacher-sign task labels clips
/// by the teacher's clip embedding at `advance_s`.
pub fn task_clips(
    task: SynthTask,
    cfg: &SynthConfig,
    teacher: &dyn Teacher,
    frontend: &LogMelFrontend,
    advance_s: f64,
) -> Result<Vec<SynthClip>> {
    let num_classes = task.classes().len();
    let mut clips = if task == SynthTask::TeacherSign {
        teacher_sign_clips(cfg, teacher, frontend, advance_s)?
    } else {
        let mut clips = Vec::new();
        for (split, n) in cfg.split_sizes() {
            for i in 0..n {
                let label = i % num_classes;
                let (params, wave) = eval_clip(task, cfg, split, i, label);
                clips.push(SynthClip {
                    id: format!("{}-{}-{i:04}", task.name(), split.name()),
                    params,
                    wave,
                    label,
                    split,
                });
            }
        }
        clips
    };
    for (split, _) in cfg.split_sizes() {
        let idx: Vec<usize> = (0..clips.len()).filter(|&i| clips[i].split == split).collect();
        let mut labels: Vec<usize> = idx.iter().map(|&i| clips[i].label).collect();
        flip_labels(&mut labels, num_classes, cfg.flip_period);
        for (&i, l) in idx.iter().zip(labels) {
            clips[i].label = l;
        }
    }
    Ok(clips)
}

pub fn split_clips(clips: &[SynthClip], split: Split) -> SplitClips {
    let mut out = SplitClips::default();
    for c in clips.iter().filter(|c| c.split == split) {
        out.ids.push(c.id.clone());
        out.waves.push(c.wave.clone());
        out.labels.push(c.label);
    }
    out
}

/// Unlabeled distillation clips drawn from `source`.
pub fn corpus_clips(source: Source, cfg: &SynthConfig, n: usize) -> Vec<(String, Waveform)> {
    (0..n)
        .map(|i| {
            let seed = derive_seed(cfg.seed, source.tag(), i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = sample_params(&mut rng, source, (cfg.corpus_min_duration_s, cfg.corpus_max_duration_s));
            (format!("{}-{i:04}", source.tag()), render(&p))
        })
        .collect()
}

/// Paths written by [`build_synthetic_benchmark`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkLayout {
    pub tasks: Vec<(String, PathBuf)>,
    pub corpora: Vec<(String, PathBuf)>,
}

fn write_manifest(
    dir: &Path,
    header: ManifestHeader,
    rows: Vec<(ManifestRow, Waveform)>,
) -> Result<PathBuf> {
    let clip_dir = dir.join("clips");
    std::fs::create_dir_all(&clip_dir)?;
    let mut out = Vec::with_capacity(rows.len());
    for (row, w) in rows {
        wav::write_wav(&dir.join(&row.clip_path), &w)?;
        out.push(row);
    }
    let manifest = DatasetManifest {
        header,
        rows: out,
        root: dir.to_path_buf(),
    };
    let path = dir.join("manifest.jsonl");
    manifest.write(&path)?;
    Ok(path)
}

/// Writes WAVs and manifests for the four tasks under `<out>/tasks/` and
/// the two distillation corpora under `<out>/corpora/`.
pub fn build_synthetic_benchmark(
    out: &Path,
    cfg: &SynthConfig,
    teacher: &dyn Teacher,
    frontend: &LogMelFrontend,
    advance_s: f64,
) -> Result<BenchmarkLayout> {
    if frontend.config().sample_rate != SAMPLE_RATE {
        return Err(Error::Config(format!(
            "synthetic clips are {SAMPLE_RATE} Hz, frontend expects {}",
            frontend.config().sample_rate
        )));
    }
    let mut layout = BenchmarkLayout {
        tasks: Vec::new(),
        corpora: Vec::new(),
    };
    for task in SynthTask::ALL {
        let classes = task.classes();
        let clips = task_clips(task, cfg, teacher, frontend, advance_s)?;
        let rows = clips
            .into_iter()
            .map(|c| {
                let row = ManifestRow {
                    clip_path: PathBuf::from("clips").join(format!("{}.wav", c.id)),
                    clip_id: c.id,
                    label: classes[c.label].clone(),
                    split: c.split,
                    source_tag: Source::Eval.tag().into(),
                };
                (row, c.wave)
            })
            .collect();
        let header = ManifestHeader {
            name: task.name().into(),
            role: ManifestRole::Eval,
            metric: task.metric(),
            classes: classes.clone(),
        };
        let path = write_manifest(&out.join("tasks").join(task.name()), header, rows)?;
        layout.tasks.push((task.name().into(), path));
    }
    for source in [Source::SourceA, Source::SourceB] {
        let rows = corpus_clips(source, cfg, cfg.corpus_clips)
            .into_iter()
            .map(|(id, w)| {
                let row = ManifestRow {
                    clip_path: PathBuf::from("clips").join(format!("{id}.wav")),
                    clip_id: id,
                    label: String::new(),
                    split: Split::Train,
                    source_tag: source.tag().into(),
                };
                (row, w)
            })
            .collect();
        let header = ManifestHeader {
            name: source.tag().into(),
            role: ManifestRole::Distill,
            metric: TaskMetric::Accuracy,
            classes: Vec::new(),
        };
        let path = write_manifest(&out.join("corpora").join(source.tag()), header, rows)?;
        layout.corpora.push((source.tag().into(), path));
    }
    Ok(layout)
}
