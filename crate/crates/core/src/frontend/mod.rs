//! Log-mel frontend: padding, fixed-context patches and frame-advance framing.
//!
//! Every student and the synthetic teacher consume [`LogMelPatch`]es covering
//! exactly `context_s` seconds of audio. Clips shorter than the context are
//! reflect-padded on both ends; longer clips are cut into patches whose
//! stride (the frame advance) is an inference-time knob.

mod mel;
pub mod wav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use mel::{hz_to_mel, mel_centers_hz, mel_to_hz};

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("waveform has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn scaled(&self, gain: f32) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Number of samples covering `seconds` at `sample_rate`, rounded up.
///
/// A relative guard keeps exact products such as `2.0 * 16000` from rounding
/// up through floating-point noise.
pub fn seconds_to_samples_ceil(seconds: f64, sample_rate: u32) -> usize {
    let exact = seconds * sample_rate as f64;
    (exact - exact.abs() * 1e-12).ceil().max(0.0) as usize
}

fn seconds_to_samples_round(seconds: f64, sample_rate: u32) -> usize {
    (seconds * sample_rate as f64).round() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrogramConfig {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub num_mel_bins: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    pub context_s: f64,
    pub log_floor: f64,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_ms: 25.0,
            hop_ms: 10.0,
            num_mel_bins: 80,
            fmin_hz: 125.0,
            fmax_hz: 7500.0,
            context_s: 2.0,
            log_floor: 1e-6,
        }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if !(self.fmin_hz > 0.0 && self.fmin_hz < self.fmax_hz) {
            return Err(Error::Config(format!(
                "need 0 < fmin_hz < fmax_hz, got {} and {}",
                self.fmin_hz, self.fmax_hz
            )));
        }
        if self.fmax_hz > nyquist {
            return Err(Error::Config(format!(
                "fmax_hz {} exceeds Nyquist {nyquist}",
                self.fmax_hz
            )));
        }
        if !(self.hop_ms > 0.0 && self.window_ms >= self.hop_ms) {
            return Err(Error::Config(format!(
                "need window_ms >= hop_ms > 0, got {} and {}",
                self.window_ms, self.hop_ms
            )));
        }
        if self.num_mel_bins == 0 {
            return Err(Error::Config("num_mel_bins must be >= 1".into()));
        }
        if !(self.context_s > 0.0) {
            return Err(Error::Config("context_s must be positive".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        if self.hop_samples() == 0 {
            return Err(Error::Config("hop is shorter than one sample".into()));
        }
        if self.window_samples() > self.context_samples() {
            return Err(Error::Config("window is longer than the context".into()));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        seconds_to_samples_round(self.window_ms / 1000.0, self.sample_rate)
    }

    pub fn hop_samples(&self) -> usize {
        seconds_to_samples_round(self.hop_ms / 1000.0, self.sample_rate)
    }

    pub fn context_samples(&self) -> usize {
        seconds_to_samples_ceil(self.context_s, self.sample_rate)
    }

    /// Frames per patch: `floor((context − window) / hop) + 1`.
    pub fn num_frames(&self) -> usize {
        (self.context_samples() - self.window_samples()) / self.hop_samples() + 1
    }

    pub fn patch_shape(&self) -> PatchShape {
        PatchShape {
            frames: self.num_frames(),
            bins: self.num_mel_bins,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchShape {
    pub frames: usize,
    pub bins: usize,
}

impl PatchShape {
    pub fn len(&self) -> usize {
        self.frames * self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `frames × bins` log-mel values (row-major) for one context window.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelPatch {
    pub values: Vec<f32>,
    pub shape: PatchShape,
    pub start_offset_s: f64,
}

impl LogMelPatch {
    pub fn new(values: Vec<f32>, shape: PatchShape, start_offset_s: f64) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::ShapeMismatch {
                context: "log-mel patch",
                expected: shape.len(),
                actual: values.len(),
            });
        }
        Ok(Self {
            values,
            shape,
            start_offset_s,
        })
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        &self.values[t * self.shape.bins..(t + 1) * self.shape.bins]
    }
}

/// Patch start offsets for one padded clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FramingPlan {
    pub frame_advance_s: f64,
    pub advance_samples: usize,
    /// Start offsets in samples, strictly increasing by `advance_samples`.
    pub patch_offsets: Vec<usize>,
}

impl FramingPlan {
    /// Offsets `0, a, 2a, …` while `offset + context ≤ padded_len`.
    pub fn new(padded_len: usize, cfg: &SpectrogramConfig, advance_s: f64) -> Result<Self> {
        if !(advance_s > 0.0) || !advance_s.is_finite() {
            return Err(Error::Framing(format!(
                "frame advance must be positive, got {advance_s}"
            )));
        }
        let advance_samples = seconds_to_samples_round(advance_s, cfg.sample_rate);
        if advance_samples == 0 {
            return Err(Error::Framing(format!(
                "frame advance {advance_s}s is shorter than one sample"
            )));
        }
        let context = cfg.context_samples();
        if padded_len < context {
            return Err(Error::Framing(format!(
                "clip of {padded_len} samples is shorter than the {context}-sample context"
            )));
        }
        let count = (padded_len - context) / advance_samples + 1;
        Ok(Self {
            frame_advance_s: advance_s,
            advance_samples,
            patch_offsets: (0..count).map(|k| k * advance_samples).collect(),
        })
    }
}

fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Reflect-pads `w` to `ceil(target_s · sample_rate)` samples, splitting the
/// deficit between both ends; an odd deficit puts the extra sample at the end.
/// Clips already at least `target_s` long are returned unchanged.
pub fn pad_symmetric(w: &Waveform, target_s: f64) -> Result<Waveform> {
    if w.samples.is_empty() {
        return Err(Error::InvalidInput("cannot pad an empty waveform".into()));
    }
    if !(target_s > 0.0) {
        return Err(Error::InvalidInput(format!(
            "pad target must be positive, got {target_s}"
        )));
    }
    let target = seconds_to_samples_ceil(target_s, w.sample_rate);
    let n = w.samples.len();
    if n >= target {
        return Ok(w.clone());
    }
    let deficit = target - n;
    let left = deficit / 2;
    let samples = (-(left as isize)..(target - left) as isize)
        .map(|i| w.samples[reflect_index(i, n)])
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: w.sample_rate,
    })
}

/// A validated frontend with its FFT plan and filterbank built once.
pub struct LogMelFrontend {
    cfg: SpectrogramConfig,
    analyzer: mel::Analyzer,
}

impl std::fmt::Debug for LogMelFrontend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LogMelFrontend")
            .field("cfg", &self.cfg)
            .finish()
    }
}

impl LogMelFrontend {
    pub fn new(cfg: SpectrogramConfig) -> Result<Self> {
        cfg.validate()?;
        let analyzer = mel::Analyzer::new(
            cfg.window_samples(),
            cfg.hop_samples(),
            cfg.num_mel_bins,
            cfg.fmin_hz,
            cfg.fmax_hz,
            cfg.sample_rate as f64,
            cfg.log_floor,
        );
        Ok(Self { cfg, analyzer })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.cfg
    }

    pub fn patch_shape(&self) -> PatchShape {
        self.cfg.patch_shape()
    }

    fn check_rate(&self, w: &Waveform) -> Result<()> {
        if w.sample_rate != self.cfg.sample_rate {
            return Err(Error::Framing(format!(
                "waveform sample rate {} does not match the run's {}",
                w.sample_rate, self.cfg.sample_rate
            )));
        }
        Ok(())
    }

    /// Log-mel patch of a waveform lasting exactly one context window.
    pub fn log_mel(&self, w: &Waveform) -> Result<LogMelPatch> {
        self.check_rate(w)?;
        let context = self.cfg.context_samples();
        if w.samples.len() != context {
            return Err(Error::Framing(format!(
                "expected exactly {context} samples ({}s), got {}; pad first",
                self.cfg.context_s,
                w.samples.len()
            )));
        }
        LogMelPatch::new(self.analyzer.analyze(&w.samples), self.patch_shape(), 0.0)
    }

    /// Full-clip log-mel frames (row-major), for clips at least one window long.
    pub fn clip_frames(&self, samples: &[f32]) -> Vec<f32> {
        self.analyzer.analyze(samples)
    }

    pub fn plan(&self, w: &Waveform, advance_s: f64) -> Result<(Waveform, FramingPlan)> {
        self.check_rate(w)?;
        let padded = pad_symmetric(w, self.cfg.context_s)?;
        let plan = FramingPlan::new(padded.samples.len(), &self.cfg, advance_s)?;
        Ok((padded, plan))
    }

    /// Pads to the context length and cuts one patch per framing offset.
    pub fn frame_patches(&self, w: &Waveform, advance_s: f64) -> Result<Vec<LogMelPatch>> {
        let (padded, plan) = self.plan(w, advance_s)?;
        let shape = self.patch_shape();
        let context = self.cfg.context_samples();
        let hop = self.cfg.hop_samples();
        let rate = self.cfg.sample_rate as f64;

        if plan.advance_samples % hop == 0 {
            // Hop-aligned offsets: analyze the clip once and slice frame rows.
            let last = plan.patch_offsets.last().copied().unwrap_or(0);
            let all = self.analyzer.analyze(&padded.samples[..last + context]);
            let stride = plan.advance_samples / hop;
            return plan
                .patch_offsets
                .iter()
                .enumerate()
                .map(|(k, &off)| {
                    let first = k * stride * shape.bins;
                    LogMelPatch::new(
                        all[first..first + shape.len()].to_vec(),
                        shape,
                        off as f64 / rate,
                    )
                })
                .collect();
        }
        plan.patch_offsets
            .iter()
            .map(|&off| {
                let values = self.analyzer.analyze(&padded.samples[off..off + context]);
                LogMelPatch::new(values, shape, off as f64 / rate)
            })
            .collect()
    }
}

/// One-shot form of [`LogMelFrontend::log_mel`].
pub fn compute_log_mel(w: &Waveform, cfg: &SpectrogramConfig) -> Result<LogMelPatch> {
    if cfg.fmax_hz > w.sample_rate as f64 / 2.0 {
        return Err(Error::Config(format!(
            "fmax_hz {} exceeds Nyquist for {} Hz audio",
            cfg.fmax_hz, w.sample_rate
        )));
    }
    LogMelFrontend::new(cfg.clone())?.log_mel(w)
}

/// One-shot form of [`LogMelFrontend::frame_patches`].
pub fn frame_patches(
    w: &Waveform,
    cfg: &SpectrogramConfig,
    advance_s: f64,
) -> Result<Vec<LogMelPatch>> {
    LogMelFrontend::new(cfg.clone())?.frame_patches(w, advance_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wave(samples: Vec<f32>, sr: u32) -> Waveform {
        Waveform::new(samples, sr).unwrap()
    }

    fn sine(freq: f64, seconds: f64, sr: u32, amp: f32) -> Waveform {
        let n = seconds_to_samples_ceil(seconds, sr);
        wave(
            (0..n)
                .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32)
                .collect(),
            sr,
        )
    }

    #[test]
    fn long_clip_is_returned_unchanged() {
        let w = sine(440.0, 2.5, 16_000, 0.5);
        assert_eq!(pad_symmetric(&w, 2.0).unwrap(), w);
    }

    #[test]
    fn four_samples_reflect_to_eight() {
        let w = wave(vec![1.0, 2.0, 3.0, 4.0], 1);
        let p = pad_symmetric(&w, 8.0).unwrap();
        assert_eq!(p.samples, vec![3.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
    }

    #[test]
    fn odd_deficit_extra_sample_goes_to_end() {
        let w = wave(vec![1.0, 2.0, 3.0, 4.0], 1);
        let p = pad_symmetric(&w, 7.0).unwrap();
        assert_eq!(p.samples, vec![2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 2.0]);
    }

    #[test]
    fn singleton_pads_to_constant() {
        let w = wave(vec![0.25], 1);
        assert_eq!(pad_symmetric(&w, 4.0).unwrap().samples, vec![0.25; 4]);
    }

    #[test]
    fn empty_waveform_is_rejected() {
        let w = Waveform {
            samples: vec![],
            sample_rate: 16_000,
        };
        assert!(matches!(pad_symmetric(&w, 2.0), Err(Error::InvalidInput(_))));
        assert!(Waveform::new(vec![], 16_000).is_err());
    }

    #[test]
    fn deficit_longer_than_clip_keeps_reflecting() {
        let w = wave(vec![1.0, 2.0, 3.0], 1);
        let p = pad_symmetric(&w, 11.0).unwrap();
        // deficit 8 split 4/4; period-4 reflection of [1,2,3]
        assert_eq!(
            p.samples,
            vec![1.0, 2.0, 3.0, 2.0, 1.0, 2.0, 3.0, 2.0, 1.0, 2.0, 3.0]
        );
    }

    #[test]
    fn silence_is_log_floor_everywhere() {
        let cfg = SpectrogramConfig::default();
        let p = compute_log_mel(&wave(vec![0.0; 32_000], 16_000), &cfg).unwrap();
        let expected = (cfg.log_floor).ln() as f32;
        assert!(p.values.iter().all(|&v| v == expected));
    }

    #[test]
    fn default_patch_is_198_by_80() {
        let cfg = SpectrogramConfig::default();
        assert_eq!((32_000 - 400) / 160 + 1, 198);
        let p = compute_log_mel(&sine(300.0, 2.0, 16_000, 0.3), &cfg).unwrap();
        assert_eq!(p.shape, PatchShape { frames: 198, bins: 80 });
        assert_eq!(p.values.len(), 198 * 80);
    }

    #[test]
    fn sine_at_a_filter_center_peaks_in_that_filter() {
        let cfg = SpectrogramConfig::default();
        let centers = mel_centers_hz(cfg.num_mel_bins, cfg.fmin_hz, cfg.fmax_hz);
        for k in [10, 30, 50, 70] {
            let p = compute_log_mel(&sine(centers[k], 2.0, 16_000, 0.5), &cfg).unwrap();
            let mut avg = vec![0.0f64; cfg.num_mel_bins];
            for t in 0..p.shape.frames {
                for (a, v) in avg.iter_mut().zip(p.frame(t)) {
                    *a += *v as f64;
                }
            }
            let argmax = (0..avg.len())
                .max_by(|&a, &b| avg[a].total_cmp(&avg[b]))
                .unwrap();
            assert_eq!(argmax, k, "tone at {} Hz", centers[k]);
        }
    }

    #[test]
    fn duration_mismatch_is_a_framing_error() {
        let cfg = SpectrogramConfig::default();
        let err = compute_log_mel(&wave(vec![0.0; 16_000], 16_000), &cfg).unwrap_err();
        assert!(matches!(err, Error::Framing(_)));
    }

    #[test]
    fn fmax_above_nyquist_is_a_config_error() {
        let cfg = SpectrogramConfig::default();
        let err = compute_log_mel(&wave(vec![0.0; 16_000], 8_000), &cfg).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let bad = SpectrogramConfig {
            fmax_hz: 9000.0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn framing_examples() {
        let cfg = SpectrogramConfig::default();
        let fe = LogMelFrontend::new(cfg).unwrap();
        let offsets = |secs: f64, adv: f64| {
            fe.frame_patches(&sine(200.0, secs, 16_000, 0.2), adv)
                .unwrap()
                .iter()
                .map(|p| p.start_offset_s)
                .collect::<Vec<_>>()
        };
        assert_eq!(offsets(2.0, 1.0), vec![0.0]);
        assert_eq!(offsets(4.0, 1.0), vec![0.0, 1.0, 2.0]);
        assert_eq!(offsets(1.0, 0.3), vec![0.0]);
        assert_eq!(offsets(1.0, 5.0), vec![0.0]);
    }

    #[test]
    fn non_positive_advance_is_rejected() {
        let fe = LogMelFrontend::new(SpectrogramConfig::default()).unwrap();
        let w = sine(200.0, 2.0, 16_000, 0.2);
        assert!(matches!(fe.frame_patches(&w, 0.0), Err(Error::Framing(_))));
        assert!(matches!(fe.frame_patches(&w, -1.0), Err(Error::Framing(_))));
    }

    #[test]
    fn sliced_and_direct_patches_agree() {
        let fe = LogMelFrontend::new(SpectrogramConfig::default()).unwrap();
        let w = sine(700.0, 5.3, 16_000, 0.4);
        // 1.0 s is hop-aligned (sliced path); 1.00625 s is not (direct path)
        let sliced = fe.frame_patches(&w, 1.0).unwrap();
        for p in &sliced {
            let off = (p.start_offset_s * 16_000.0).round() as usize;
            let direct = fe
                .log_mel(&wave(w.samples[off..off + 32_000].to_vec(), 16_000))
                .unwrap();
            assert_eq!(direct.values, p.values);
        }
        let direct = fe.frame_patches(&w, 1.00625).unwrap();
        assert_eq!(direct.len(), 4);
    }

    #[test]
    fn mismatched_rate_is_rejected() {
        let fe = LogMelFrontend::new(SpectrogramConfig::default()).unwrap();
        let w = sine(200.0, 2.0, 22_050, 0.2);
        assert!(matches!(fe.frame_patches(&w, 1.0), Err(Error::Framing(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn padding_is_idempotent_and_obeys_length_law(
            samples in proptest::collection::vec(-1.0f32..1.0, 1..300),
            target in 1u32..600,
        ) {
            let w = wave(samples, 100);
            let t = target as f64 / 100.0;
            let once = pad_symmetric(&w, t).unwrap();
            let twice = pad_symmetric(&once, t).unwrap();
            prop_assert_eq!(&once, &twice);
            prop_assert_eq!(once.len(), w.len().max(target as usize));
        }

        #[test]
        fn louder_never_lowers_a_cell(seed in 0u64..1000, gain in 1.05f32..4.0) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let cfg = SpectrogramConfig { context_s: 0.1, ..Default::default() };
            let w = wave((0..1600).map(|_| rng.random_range(-0.2f32..0.2)).collect(), 16_000);
            let quiet = compute_log_mel(&w, &cfg).unwrap();
            let loud = compute_log_mel(&w.scaled(gain), &cfg).unwrap();
            for (q, l) in quiet.values.iter().zip(&loud.values) {
                prop_assert!(l >= q);
            }
        }
    }

    #[test]
    fn deterministic_patches() {
        let fe = LogMelFrontend::new(SpectrogramConfig::default()).unwrap();
        let w = sine(523.0, 3.1, 16_000, 0.3);
        assert_eq!(fe.frame_patches(&w, 0.5).unwrap(), fe.frame_patches(&w, 0.5).unwrap());
    }
}
