//! Hann-windowed STFT magnitude followed by an HTK-scale triangular mel
//! filterbank and a floored natural log.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of `num_bins` triangular filters spaced evenly on
/// the mel scale between `fmin` and `fmax`.
pub fn mel_centers_hz(num_bins: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    mel_edges_hz(num_bins, fmin, fmax)[1..=num_bins].to_vec()
}

fn mel_edges_hz(num_bins: usize, fmin: f64, fmax: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let step = (hi - lo) / (num_bins + 1) as f64;
    (0..num_bins + 2)
        .map(|i| mel_to_hz(lo + step * i as f64))
        .collect()
}

#[derive(Debug, Clone)]
pub(crate) struct MelFilter {
    pub start: usize,
    pub weights: Vec<f64>,
}

/// Triangular filters over the `n_fft / 2 + 1` magnitude bins.
///
/// Low-frequency filters can be narrower than one FFT bin; a filter that
/// would otherwise have no support gets unit weight on the bin nearest its
/// center so that no mel channel is identically zero.
pub(crate) fn mel_filterbank(
    num_bins: usize,
    fmin: f64,
    fmax: f64,
    n_fft: usize,
    sample_rate: f64,
) -> Vec<MelFilter> {
    let edges = mel_edges_hz(num_bins, fmin, fmax);
    let num_fft_bins = n_fft / 2 + 1;
    let bin_hz = sample_rate / n_fft as f64;
    (0..num_bins)
        .map(|b| {
            let (left, center, right) = (edges[b], edges[b + 1], edges[b + 2]);
            let mut dense: Vec<(usize, f64)> = (0..num_fft_bins)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect();
            if dense.is_empty() {
                let nearest = ((center / bin_hz).round() as usize).min(num_fft_bins - 1);
                dense.push((nearest, 1.0));
            }
            let start = dense[0].0;
            let end = dense[dense.len() - 1].0;
            let mut weights = vec![0.0; end - start + 1];
            for (k, w) in dense {
                weights[k - start] = w;
            }
            MelFilter { start, weights }
        })
        .collect()
}

/// Reusable STFT + filterbank state for one frontend configuration.
pub(crate) struct Analyzer {
    pub window: Vec<f64>,
    pub n_fft: usize,
    pub hop: usize,
    pub log_floor: f64,
    pub filters: Vec<MelFilter>,
    fft: Arc<dyn Fft<f64>>,
}

impl Analyzer {
    pub fn new(
        window_len: usize,
        hop: usize,
        num_bins: usize,
        fmin: f64,
        fmax: f64,
        sample_rate: f64,
        log_floor: f64,
    ) -> Self {
        let n_fft = window_len.next_power_of_two();
        // periodic Hann
        let window = (0..window_len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / window_len as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Self {
            window,
            n_fft,
            hop,
            log_floor,
            filters: mel_filterbank(num_bins, fmin, fmax, n_fft, sample_rate),
            fft,
        }
    }

    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window.len() {
            0
        } else {
            (len - self.window.len()) / self.hop + 1
        }
    }

    /// Row-major `num_frames(len) × num_bins` log-mel matrix. Each frame
    /// depends only on its own samples, so slicing the output of a long
    /// signal is identical to analyzing the slice.
    pub fn analyze(&self, samples: &[f32]) -> Vec<f32> {
        let frames = self.num_frames(samples.len());
        let num_bins = self.filters.len();
        let mut out = Vec::with_capacity(frames * num_bins);
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mag = vec![0.0f64; self.n_fft / 2 + 1];
        for f in 0..frames {
            let start = f * self.hop;
            for (i, slot) in buf.iter_mut().enumerate() {
                *slot = match self.window.get(i) {
                    Some(w) => Complex::new(samples[start + i] as f64 * w, 0.0),
                    None => Complex::new(0.0, 0.0),
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (m, c) in mag.iter_mut().zip(&buf) {
                *m = c.norm();
            }
            for filter in &self.filters {
                let energy: f64 = filter
                    .weights
                    .iter()
                    .zip(&mag[filter.start..])
                    .map(|(w, m)| w * m)
                    .sum();
                out.push((energy + self.log_floor).ln() as f32);
            }
        }
        out
    }
}
