//! Mono 16-bit PCM WAV input and output.

use std::path::Path;

use crate::error::{Error, Result};
use crate::frontend::Waveform;

const FULL_SCALE: f32 = 32768.0;

fn wav_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Wav {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Quantizes a sample to the nearest 16-bit PCM level.
pub fn quantize(sample: f32) -> i16 {
    (sample * FULL_SCALE).round().clamp(-32768.0, 32767.0) as i16
}

pub fn dequantize(level: i16) -> f32 {
    level as f32 / FULL_SCALE
}

/// Checks that `path` is a readable mono 16-bit PCM WAV and returns its rate.
pub fn probe_wav(path: &Path) -> Result<u32> {
    let reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e.to_string()))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(wav_err(path, format!("expected mono, found {} channels", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(wav_err(
            path,
            format!(
                "expected 16-bit integer PCM, found {} bits {:?}",
                spec.bits_per_sample, spec.sample_format
            ),
        ));
    }
    Ok(spec.sample_rate)
}

/// Reads a mono 16-bit WAV recorded at `expected_rate`. No resampling is done.
pub fn read_wav(path: &Path, expected_rate: u32) -> Result<Waveform> {
    let rate = probe_wav(path)?;
    if rate != expected_rate {
        return Err(wav_err(
            path,
            format!("sample rate {rate} Hz does not match the run's {expected_rate} Hz"),
        ));
    }
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e.to_string()))?;
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(dequantize))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| wav_err(path, e.to_string()))?;
    Waveform::new(samples, rate).map_err(|_| wav_err(path, "file holds no samples"))
}

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_err(path, e.to_string()))?;
    for &s in &w.samples {
        writer
            .write_sample(quantize(s))
            .map_err(|e| wav_err(path, e.to_string()))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e.to_string()))
}
