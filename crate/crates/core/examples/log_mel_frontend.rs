//! Log-mel patches from a waveform: padding of short clips, the patch-count
//! law and hop-aligned framing at several advances.

use embdistill::frontend::{pad_symmetric, LogMelFrontend, SpectrogramConfig, Waveform};

fn tone(hz: f32, seconds: f32) -> Waveform {
    let n = (seconds * 16_000.0) as usize;
    let samples = (0..n)
        .map(|i| 0.3 * (2.0 * std::f32::consts::PI * hz * i as f32 / 16_000.0).sin())
        .collect();
    Waveform::new(samples, 16_000).unwrap()
}

fn main() -> embdistill::Result<()> {
    let fe = LogMelFrontend::new(SpectrogramConfig::default())?;
    let shape = fe.patch_shape();
    println!("patch: {} frames x {} mel bins", shape.frames, shape.bins);

    let short = tone(440.0, 0.7);
    let padded = pad_symmetric(&short, fe.config().context_s)?;
    println!("0.7 s clip padded to {} samples", padded.len());

    let clip = tone(440.0, 7.3);
    for advance in [0.5, 1.0, 2.0] {
        let patches = fe.frame_patches(&clip, advance)?;
        let starts: Vec<String> = patches.iter().take(4).map(|p| format!("{:.2}", p.start_offset_s)).collect();
        println!("advance {advance:.1} s: {} patches, first starts {}", patches.len(), starts.join(" "));
    }

    let p = fe.log_mel(&tone(1000.0, 2.0))?;
    let frame = p.frame(100);
    let peak = (0..frame.len()).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
    println!("1 kHz tone peaks in mel bin {peak} at {:.2}", frame[peak]);
    Ok(())
}
