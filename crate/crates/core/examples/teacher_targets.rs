//! Local and global distillation targets from the synthetic teacher. For a
//! clip of exactly one context window the two coincide.

use embdistill::distill::{make_targets, MatchingMode};
use embdistill::frontend::{LogMelFrontend, SpectrogramConfig};
use embdistill::harness::synth::{corpus_clips, Source, SynthConfig};
use embdistill::teacher::TeacherSpec;

fn main() -> embdistill::Result<()> {
    let fe = LogMelFrontend::new(SpectrogramConfig::default())?;
    let teacher = TeacherSpec::default().build(fe.patch_shape())?;
    let cfg = SynthConfig {
        corpus_min_duration_s: 2.0,
        corpus_max_duration_s: 6.0,
        ..SynthConfig::default()
    };
    for (id, w) in corpus_clips(Source::SourceB, &cfg, 3) {
        let local = make_targets(&w, &id, MatchingMode::Local, teacher.as_ref(), &fe, 1.0)?;
        let global = make_targets(&w, &id, MatchingMode::Global, teacher.as_ref(), &fe, 1.0)?;
        let spread: f32 = local
            .iter()
            .map(|e| {
                e.target.0.iter().zip(&global[0].target.0).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max)
            })
            .fold(0.0, f32::max);
        println!(
            "{id}: {:.2} s, {} windows, max |local - global| = {spread:.4}",
            w.duration_s(),
            local.len()
        );
    }
    Ok(())
}
