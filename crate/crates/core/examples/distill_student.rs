//! Distills the smallest ladder rung on random crops of a synthetic corpus,
//! saves a checkpoint and reloads it.

use embdistill::distill::{MatchingMode, TrainConfig};
use embdistill::frontend::{LogMelFrontend, SpectrogramConfig, Waveform};
use embdistill::harness::checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
use embdistill::harness::experiment::{distill_student, input_norm_from};
use embdistill::harness::synth::{corpus_clips, Source, SynthConfig};
use embdistill::students::{desk_ladder, size_mb};
use embdistill::teacher::TeacherSpec;
use embdistill::PatchEmbedder;

fn main() -> embdistill::Result<()> {
    let fe = LogMelFrontend::new(SpectrogramConfig::default())?;
    let spec = TeacherSpec::default();
    let teacher = spec.build(fe.patch_shape())?;
    let clips = corpus_clips(Source::SourceB, &SynthConfig::default(), 100);
    let waves: Vec<Waveform> = clips.iter().map(|c| c.1.clone()).collect();

    let mut cfg = desk_ladder(fe.patch_shape(), spec.embedding_dim, 7)[0].clone();
    cfg.input_norm = input_norm_from(&waves, &fe, 2.0)?;
    let tc = TrainConfig {
        steps: 400,
        seed: 7,
        ..TrainConfig::default()
    };
    let (model, curve) = distill_student(&cfg, &clips, teacher.as_ref(), &fe, MatchingMode::Local, 2.0, &tc)?;
    let (lead, trail) = curve.leading_trailing(50);
    println!(
        "{} d{} w{}: {} params ({:.3} MB), loss {lead:.4} -> {trail:.4}",
        cfg.family.name(),
        cfg.depth,
        cfg.width,
        model.param_count(),
        size_mb(model.param_count())
    );

    let dir = std::env::temp_dir().join("embdistill-example");
    let stem = dir.join("models").join("rung0");
    let header = CheckpointHeader {
        model_id: "rung0".into(),
        student: cfg.clone(),
        frontend: fe.config().clone(),
        teacher: spec,
        mode: MatchingMode::Local,
        train: tc,
        advance_s: 2.0,
        corpora: vec![Source::SourceB.tag().into()],
        param_count: model.param_count(),
        root_seed: 7,
        group: None,
        pair_key: None,
        final_loss: curve.last(),
    };
    save_checkpoint(&stem, &header, &model)?;
    let (_, reloaded, _) = load_checkpoint(&stem)?;
    let e1 = model.embed_clip(&waves[0], &fe, 2.0)?;
    let e2 = reloaded.embed_clip(&waves[0], &fe, 2.0)?;
    println!("checkpoint at {} reloads identically: {}", stem.display(), e1 == e2);
    Ok(())
}
