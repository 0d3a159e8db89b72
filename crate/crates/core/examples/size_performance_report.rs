//! Distills a short ladder, probes every rung and the teacher on the four
//! synthetic tasks and writes the size/performance report.
//!
//! Small splits and few steps keep this to a couple of minutes; the
//! acceptance suite runs the full-size version.

use embdistill::distill::{MatchingMode, TrainConfig};
use embdistill::frontend::{LogMelFrontend, SpectrogramConfig, Waveform};
use embdistill::harness::experiment::{distill_student, evaluate_model, input_norm_from, synthetic_tasks, FramedTask};
use embdistill::harness::report::{run_report, write_report, ModelEntry, ReportInput};
use embdistill::harness::synth::{corpus_clips, Source, SynthConfig};
use embdistill::students::desk_ladder;
use embdistill::teacher::TeacherSpec;
use embdistill::PatchEmbedder;

fn main() -> embdistill::Result<()> {
    let fe = LogMelFrontend::new(SpectrogramConfig::default())?;
    let spec = TeacherSpec::default();
    let teacher = spec.build(fe.patch_shape())?;
    let synth = SynthConfig {
        train_clips: 80,
        dev_clips: 60,
        test_clips: 60,
        ..SynthConfig::default()
    };
    let tasks = synthetic_tasks(&synth, teacher.as_ref(), &fe, 2.0)?;
    let framed = tasks
        .iter()
        .map(|t| FramedTask::new(t, &fe, 2.0))
        .collect::<embdistill::Result<Vec<_>>>()?;
    let corpus = corpus_clips(Source::SourceB, &synth, 200);
    let waves: Vec<Waveform> = corpus.iter().take(50).map(|c| c.1.clone()).collect();
    let norm = input_norm_from(&waves, &fe, 2.0)?;

    let mut models = Vec::new();
    let mut rows = Vec::new();
    let mut record = |id: String, model: &dyn PatchEmbedder, params: usize| -> embdistill::Result<()> {
        for (r, t) in evaluate_model(model, &framed, 0)?.iter().zip(&tasks) {
            rows.extend(r.rows(&id, &t.spec.name));
        }
        models.push(ModelEntry {
            model_id: id,
            param_count: params,
            group: None,
            pair_key: None,
            root_seed: 0,
        });
        Ok(())
    };

    let tc = TrainConfig {
        steps: 300,
        ..TrainConfig::default()
    };
    for (i, mut cfg) in desk_ladder(fe.patch_shape(), spec.embedding_dim, 0).into_iter().enumerate() {
        cfg.input_norm = norm;
        let (model, _) = distill_student(&cfg, &corpus, teacher.as_ref(), &fe, MatchingMode::Local, 2.0, &tc)?;
        let params = model.param_count();
        record(format!("rung{i}"), &model, params)?;
    }
    let teacher_params = spec.embedding_dim * fe.patch_shape().len();
    record("teacher".into(), teacher.as_ref(), teacher_params)?;

    let input = ReportInput {
        tasks: tasks.iter().map(|t| t.spec.clone()).collect(),
        models,
        rows,
        ab_tests: vec![],
    };
    let report = run_report(&input)?;
    println!("{:<8} {:>7} {:>9} {:>9}  flags", "model", "params", "dev d'", "test d'");
    for m in &report.models {
        println!(
            "{:<8} {:>7} {:>9.3} {:>9.3}  {}{}",
            m.model_id,
            m.param_count,
            m.avg_d_prime_dev.unwrap_or(f64::NAN),
            m.avg_d_prime_test.unwrap_or(f64::NAN),
            if m.best { "best " } else { "" },
            if m.frontier { "frontier" } else { "" }
        );
    }
    println!("kendall tau (d' dev vs d' test) = {:?}", report.kendall.tau[0][1]);
    let out = std::env::temp_dir().join("embdistill-report");
    write_report(&report, &out)?;
    println!("report written to {}", out.display());
    Ok(())
}
