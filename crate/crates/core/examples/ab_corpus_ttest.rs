//! Paired comparison of two distillation corpora. Each seed distills the
//! same student once on band-limited source-a clips and once on a half/half
//! mix with wide-band source-b clips; the paired t-test runs on brightness
//! test d′.

use embdistill::distill::{MatchingMode, TrainConfig};
use embdistill::frontend::{LogMelFrontend, SpectrogramConfig, Waveform};
use embdistill::harness::experiment::{distill_student, input_norm_from, FramedTask, TaskData};
use embdistill::harness::manifest::Split;
use embdistill::harness::report::{run_report, AbSpec, ModelEntry, ReportInput};
use embdistill::harness::synth::{corpus_clips, split_clips, task_clips, Source, SynthConfig, SynthTask};
use embdistill::students::desk_ladder;
use embdistill::teacher::TeacherSpec;

fn main() -> embdistill::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let fe = LogMelFrontend::new(SpectrogramConfig::default())?;
    let spec = TeacherSpec::default();
    let teacher = spec.build(fe.patch_shape())?;
    let synth = SynthConfig::default();
    let clips = task_clips(SynthTask::Brightness, &synth, teacher.as_ref(), &fe, 2.0)?;
    let task = TaskData {
        spec: SynthTask::Brightness.spec(),
        train: split_clips(&clips, Split::Train),
        dev: split_clips(&clips, Split::Dev),
        test: split_clips(&clips, Split::Test),
    };
    let framed = FramedTask::new(&task, &fe, 2.0)?;

    let a = corpus_clips(Source::SourceA, &synth, 500);
    let mut ab = a[..250].to_vec();
    ab.extend(corpus_clips(Source::SourceB, &synth, 250));

    let mut models = Vec::new();
    let mut rows = Vec::new();
    for seed in 0..seeds {
        for (group, corpus) in [("a", &a), ("ab", &ab)] {
            let mut cfg = desk_ladder(fe.patch_shape(), spec.embedding_dim, seed)[0].clone();
            let waves: Vec<Waveform> = corpus.iter().take(100).map(|c| c.1.clone()).collect();
            cfg.input_norm = input_norm_from(&waves, &fe, 2.0)?;
            let tc = TrainConfig {
                steps: 600,
                seed,
                ..TrainConfig::default()
            };
            let (model, _) = distill_student(&cfg, corpus, teacher.as_ref(), &fe, MatchingMode::Local, 2.0, &tc)?;
            let id = format!("{group}-{seed}");
            let r = framed.evaluate(&model, seed)?;
            println!("{id}: brightness test auc {:.3}", r.test.auc);
            rows.extend(r.rows(&id, &task.spec.name));
            models.push(ModelEntry {
                model_id: id,
                param_count: model.param_count(),
                group: Some(group.into()),
                pair_key: Some(seed.to_string()),
                root_seed: seed,
            });
        }
    }
    let ab_spec: AbSpec = "corpus:a:ab:brightness".parse()?;
    let report = run_report(&ReportInput {
        tasks: vec![task.spec.clone()],
        models,
        rows,
        ab_tests: vec![ab_spec],
    })?;
    let res = &report.ab_tests[0];
    for p in &res.pairs {
        println!("pair {}: a {:.3}  ab {:.3}  diff {:+.3}", p.pair_key, p.a, p.b, p.b - p.a);
    }
    match &res.test {
        Some(t) => println!("{t:?}"),
        None => println!("no test: {:?}", res.note),
    }
    Ok(())
}
