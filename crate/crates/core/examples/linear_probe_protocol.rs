//! The probe protocol on teacher embeddings: three linear probes fitted on
//! train, one chosen on dev, a single read of test.

use embdistill::frontend::{LogMelFrontend, SpectrogramConfig};
use embdistill::harness::experiment::{synthetic_tasks, FramedTask};
use embdistill::harness::synth::SynthConfig;
use embdistill::probes::evaluate_task;
use embdistill::teacher::TeacherSpec;

fn main() -> embdistill::Result<()> {
    let fe = LogMelFrontend::new(SpectrogramConfig::default())?;
    let teacher = TeacherSpec::default().build(fe.patch_shape())?;
    let cfg = SynthConfig {
        train_clips: 80,
        dev_clips: 40,
        test_clips: 40,
        ..SynthConfig::default()
    };
    for task in synthetic_tasks(&cfg, teacher.as_ref(), &fe, 2.0)? {
        let framed = FramedTask::new(&task, &fe, 2.0)?;
        let emb = framed.embeddings(teacher.as_ref())?;
        let r = evaluate_task(&emb, &task.spec, 0)?;
        let dev: Vec<String> = r.candidates.iter().map(|(v, s)| format!("{}={:.3}", v.name(), s.metric)).collect();
        println!(
            "{:<13} dev [{}] -> {} | test {:?} {:.3} (auc {:.3})",
            task.spec.name,
            dev.join(" "),
            r.variant.name(),
            task.spec.metric,
            r.test.metric,
            r.test.auc
        );
    }
    Ok(())
}
