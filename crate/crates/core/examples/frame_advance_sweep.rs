//! Dev score of the dev-selected probe as the inference frame advance
//! changes, for the teacher on the pitch task.

use embdistill::embed::sweep_frame_advance;
use embdistill::frontend::{LogMelFrontend, SpectrogramConfig};
use embdistill::harness::experiment::TaskData;
use embdistill::harness::manifest::Split;
use embdistill::harness::synth::{split_clips, task_clips, SynthConfig, SynthTask};
use embdistill::teacher::TeacherSpec;

fn main() -> embdistill::Result<()> {
    let fe = LogMelFrontend::new(SpectrogramConfig::default())?;
    let teacher = TeacherSpec::default().build(fe.patch_shape())?;
    let cfg = SynthConfig {
        train_clips: 90,
        dev_clips: 45,
        test_clips: 15,
        ..SynthConfig::default()
    };
    let clips = task_clips(SynthTask::Pitch, &cfg, teacher.as_ref(), &fe, 2.0)?;
    let task = TaskData {
        spec: SynthTask::Pitch.spec(),
        train: split_clips(&clips, Split::Train),
        dev: split_clips(&clips, Split::Dev),
        test: split_clips(&clips, Split::Test),
    };
    let rows = sweep_frame_advance(
        teacher.as_ref(),
        &task.train,
        &task.dev,
        &task.spec,
        &fe,
        &[0.25, 0.5, 1.0, 2.0, 4.0],
        0,
    )?;
    println!("advance  dev_metric  probe");
    for r in rows {
        println!("{:>7.2}  {:>10.3}  {}", r.advance_s, r.dev_metric, r.probe_type.name());
    }
    Ok(())
}
