//! Command-line front end. Everything lives under one work directory:
//!
//! ```text
//! <workdir>/tasks/<task>/manifest.jsonl     probing tasks
//! <workdir>/corpora/<tag>/manifest.jsonl    distillation corpora
//! <workdir>/models/<id>.{bin,json}          student checkpoints
//! <workdir>/cache/<model>__<task>.{f32,json}
//! <workdir>/probes/<model>__<task>.jsonl
//! ```
//!
//! The model id `teacher` names the configured teacher.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::distill::MatchingMode;
use crate::embed::{embed_clips, sweep_frame_advance, write_sweep_csv, SplitClips};
use crate::embedding::{EmbeddingVector, PatchEmbedder};
use crate::error::{Error, Result};
use crate::frontend::{wav, LogMelFrontend, LogMelPatch, Waveform};
use crate::probes::{evaluate_task, read_rows, write_rows, LabeledEmbeddings, TaskEmbeddings};
use crate::students::{size_mb, StudentConfig, StudentFamily};
use crate::teacher::{Teacher, TeacherKind, TeacherSpec};

use super::cache::{cache_stem, fingerprint, CacheFile, CacheMeta};
use super::checkpoint::{load_checkpoint, read_header, save_checkpoint, CheckpointHeader};
use super::config::RunConfig;
use super::experiment::{distill_student, input_norm_from};
use super::manifest::{ingest_manifest, DatasetManifest, ManifestRole, Split};
use super::report::{run_report, write_report, AbSpec, ModelEntry, ReportInput};
use super::synth::build_synthetic_benchmark;

pub const TEACHER_ID: &str = "teacher";

/// Clips used to estimate a student's input normalization.
const NORM_CLIPS: usize = 100;

#[derive(Debug, Parser)]
#[command(name = "embdistill", version, about = "Distill speech embedding students and probe them")]
pub struct Cli {
    /// Root of the task, model, cache and probe directories.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    /// Run configuration JSON; defaults apply to absent fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the synthetic benchmark (WAVs and manifests).
    Synth {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a student against the teacher.
    Distill(DistillArgs),
    /// Embed every clip of a task and fill the embedding cache.
    Embed {
        #[arg(long)]
        model: String,
        #[arg(long)]
        task: String,
        #[arg(long)]
        advance: Option<f64>,
    },
    /// Fit the probes on train, select on dev, score test.
    Probe {
        #[arg(long)]
        model: String,
        #[arg(long)]
        task: String,
        #[arg(long)]
        advance: Option<f64>,
    },
    /// Dev score of the dev-selected probe at each frame advance.
    SweepAdvance {
        #[arg(long)]
        model: String,
        #[arg(long)]
        task: String,
        /// Comma-separated advances in seconds.
        #[arg(long, value_delimiter = ',', required = true)]
        advances: Vec<f64>,
    },
    /// Tables, size curve, Kendall table, t-tests and robustness.
    Report {
        #[arg(long, value_delimiter = ',', required = true)]
        models: Vec<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        tasks: Vec<String>,
        /// Output directory; relative paths resolve against the workdir.
        #[arg(long)]
        out: PathBuf,
        /// A/B comparison `name:group_a:group_b[:task]`; repeatable.
        #[arg(long)]
        ab: Vec<String>,
    },
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub model_id: String,
    #[arg(long)]
    pub mode: Option<MatchingMode>,
    /// Teacher kind or a TeacherSpec JSON file.
    #[arg(long)]
    pub teacher: Option<String>,
    #[arg(long)]
    pub student_family: Option<StudentFamily>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Corpus tag under `corpora/` or a manifest path; repeatable.
    #[arg(long, default_value = "source-b")]
    pub corpus: Vec<String>,
    /// Use only the first N clips of each corpus.
    #[arg(long)]
    pub clips_per_corpus: Option<usize>,
    #[arg(long)]
    pub group: Option<String>,
    #[arg(long)]
    pub pair_key: Option<String>,
}

/// Layout helper for a work directory.
#[derive(Debug, Clone)]
pub struct Workdir(pub PathBuf);

impl Workdir {
    pub fn task_manifest(&self, task: &str) -> PathBuf {
        self.0.join("tasks").join(task).join("manifest.jsonl")
    }

    pub fn corpus_manifest(&self, spec: &str) -> PathBuf {
        let p = PathBuf::from(spec);
        if p.extension().is_some_and(|e| e == "jsonl") {
            p
        } else {
            self.0.join("corpora").join(spec).join("manifest.jsonl")
        }
    }

    pub fn model_stem(&self, id: &str) -> PathBuf {
        self.0.join("models").join(id)
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.0.join("cache")
    }

    pub fn probe_rows(&self, model: &str, task: &str) -> PathBuf {
        self.0.join("probes").join(format!("{model}__{task}.jsonl"))
    }
}

/// A model that can embed clips, with the bytes that identify it.
pub struct LoadedModel {
    pub id: String,
    pub embedder: Box<dyn PatchEmbedder>,
    pub param_count: usize,
    pub identity: Vec<u8>,
    pub header: Option<CheckpointHeader>,
}

fn teacher_param_count(spec: &TeacherSpec, input_len: usize) -> usize {
    match spec.kind {
        TeacherKind::SyntheticLinear => spec.embedding_dim * input_len,
        TeacherKind::SyntheticMlp => spec.embedding_dim * (input_len + spec.embedding_dim),
        TeacherKind::ExternalPrecomputed => 0,
    }
}

struct TeacherEmbedder(Box<dyn Teacher>);

impl PatchEmbedder for TeacherEmbedder {
    fn embedding_dim(&self) -> usize {
        self.0.embedding_dim()
    }

    fn embed_patch(&self, p: &LogMelPatch) -> Result<EmbeddingVector> {
        self.0.embed_patch(p)
    }
}

pub fn load_model(wd: &Workdir, id: &str, cfg: &RunConfig, frontend: &LogMelFrontend) -> Result<LoadedModel> {
    if id == TEACHER_ID {
        let teacher = cfg.teacher.build(frontend.patch_shape())?;
        return Ok(LoadedModel {
            id: id.into(),
            embedder: Box::new(TeacherEmbedder(teacher)),
            param_count: teacher_param_count(&cfg.teacher, frontend.patch_shape().len()),
            identity: serde_json::to_vec(&cfg.teacher)?,
            header: None,
        });
    }
    let (header, model, bytes) = load_checkpoint(&wd.model_stem(id))?;
    if header.frontend != *frontend.config() {
        return Err(Error::Config(format!(
            "model {id} was trained with a different frontend config"
        )));
    }
    Ok(LoadedModel {
        id: id.into(),
        embedder: Box::new(model),
        param_count: header.param_count,
        identity: bytes,
        header: Some(header),
    })
}

fn load_task(wd: &Workdir, task: &str) -> Result<DatasetManifest> {
    let path = wd.task_manifest(task);
    if !path.exists() {
        return Err(Error::InvalidInput(format!("no manifest for task {task:?} at {}", path.display())));
    }
    let m = ingest_manifest(&path)?;
    if m.header.role != ManifestRole::Eval {
        return Err(Error::Config(format!("{task} is not an evaluation manifest")));
    }
    Ok(m)
}

/// Clip embeddings for every row of `manifest`, from the cache when its
/// fingerprint matches, otherwise computed and written back.
pub fn cached_embeddings(
    wd: &Workdir,
    model: &LoadedModel,
    manifest: &DatasetManifest,
    frontend: &LogMelFrontend,
    advance_s: f64,
) -> Result<(CacheFile, bool)> {
    let stem = cache_stem(&wd.cache_dir(), &model.id, &manifest.header.name);
    let fp = fingerprint(frontend.config(), advance_s, &model.identity);
    let ids: Vec<String> = manifest.rows.iter().map(|r| r.clip_id.clone()).collect();
    if let Some(c) = CacheFile::read_valid(&stem, &fp)? {
        if c.meta.clip_ids == ids {
            return Ok((c, true));
        }
    }
    let sr = frontend.config().sample_rate;
    let waves: Vec<Waveform> = manifest
        .rows
        .iter()
        .map(|r| wav::read_wav(&manifest.resolve(r), sr))
        .collect::<Result<_>>()?;
    let vectors = embed_clips(model.embedder.as_ref(), &waves, frontend, advance_s)?;
    let file = CacheFile::new(
        CacheMeta {
            model_id: model.id.clone(),
            task: manifest.header.name.clone(),
            dims: model.embedder.embedding_dim(),
            clip_ids: ids,
            fingerprint: fp,
        },
        &vectors,
    )?;
    file.write(&stem)?;
    Ok((file, false))
}

fn split_embeddings(manifest: &DatasetManifest, cache: &CacheFile) -> Result<TaskEmbeddings> {
    let take = |split: Split| -> Result<LabeledEmbeddings> {
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for (i, row) in manifest.rows.iter().enumerate() {
            if row.split == split {
                vectors.push(EmbeddingVector(cache.row(i).to_vec()));
                labels.push(manifest.label_index(&row.label).unwrap_or(0));
            }
        }
        if vectors.is_empty() {
            return Err(Error::MissingSplit(split.name()));
        }
        LabeledEmbeddings::new(&vectors, labels)
    };
    Ok(TaskEmbeddings {
        train: take(Split::Train)?,
        dev: take(Split::Dev)?,
        test: take(Split::Test)?,
    })
}

fn resolve_teacher(arg: &str) -> Result<TeacherSpec> {
    if let Ok(kind) = arg.parse::<TeacherKind>() {
        return Ok(TeacherSpec {
            kind,
            ..TeacherSpec::default()
        });
    }
    let text = std::fs::read_to_string(arg)?;
    Ok(serde_json::from_str(&text)?)
}

fn load_corpus(wd: &Workdir, spec: &str, limit: Option<usize>, sr: u32) -> Result<(String, Vec<(String, Waveform)>)> {
    let m = ingest_manifest(&wd.corpus_manifest(spec))?;
    let mut rows: Vec<_> = m.rows.iter().collect();
    if let Some(n) = limit {
        rows.truncate(n);
    }
    let clips = rows
        .into_iter()
        .map(|r| Ok((r.clip_id.clone(), wav::read_wav(&m.resolve(r), sr)?)))
        .collect::<Result<_>>()?;
    Ok((m.header.name.clone(), clips))
}

fn distill(wd: &Workdir, mut cfg: RunConfig, a: &DistillArgs) -> Result<serde_json::Value> {
    if let Some(m) = a.mode {
        cfg.mode = m;
    }
    if let Some(t) = &a.teacher {
        cfg.teacher = resolve_teacher(t)?;
    }
    if let Some(f) = a.student_family {
        cfg.student.family = f;
    }
    if let Some(d) = a.depth {
        cfg.student.depth = d;
    }
    if let Some(w) = a.width {
        cfg.student.width = w;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
        cfg.train.seed = s;
    }
    if let Some(s) = a.steps {
        cfg.train.steps = s;
    }
    cfg.validate()?;
    let frontend = LogMelFrontend::new(cfg.frontend.clone())?;
    let teacher = cfg.teacher.build(frontend.patch_shape())?;
    let mut corpora = Vec::new();
    let mut clips = Vec::new();
    for spec in &a.corpus {
        let (name, c) = load_corpus(wd, spec, a.clips_per_corpus, cfg.frontend.sample_rate)?;
        corpora.push(name);
        clips.extend(c);
    }
    if clips.is_empty() {
        return Err(Error::MissingSplit("train"));
    }
    let waves: Vec<Waveform> = clips.iter().take(NORM_CLIPS).map(|c| c.1.clone()).collect();
    let student = StudentConfig {
        family: cfg.student.family,
        depth: cfg.student.depth,
        width: cfg.student.width,
        embedding_dim: cfg.teacher.embedding_dim,
        seed: cfg.seed,
        input: frontend.patch_shape(),
        input_norm: input_norm_from(&waves, &frontend, cfg.advance_s)?,
    };
    let (model, curve) = distill_student(
        &student,
        &clips,
        teacher.as_ref(),
        &frontend,
        cfg.mode,
        cfg.advance_s,
        &cfg.train,
    )?;
    let header = CheckpointHeader {
        model_id: a.model_id.clone(),
        student,
        frontend: cfg.frontend.clone(),
        teacher: cfg.teacher.clone(),
        mode: cfg.mode,
        train: cfg.train.clone(),
        advance_s: cfg.advance_s,
        corpora,
        param_count: model.param_count(),
        root_seed: cfg.seed,
        group: a.group.clone(),
        pair_key: a.pair_key.clone(),
        final_loss: curve.last(),
    };
    let stem = wd.model_stem(&a.model_id);
    save_checkpoint(&stem, &header, &model)?;
    let mut loss_path = stem.as_os_str().to_owned();
    loss_path.push(".loss.csv");
    curve.write_csv(Path::new(&loss_path))?;
    let (lead, trail) = curve.leading_trailing(100);
    Ok(json!({
        "model_id": a.model_id,
        "param_count": header.param_count,
        "size_mb": size_mb(header.param_count),
        "leading_loss": lead,
        "trailing_loss": trail,
    }))
}

/// Runs one parsed command and returns its JSON summary.
pub fn run(cli: &Cli) -> Result<serde_json::Value> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let wd = Workdir(cli.workdir.clone());
    match &cli.command {
        Command::Synth { seed } => {
            let mut synth = cfg.synth.clone();
            if let Some(s) = seed {
                synth.seed = *s;
            }
            let frontend = LogMelFrontend::new(cfg.frontend.clone())?;
            let teacher = cfg.teacher.build(frontend.patch_shape())?;
            let layout = build_synthetic_benchmark(&wd.0, &synth, teacher.as_ref(), &frontend, cfg.advance_s)?;
            Ok(json!({
                "tasks": layout.tasks.iter().map(|(n, _)| n).collect::<Vec<_>>(),
                "corpora": layout.corpora.iter().map(|(n, _)| n).collect::<Vec<_>>(),
                "seed": synth.seed,
            }))
        }
        Command::Distill(a) => distill(&wd, cfg, a),
        Command::Embed { model, task, advance } => {
            let frontend = LogMelFrontend::new(cfg.frontend.clone())?;
            let advance_s = advance.unwrap_or(cfg.advance_s);
            let m = load_model(&wd, model, &cfg, &frontend)?;
            let manifest = load_task(&wd, task)?;
            let (cache, warm) = cached_embeddings(&wd, &m, &manifest, &frontend, advance_s)?;
            Ok(json!({
                "model": model,
                "task": task,
                "clips": cache.len(),
                "dims": cache.meta.dims,
                "fingerprint": cache.meta.fingerprint,
                "cache_hit": warm,
            }))
        }
        Command::Probe { model, task, advance } => {
            let frontend = LogMelFrontend::new(cfg.frontend.clone())?;
            let advance_s = advance.unwrap_or(cfg.advance_s);
            let m = load_model(&wd, model, &cfg, &frontend)?;
            let manifest = load_task(&wd, task)?;
            let (cache, _) = cached_embeddings(&wd, &m, &manifest, &frontend, advance_s)?;
            let emb = split_embeddings(&manifest, &cache)?;
            let result = evaluate_task(&emb, &manifest.task(), cfg.seed)?;
            let rows = result.rows(model, task);
            let path = wd.probe_rows(model, task);
            std::fs::create_dir_all(path.parent().expect("probe dir"))?;
            write_rows(&path, &rows)?;
            Ok(serde_json::to_value(rows.iter().find(|r| r.selected))?)
        }
        Command::SweepAdvance { model, task, advances } => {
            let frontend = LogMelFrontend::new(cfg.frontend.clone())?;
            let m = load_model(&wd, model, &cfg, &frontend)?;
            let manifest = load_task(&wd, task)?;
            let sr = frontend.config().sample_rate;
            let train: SplitClips = manifest.load_split(Split::Train, sr)?;
            let dev: SplitClips = manifest.load_split(Split::Dev, sr)?;
            let rows = sweep_frame_advance(
                m.embedder.as_ref(),
                &train,
                &dev,
                &manifest.task(),
                &frontend,
                advances,
                cfg.seed,
            )?;
            let path = wd.0.join("probes").join(format!("{model}__{task}.sweep.csv"));
            std::fs::create_dir_all(path.parent().expect("probe dir"))?;
            write_sweep_csv(&path, &rows)?;
            Ok(serde_json::to_value(rows)?)
        }
        Command::Report { models, tasks, out, ab } => {
            let mut specs = Vec::new();
            for t in tasks {
                specs.push(load_task(&wd, t)?.task());
            }
            let mut entries = Vec::new();
            let mut rows = Vec::new();
            for id in models {
                let entry = if id == TEACHER_ID {
                    let frontend = LogMelFrontend::new(cfg.frontend.clone())?;
                    ModelEntry {
                        model_id: id.clone(),
                        param_count: teacher_param_count(&cfg.teacher, frontend.patch_shape().len()),
                        group: None,
                        pair_key: None,
                        root_seed: cfg.seed,
                    }
                } else {
                    let h = read_header(&wd.model_stem(id))?;
                    ModelEntry {
                        model_id: id.clone(),
                        param_count: h.param_count,
                        group: h.group,
                        pair_key: h.pair_key,
                        root_seed: h.root_seed,
                    }
                };
                entries.push(entry);
                for t in tasks {
                    let path = wd.probe_rows(id, t);
                    if path.exists() {
                        rows.extend(read_rows(&path)?);
                    }
                }
            }
            let ab_tests = ab.iter().map(|s| s.parse::<AbSpec>()).collect::<Result<_>>()?;
            let input = ReportInput {
                tasks: specs,
                models: entries,
                rows,
                ab_tests,
            };
            let report = run_report(&input)?;
            let out = wd.0.join(out);
            write_report(&report, &out)?;
            Ok(json!({
                "out": out,
                "models": report.models.len(),
                "gaps": report.gaps,
            }))
        }
    }
}

/// Parses `args`, runs, and returns the process exit code. Results go to
/// stdout as JSON; failures go to stderr as `{"error": kind, "message": ...}`.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", json!({"error": "usage", "message": e.to_string()}));
            return 2;
        }
    };
    match run(&cli) {
        Ok(v) => {
            println!("{v}");
            0
        }
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            1
        }
    }
}
