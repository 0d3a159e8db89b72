//! Library-level flows across modules: manifests on disk through the
//! frontend, teacher and probes, and the embedding cache contract.

use std::path::Path;

use embdistill::embedding::EmbeddingVector;
use embdistill::error::Error;
use embdistill::frontend::{wav, LogMelFrontend, SpectrogramConfig, Waveform};
use embdistill::harness::cache::{cache_stem, fingerprint, CacheFile, CacheMeta};
use embdistill::harness::manifest::{
    ingest_manifest, DatasetManifest, ManifestHeader, ManifestRole, ManifestRow, Split,
};
use embdistill::probes::{evaluate_task, LabeledEmbeddings, TaskEmbeddings, TaskMetric};
use embdistill::teacher::TeacherSpec;

fn tone(hz: f32, seconds: f32, amp: f32) -> Waveform {
    let n = (seconds * 16_000.0) as usize;
    let s = (0..n)
        .map(|i| amp * (std::f32::consts::TAU * hz * i as f32 / 16_000.0).sin())
        .collect();
    Waveform::new(s, 16_000).unwrap()
}

/// A two-class task (low vs high tone) written as WAVs plus a manifest.
fn write_task(dir: &Path, per_split: usize) -> DatasetManifest {
    std::fs::create_dir_all(dir.join("clips")).unwrap();
    let mut rows = Vec::new();
    for split in Split::ALL {
        for i in 0..per_split {
            let high = i % 2 == 1;
            let hz = if high { 2000.0 } else { 300.0 } + 37.0 * i as f32;
            let id = format!("{}-{i}", split.name());
            let rel = format!("clips/{id}.wav");
            wav::write_wav(&dir.join(&rel), &tone(hz, 0.5 + 0.3 * (i % 5) as f32, 0.2)).unwrap();
            rows.push(ManifestRow {
                clip_id: id,
                clip_path: rel.into(),
                label: if high { "high" } else { "low" }.into(),
                split,
                source_tag: "tones".into(),
            });
        }
    }
    DatasetManifest {
        header: ManifestHeader {
            name: "tones".into(),
            role: ManifestRole::Eval,
            metric: TaskMetric::Accuracy,
            classes: vec!["low".into(), "high".into()],
        },
        rows,
        root: dir.to_path_buf(),
    }
}

#[test]
fn manifest_to_probe_result() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_task(dir.path(), 12);
    let path = dir.path().join("manifest.jsonl");
    manifest.write(&path).unwrap();
    let loaded = ingest_manifest(&path).unwrap();
    assert_eq!(loaded.header, manifest.header);
    assert_eq!(loaded.rows, manifest.rows);

    let fe = LogMelFrontend::new(SpectrogramConfig::default()).unwrap();
    let teacher = TeacherSpec::default().build(fe.patch_shape()).unwrap();
    let split = |s: Split| {
        let clips = loaded.load_split(s, 16_000).unwrap();
        let emb: Vec<EmbeddingVector> = clips
            .waves
            .iter()
            .map(|w| teacher.embed_clip(w, &fe, 2.0).unwrap())
            .collect();
        LabeledEmbeddings::new(&emb, clips.labels).unwrap()
    };
    let emb = TaskEmbeddings {
        train: split(Split::Train),
        dev: split(Split::Dev),
        test: split(Split::Test),
    };
    let r = evaluate_task(&emb, &loaded.task(), 0).unwrap();
    assert!(r.test.accuracy >= 0.9, "tone task accuracy {}", r.test.accuracy);
}

#[test]
fn manifest_errors_are_typed() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_task(dir.path(), 4);
    let path = dir.path().join("m.jsonl");

    let mut dup = manifest.clone();
    dup.rows[1].clip_id = dup.rows[0].clip_id.clone();
    dup.write(&path).unwrap();
    assert!(matches!(ingest_manifest(&path), Err(Error::DuplicateClip(_))));

    let mut no_test = manifest.clone();
    no_test.rows.retain(|r| r.split != Split::Test);
    no_test.write(&path).unwrap();
    assert!(matches!(ingest_manifest(&path), Err(Error::MissingSplit("test"))));

    let mut bad_label = manifest.clone();
    bad_label.rows[2].label = "middle".into();
    bad_label.write(&path).unwrap();
    assert!(matches!(ingest_manifest(&path), Err(Error::Manifest { line: 4, .. })));

    let mut missing_wav = manifest.clone();
    missing_wav.rows[0].clip_path = "clips/absent.wav".into();
    missing_wav.write(&path).unwrap();
    assert!(ingest_manifest(&path).is_err());

    std::fs::write(&path, "{\"name\":\"x\"}\n").unwrap();
    assert!(matches!(ingest_manifest(&path), Err(Error::Manifest { line: 1, .. })));
}

#[test]
fn cache_round_trip_and_staleness() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SpectrogramConfig::default();
    let fp = fingerprint(&cfg, 2.0, b"model");
    assert_ne!(fp, fingerprint(&cfg, 1.0, b"model"));
    assert_ne!(fp, fingerprint(&cfg, 2.0, b"other"));

    let vectors: Vec<EmbeddingVector> = (0..5)
        .map(|i| EmbeddingVector((0..3).map(|d| (i * 3 + d) as f32 * 0.25 - 1.0).collect()))
        .collect();
    let meta = CacheMeta {
        model_id: "m".into(),
        task: "t".into(),
        dims: 3,
        clip_ids: (0..5).map(|i| format!("c{i}")).collect(),
        fingerprint: fp.clone(),
    };
    let stem = cache_stem(dir.path(), "m", "t");
    CacheFile::new(meta, &vectors).unwrap().write(&stem).unwrap();

    let back = CacheFile::read_valid(&stem, &fp).unwrap().expect("fresh cache");
    assert_eq!(back.vectors(), vectors);
    assert_eq!(back.get("c3"), Some(vectors[3].clone()));
    assert!(CacheFile::read_valid(&stem, "stale").unwrap().is_none());
    assert!(CacheFile::read_valid(&cache_stem(dir.path(), "m", "u"), &fp).unwrap().is_none());

    let mut f32_path = stem.as_os_str().to_owned();
    f32_path.push(".f32");
    std::fs::write(&f32_path, [0u8; 7]).unwrap();
    assert!(matches!(CacheFile::read(&stem), Err(Error::ShapeMismatch { .. })));
}
