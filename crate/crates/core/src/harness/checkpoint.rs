//! Student checkpoints: `<stem>.bin` holds the parameters as little-endian
//! f32 in layout order, `<stem>.json` the configs needed to rebuild and
//! report on the model.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distill::{MatchingMode, TrainConfig};
use crate::error::{Error, Result};
use crate::frontend::SpectrogramConfig;
use crate::students::{param_count, StudentConfig, StudentModel};
use crate::teacher::TeacherSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model_id: String,
    pub student: StudentConfig,
    pub frontend: SpectrogramConfig,
    pub teacher: TeacherSpec,
    pub mode: MatchingMode,
    pub train: TrainConfig,
    pub advance_s: f64,
    /// Source tags of the distillation corpora.
    pub corpora: Vec<String>,
    pub param_count: usize,
    pub root_seed: u64,
    /// A/B group label, if the model belongs to a declared comparison.
    #[serde(default)]
    pub group: Option<String>,
    /// Models in different groups with the same key are paired.
    #[serde(default)]
    pub pair_key: Option<String>,
    pub final_loss: Option<f64>,
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

pub fn param_bytes(model: &StudentModel<f32>) -> Vec<u8> {
    model.params().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn save_checkpoint(stem: &Path, header: &CheckpointHeader, model: &StudentModel<f32>) -> Result<()> {
    if header.student != *model.config() {
        return Err(Error::Config("checkpoint header does not describe the model".into()));
    }
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(with_ext(stem, "bin"), param_bytes(model))?;
    fs::write(with_ext(stem, "json"), serde_json::to_vec_pretty(header)?)?;
    Ok(())
}

pub fn read_header(stem: &Path) -> Result<CheckpointHeader> {
    let path = with_ext(stem, "json");
    if !path.exists() {
        let id = stem.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return Err(Error::UnknownModel(id));
    }
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Loads a checkpoint, returning the header, the model and the raw
/// parameter bytes (the model part of cache fingerprints).
pub fn load_checkpoint(stem: &Path) -> Result<(CheckpointHeader, StudentModel<f32>, Vec<u8>)> {
    let header = read_header(stem)?;
    let bytes = fs::read(with_ext(stem, "bin"))?;
    let expected = param_count(&header.student)?;
    if bytes.len() != 4 * expected {
        return Err(Error::ShapeMismatch {
            context: "checkpoint parameter bytes",
            expected: 4 * expected,
            actual: bytes.len(),
        });
    }
    let params = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let model = StudentModel::from_params(&header.student, params)?;
    Ok((header, model, bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::PatchShape;
    use crate::students::{InputNorm, StudentFamily};

    #[test]
    fn round_trip_preserves_bits() {
        let cfg = StudentConfig {
            family: StudentFamily::AttentionLike,
            depth: 1,
            width: 4,
            embedding_dim: 3,
            seed: 5,
            input: PatchShape { frames: 12, bins: 6 },
            input_norm: InputNorm { mean: -2.0, std: 3.0 },
        };
        let model = StudentModel::init(&cfg).unwrap();
        let header = CheckpointHeader {
            model_id: "m".into(),
            student: cfg.clone(),
            frontend: SpectrogramConfig::default(),
            teacher: TeacherSpec::default(),
            mode: MatchingMode::Global,
            train: TrainConfig::default(),
            advance_s: 1.0,
            corpora: vec!["source-a".into()],
            param_count: model.param_count(),
            root_seed: 5,
            group: Some("a".into()),
            pair_key: Some("5".into()),
            final_loss: Some(0.5),
        };
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("models").join("m");
        save_checkpoint(&stem, &header, &model).unwrap();
        let (h, m, bytes) = load_checkpoint(&stem).unwrap();
        assert_eq!(h, header);
        assert_eq!(m.params(), model.params());
        assert_eq!(bytes, param_bytes(&model));
        assert!(matches!(
            load_checkpoint(&dir.path().join("nope")),
            Err(Error::UnknownModel(_))
        ));
        fs::write(with_ext(&stem, "bin"), [0u8; 8]).unwrap();
        assert!(matches!(load_checkpoint(&stem), Err(Error::ShapeMismatch { .. })));
    }
}
