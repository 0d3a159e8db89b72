//! Linear-probe evaluation: fit three probe variants on train-split
//! embeddings, pick one on dev, score only that one on test.

pub mod lbfgs;
pub mod linear;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::metrics;
pub use lbfgs::{LbfgsOptions, LbfgsReport};
pub use linear::{fit_lda, fit_logreg, LinearClassifier, Standardizer};

pub const STRONG_L2: f64 = 1.0;
pub const WEAK_L2: f64 = 1e-3;
pub const LDA_SHRINKAGE: f64 = 0.1;

/// The three probe variants in tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeVariant {
    LogregL2Strong,
    LogregL2Weak,
    Lda,
}

impl ProbeVariant {
    pub const ALL: [ProbeVariant; 3] = [
        ProbeVariant::LogregL2Strong,
        ProbeVariant::LogregL2Weak,
        ProbeVariant::Lda,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProbeVariant::LogregL2Strong => "logreg-l2-strong",
            ProbeVariant::LogregL2Weak => "logreg-l2-weak",
            ProbeVariant::Lda => "lda",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub variant: ProbeVariant,
    /// L2 strength for logistic regression, shrinkage for LDA.
    pub regularization: f64,
    /// Fits are deterministic; the seed is carried for provenance.
    pub seed: u64,
}

impl ProbeConfig {
    pub fn standard(variant: ProbeVariant, seed: u64) -> Self {
        let regularization = match variant {
            ProbeVariant::LogregL2Strong => STRONG_L2,
            ProbeVariant::LogregL2Weak => WEAK_L2,
            ProbeVariant::Lda => LDA_SHRINKAGE,
        };
        Self {
            variant,
            regularization,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.variant {
            ProbeVariant::Lda => (0.0..=1.0).contains(&self.regularization),
            _ => self.regularization > 0.0 && self.regularization.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid regularization {} for {}",
                self.regularization,
                self.variant.name()
            )))
        }
    }
}

/// How a task scores probes on dev and test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskMetric {
    #[default]
    Accuracy,
    /// Binary task scored by equal error rate on the class-1 posterior.
    Eer,
}

impl TaskMetric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, TaskMetric::Accuracy)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub metric: TaskMetric,
    pub num_classes: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledEmbeddings {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledEmbeddings {
    pub fn new(vectors: &[EmbeddingVector], labels: Vec<usize>) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                context: "embeddings vs labels",
                expected: vectors.len(),
                actual: labels.len(),
            });
        }
        Ok(Self {
            rows: vectors
                .iter()
                .map(|v| v.0.iter().map(|&x| x as f64).collect())
                .collect(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TaskEmbeddings {
    pub train: LabeledEmbeddings,
    pub dev: LabeledEmbeddings,
    pub test: LabeledEmbeddings,
}

pub fn train_probe(data: &LabeledEmbeddings, num_classes: usize, pc: &ProbeConfig) -> Result<LinearClassifier> {
    pc.validate()?;
    match pc.variant {
        ProbeVariant::LogregL2Strong | ProbeVariant::LogregL2Weak => fit_logreg(
            &data.rows,
            &data.labels,
            num_classes,
            pc.regularization,
            LbfgsOptions::default(),
        ),
        ProbeVariant::Lda => fit_lda(&data.rows, &data.labels, num_classes, pc.regularization),
    }
}

/// Scores of one probe on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitScores {
    /// The task metric: accuracy, or EER for eer tasks.
    pub metric: f64,
    pub accuracy: f64,
    /// Binary AUC, or macro one-vs-rest AUC for multiclass tasks.
    pub auc: f64,
    /// Per-example class posteriors.
    pub scores: Vec<Vec<f64>>,
}

impl SplitScores {
    /// Accuracy-like quantity used for ordering: accuracy, or 1 − EER.
    pub fn acc_like(&self, metric: TaskMetric) -> f64 {
        match metric {
            TaskMetric::Accuracy => self.accuracy,
            TaskMetric::Eer => 1.0 - self.metric,
        }
    }
}

pub fn score_split(clf: &LinearClassifier, data: &LabeledEmbeddings, task: &TaskSpec) -> Result<SplitScores> {
    if data.is_empty() {
        return Err(Error::InvalidInput("cannot score an empty split".into()));
    }
    let scores: Vec<Vec<f64>> = data.rows.iter().map(|r| clf.scores(r)).collect();
    let predicted: Vec<usize> = data.rows.iter().map(|r| clf.predict(r)).collect();
    let accuracy = metrics::accuracy(&predicted, &data.labels);
    let auc = if task.num_classes == 2 {
        let s: Vec<f64> = scores.iter().map(|p| p[1]).collect();
        let l: Vec<bool> = data.labels.iter().map(|&y| y == 1).collect();
        metrics::roc_auc(&s, &l)?
    } else {
        metrics::macro_ovr_auc(&scores, &data.labels, task.num_classes)?
    };
    let metric = match task.metric {
        TaskMetric::Accuracy => accuracy,
        TaskMetric::Eer => {
            if task.num_classes != 2 {
                return Err(Error::Config(format!(
                    "task {} uses eer but has {} classes",
                    task.name, task.num_classes
                )));
            }
            let s: Vec<f64> = scores.iter().map(|p| p[1]).collect();
            let l: Vec<bool> = data.labels.iter().map(|&y| y == 1).collect();
            metrics::equal_error_rate(&s, &l)?
        }
    };
    Ok(SplitScores {
        metric,
        accuracy,
        auc,
        scores,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub variant: ProbeVariant,
    pub classifier: LinearClassifier,
    pub dev: SplitScores,
}

/// Fits every variant on train and returns them with the index of the
/// dev-best one. Ties keep the earlier variant. Reads no test data.
pub fn select_on_dev(
    train: &LabeledEmbeddings,
    dev: &LabeledEmbeddings,
    task: &TaskSpec,
    seed: u64,
) -> Result<(Vec<Candidate>, usize)> {
    if train.is_empty() {
        return Err(Error::MissingSplit("train"));
    }
    if dev.is_empty() {
        return Err(Error::MissingSplit("dev"));
    }
    let mut candidates = Vec::with_capacity(3);
    for variant in ProbeVariant::ALL {
        let classifier = train_probe(train, task.num_classes, &ProbeConfig::standard(variant, seed))?;
        let dev = score_split(&classifier, dev, task)?;
        candidates.push(Candidate {
            variant,
            classifier,
            dev,
        });
    }
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        let (a, b) = (c.dev.metric, candidates[best].dev.metric);
        let better = if task.metric.higher_is_better() { a > b } else { a < b };
        if better {
            best = i;
        }
    }
    Ok((candidates, best))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeResult {
    pub variant: ProbeVariant,
    pub dev: SplitScores,
    pub test: SplitScores,
    pub test_labels: Vec<usize>,
    /// Dev scores of every variant, in tie-break order.
    pub candidates: Vec<(ProbeVariant, SplitScores)>,
}

impl ProbeResult {
    pub fn dev_score(&self) -> f64 {
        self.dev.metric
    }

    pub fn test_score(&self) -> f64 {
        self.test.metric
    }
}

/// Dev-selected probe and its test scores.
pub fn evaluate_task(emb: &TaskEmbeddings, task: &TaskSpec, seed: u64) -> Result<ProbeResult> {
    if emb.test.is_empty() {
        return Err(Error::MissingSplit("test"));
    }
    let (candidates, best) = select_on_dev(&emb.train, &emb.dev, task, seed)?;
    let chosen = &candidates[best];
    let test = score_split(&chosen.classifier, &emb.test, task)?;
    Ok(ProbeResult {
        variant: chosen.variant,
        dev: chosen.dev.clone(),
        test,
        test_labels: emb.test.labels.clone(),
        candidates: candidates.into_iter().map(|c| (c.variant, c.dev)).collect(),
    })
}

/// One JSON Lines row per (model, task, variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub model_id: String,
    pub task: String,
    pub variant: ProbeVariant,
    pub selected: bool,
    pub dev_score: f64,
    pub dev_accuracy: f64,
    pub dev_auc: f64,
    pub test_score: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub test_auc: Option<f64>,
}

impl ProbeResult {
    pub fn rows(&self, model_id: &str, task: &str) -> Vec<ProbeRow> {
        self.candidates
            .iter()
            .map(|(variant, dev)| {
                let selected = *variant == self.variant;
                ProbeRow {
                    model_id: model_id.to_string(),
                    task: task.to_string(),
                    variant: *variant,
                    selected,
                    dev_score: dev.metric,
                    dev_accuracy: dev.accuracy,
                    dev_auc: dev.auc,
                    test_score: selected.then_some(self.test.metric),
                    test_accuracy: selected.then_some(self.test.accuracy),
                    test_auc: selected.then_some(self.test.auc),
                }
            })
            .collect()
    }
}

pub fn write_rows(path: &Path, rows: &[ProbeRow]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ProbeRow>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn task(metric: TaskMetric, c: usize) -> TaskSpec {
        TaskSpec {
            name: "t".into(),
            metric,
            num_classes: c,
        }
    }

    fn blobs(n: usize, d: usize, c: usize, sep: f64, seed: u64) -> LabeledEmbeddings {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = i % c;
            let row = (0..d)
                .map(|k| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z + if k == y { sep } else { 0.0 }
                })
                .collect();
            rows.push(row);
            labels.push(y);
        }
        LabeledEmbeddings { rows, labels }
    }

    #[test]
    fn separable_1d_points_are_classified() {
        let data = LabeledEmbeddings {
            rows: vec![vec![-1.0], vec![1.0]],
            labels: vec![0, 1],
        };
        for v in ProbeVariant::ALL {
            if v == ProbeVariant::Lda {
                continue; // zero within-class scatter with one point per class
            }
            let clf = train_probe(&data, 2, &ProbeConfig::standard(v, 0)).unwrap();
            assert_eq!(clf.predict(&[-1.0]), 0);
            assert_eq!(clf.predict(&[1.0]), 1);
        }
        assert!(matches!(
            train_probe(&data, 2, &ProbeConfig::standard(ProbeVariant::Lda, 0)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn duplicated_training_set_gives_the_same_decisions() {
        let data = blobs(60, 4, 3, 1.5, 1);
        let mut dup = data.clone();
        dup.rows.extend(data.rows.clone());
        dup.labels.extend(data.labels.clone());
        let probe = blobs(200, 4, 3, 1.5, 2);
        for v in ProbeVariant::ALL {
            let pc = ProbeConfig::standard(v, 0);
            let a = train_probe(&data, 3, &pc).unwrap();
            let b = train_probe(&dup, 3, &pc).unwrap();
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert!((x - y).abs() < 1e-4, "{v:?}: {x} vs {y}");
            }
            for r in &probe.rows {
                assert_eq!(a.predict(r), b.predict(r));
            }
        }
    }

    #[test]
    fn shuffled_labels_give_chance_accuracy() {
        let t = task(TaskMetric::Accuracy, 2);
        let mut accs = Vec::new();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mut split = |n: usize| {
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..4).map(|_| StandardNormal.sample(&mut rng)).collect())
                    .collect();
                let labels = (0..n).map(|i| i % 2).collect();
                LabeledEmbeddings { rows, labels }
            };
            let emb = TaskEmbeddings {
                train: split(100),
                dev: split(100),
                test: split(200),
            };
            accs.push(evaluate_task(&emb, &t, seed).unwrap().test.accuracy);
        }
        // binomial standard error of the 20-seed mean
        let sigma = (0.25f64 / (200.0 * 20.0)).sqrt();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() <= 3.0 * sigma, "{mean}");
    }

    #[test]
    fn ties_follow_variant_order_and_test_labels_never_matter() {
        // perfectly separable blobs: every variant reaches dev accuracy 1.0
        let t = task(TaskMetric::Accuracy, 2);
        let emb = TaskEmbeddings {
            train: blobs(40, 2, 2, 20.0, 3),
            dev: blobs(40, 2, 2, 20.0, 4),
            test: blobs(40, 2, 2, 20.0, 5),
        };
        let r = evaluate_task(&emb, &t, 0).unwrap();
        assert!(r.candidates.iter().all(|(_, s)| s.metric == 1.0));
        assert_eq!(r.variant, ProbeVariant::LogregL2Strong);

        let mut permuted = emb.clone();
        permuted.test.labels.reverse();
        let r2 = evaluate_task(&permuted, &t, 0).unwrap();
        assert_eq!(r.variant, r2.variant);
        assert_eq!(r.candidates, r2.candidates);
    }

    #[test]
    fn eer_tasks_select_the_lowest_dev_eer() {
        let t = task(TaskMetric::Eer, 2);
        let emb = TaskEmbeddings {
            train: blobs(80, 6, 2, 1.0, 6),
            dev: blobs(80, 6, 2, 1.0, 7),
            test: blobs(80, 6, 2, 1.0, 8),
        };
        let r = evaluate_task(&emb, &t, 0).unwrap();
        let best = r
            .candidates
            .iter()
            .map(|(_, s)| s.metric)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.dev_score(), best);
        let rows = r.rows("m", "t");
        assert_eq!(rows.len(), 3);
        assert_eq!(rows.iter().filter(|r| r.selected).count(), 1);
        assert!(rows.iter().all(|row| row.selected == row.test_score.is_some()));
    }

    #[test]
    fn missing_splits_are_reported() {
        let t = task(TaskMetric::Accuracy, 2);
        let full = blobs(20, 2, 2, 3.0, 9);
        let emb = TaskEmbeddings {
            train: full.clone(),
            dev: LabeledEmbeddings::default(),
            test: full,
        };
        assert!(matches!(evaluate_task(&emb, &t, 0), Err(Error::MissingSplit("dev"))));
    }

    #[test]
    fn rows_round_trip_through_jsonl() {
        let t = task(TaskMetric::Accuracy, 3);
        let emb = TaskEmbeddings {
            train: blobs(60, 3, 3, 2.0, 10),
            dev: blobs(30, 3, 3, 2.0, 11),
            test: blobs(30, 3, 3, 2.0, 12),
        };
        let rows = evaluate_task(&emb, &t, 0).unwrap().rows("m", "t");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        write_rows(&p, &rows).unwrap();
        assert_eq!(read_rows(&p).unwrap(), rows);
    }
}
