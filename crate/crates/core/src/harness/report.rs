//! Report generation from probe rows and a model registry: the per-task
//! table, the size-vs-average-d′ curve, the Kendall cross-table of four
//! model orderings, paired t-tests for A/B groups and a leave-one-task-out
//! robustness table.
//!
//! Outputs are byte-deterministic: models are sorted by (param_count,
//! model_id), tasks keep the declared order, floats use shortest round-trip
//! formatting.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::csv_err;
use crate::error::{Error, Result};
use crate::metrics::{average_d_prime, checked_d_prime, kendall_tau, paired_t_test, StatTestResult};
use crate::probes::{ProbeRow, ProbeVariant, TaskMetric, TaskSpec};
use crate::students::size_mb;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub model_id: String,
    pub param_count: usize,
    #[serde(default)]
    pub group: Option<String>,
    #[serde(default)]
    pub pair_key: Option<String>,
    pub root_seed: u64,
}

/// Compares `group_b` against `group_a`; a positive mean difference means
/// `group_b` scored higher. With `task` set the paired quantity is that
/// task's test d′, otherwise the average test d′.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbSpec {
    pub name: String,
    pub group_a: String,
    pub group_b: String,
    #[serde(default)]
    pub task: Option<String>,
}

impl std::str::FromStr for AbSpec {
    type Err = Error;

    /// `name:group_a:group_b[:task]`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            [name, a, b] | [name, a, b, _] if !name.is_empty() && !a.is_empty() && !b.is_empty() => {
                Ok(AbSpec {
                    name: name.to_string(),
                    group_a: a.to_string(),
                    group_b: b.to_string(),
                    task: parts.get(3).map(|t| t.to_string()),
                })
            }
            _ => Err(Error::Config(format!("A/B spec must be name:group_a:group_b[:task], got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportInput {
    pub tasks: Vec<TaskSpec>,
    pub models: Vec<ModelEntry>,
    pub rows: Vec<ProbeRow>,
    #[serde(default)]
    pub ab_tests: Vec<AbSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskCell {
    pub task: String,
    pub variant: ProbeVariant,
    pub dev_score: f64,
    pub dev_acc: f64,
    pub dev_auc: f64,
    pub dev_d_prime: Option<f64>,
    pub test_score: f64,
    pub test_acc: f64,
    pub test_auc: f64,
    pub test_d_prime: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model_id: String,
    pub param_count: usize,
    pub size_mb: f64,
    /// In task order; tasks without a selected probe row are absent.
    pub cells: Vec<TaskCell>,
    pub missing_tasks: Vec<String>,
    pub avg_d_prime_dev: Option<f64>,
    pub avg_d_prime_test: Option<f64>,
    pub avg_acc_dev: Option<f64>,
    pub avg_acc_test: Option<f64>,
    /// Highest dev average d′ among models of the same size.
    pub best: bool,
    /// Best at its size and above every smaller model on dev average d′.
    pub frontier: bool,
}

pub const ORDERINGS: [&str; 4] = ["d_prime_dev", "d_prime_test", "acc_dev", "acc_test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KendallTable {
    pub orderings: Vec<String>,
    /// Symmetric, unit diagonal; `None` where the coefficient is undefined.
    pub tau: Vec<Vec<Option<f64>>>,
    pub models_used: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbPair {
    pub pair_key: String,
    pub model_a: String,
    pub model_b: String,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbResult {
    pub spec: AbSpec,
    pub pairs: Vec<AbPair>,
    /// t-test of `b − a`.
    pub test: Option<StatTestResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub left_out: String,
    pub best_model: Option<String>,
    pub frontier: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the serialized report input.
    pub input_hash: String,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub provenance: Provenance,
    pub tasks: Vec<String>,
    pub models: Vec<ModelReport>,
    pub kendall: KendallTable,
    pub ab_tests: Vec<AbResult>,
    pub robustness: Vec<RobustnessRow>,
    /// Human-readable notes on missing or undefined entries.
    pub gaps: Vec<String>,
}

fn acc_like(metric: TaskMetric, score: f64, accuracy: f64) -> f64 {
    match metric {
        TaskMetric::Accuracy => accuracy,
        TaskMetric::Eer => 1.0 - score,
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per-size best and frontier flags from dev average d′; `models` must be
/// sorted by size.
fn mark_best(sizes: &[usize], dev: &[Option<f64>]) -> (Vec<bool>, Vec<bool>) {
    let n = sizes.len();
    let mut best = vec![false; n];
    let mut frontier = vec![false; n];
    let mut smaller_max = f64::NEG_INFINITY;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && sizes[j] == sizes[i] {
            j += 1;
        }
        let mut top: Option<usize> = None;
        for k in i..j {
            if let Some(v) = dev[k] {
                if top.is_none_or(|t| v > dev[t].unwrap_or(f64::NEG_INFINITY)) {
                    top = Some(k);
                }
            }
        }
        if let Some(t) = top {
            best[t] = true;
            let v = dev[t].unwrap_or(f64::NEG_INFINITY);
            frontier[t] = v > smaller_max;
            smaller_max = smaller_max.max(v);
        }
        i = j;
    }
    (best, frontier)
}

fn kendall_table(models: &[ModelReport]) -> KendallTable {
    let used: Vec<[f64; 4]> = models
        .iter()
        .filter_map(|m| {
            Some([m.avg_d_prime_dev?, m.avg_d_prime_test?, m.avg_acc_dev?, m.avg_acc_test?])
        })
        .collect();
    let mut tau = vec![vec![None; 4]; 4];
    let mut degenerate = false;
    for i in 0..4 {
        tau[i][i] = Some(1.0);
        for j in i + 1..4 {
            let a: Vec<f64> = used.iter().map(|r| r[i]).collect();
            let b: Vec<f64> = used.iter().map(|r| r[j]).collect();
            let t = kendall_tau(&a, &b).ok();
            degenerate |= t.is_none();
            tau[i][j] = t;
            tau[j][i] = t;
        }
    }
    KendallTable {
        orderings: ORDERINGS.iter().map(|s| s.to_string()).collect(),
        tau,
        models_used: used.len(),
        degenerate,
    }
}

fn ab_result(spec: &AbSpec, models: &[ModelReport], entries: &BTreeMap<&str, &ModelEntry>) -> AbResult {
    let quantity = |m: &ModelReport| -> Option<f64> {
        match &spec.task {
            Some(t) => m.cells.iter().find(|c| &c.task == t)?.test_d_prime,
            None => m.avg_d_prime_test,
        }
    };
    let side = |group: &str| -> BTreeMap<String, (String, Option<f64>)> {
        models
            .iter()
            .filter_map(|m| {
                let e = entries[m.model_id.as_str()];
                (e.group.as_deref() == Some(group))
                    .then(|| e.pair_key.clone().map(|k| (k, (m.model_id.clone(), quantity(m)))))
                    .flatten()
            })
            .collect()
    };
    let (a_side, b_side) = (side(&spec.group_a), side(&spec.group_b));
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for (key, (ma, va)) in &a_side {
        let Some((mb, vb)) = b_side.get(key) else {
            skipped += 1;
            continue;
        };
        match (va, vb) {
            (Some(a), Some(b)) => pairs.push(AbPair {
                pair_key: key.clone(),
                model_a: ma.clone(),
                model_b: mb.clone(),
                a: *a,
                b: *b,
            }),
            _ => skipped += 1,
        }
    }
    skipped += b_side.keys().filter(|k| !a_side.contains_key(*k)).count();
    let b: Vec<f64> = pairs.iter().map(|p| p.b).collect();
    let a: Vec<f64> = pairs.iter().map(|p| p.a).collect();
    let (test, mut note) = match paired_t_test(&b, &a) {
        Ok(t) => (Some(t), None),
        Err(e) => (None, Some(e.to_string())),
    };
    if skipped > 0 {
        let s = format!("{skipped} unpaired or incomplete models skipped");
        note = Some(match note {
            Some(n) => format!("{n}; {s}"),
            None => s,
        });
    }
    AbResult {
        spec: spec.clone(),
        pairs,
        test,
        note,
    }
}

fn robustness(tasks: &[TaskSpec], models: &[ModelReport], gaps: &mut Vec<String>) -> Vec<RobustnessRow> {
    if tasks.len() < 2 {
        gaps.push("robustness: fewer than two tasks, nothing to leave out".into());
        return Vec::new();
    }
    let sizes: Vec<usize> = models.iter().map(|m| m.param_count).collect();
    tasks
        .iter()
        .map(|left| {
            let dev: Vec<Option<f64>> = models
                .iter()
                .map(|m| {
                    let aucs: Option<Vec<f64>> = tasks
                        .iter()
                        .filter(|t| t.name != left.name)
                        .map(|t| m.cells.iter().find(|c| c.task == t.name).map(|c| c.dev_auc))
                        .collect();
                    average_d_prime(&aucs?).ok()
                })
                .collect();
            let (_, frontier) = mark_best(&sizes, &dev);
            let mut best: Option<usize> = None;
            for (k, v) in dev.iter().enumerate() {
                if let Some(v) = v {
                    if best.is_none_or(|b| *v > dev[b].unwrap_or(f64::NEG_INFINITY)) {
                        best = Some(k);
                    }
                }
            }
            RobustnessRow {
                left_out: left.name.clone(),
                best_model: best.map(|b| models[b].model_id.clone()),
                frontier: (0..models.len())
                    .filter(|&k| frontier[k])
                    .map(|k| models[k].model_id.clone())
                    .collect(),
            }
        })
        .collect()
}

/// Builds the report. Rows naming a model outside the registry are an
/// error; missing (model, task) results are recorded as gaps.
pub fn run_report(input: &ReportInput) -> Result<MetricReport> {
    if input.tasks.is_empty() {
        return Err(Error::InvalidInput("report needs at least one task".into()));
    }
    let mut entries: BTreeMap<&str, &ModelEntry> = BTreeMap::new();
    for m in &input.models {
        if entries.insert(m.model_id.as_str(), m).is_some() {
            return Err(Error::InvalidInput(format!("model {:?} registered twice", m.model_id)));
        }
    }
    let mut gaps = Vec::new();
    let mut selected: BTreeMap<(&str, &str), &ProbeRow> = BTreeMap::new();
    for r in &input.rows {
        if !entries.contains_key(r.model_id.as_str()) {
            return Err(Error::UnknownModel(r.model_id.clone()));
        }
        if !input.tasks.iter().any(|t| t.name == r.task) {
            gaps.push(format!("{}: rows for undeclared task {:?} ignored", r.model_id, r.task));
            continue;
        }
        if r.selected && selected.insert((r.model_id.as_str(), r.task.as_str()), r).is_some() {
            return Err(Error::InvalidInput(format!(
                "two selected probes for {} on {}",
                r.model_id, r.task
            )));
        }
    }
    gaps.dedup();

    let mut order: Vec<&ModelEntry> = input.models.iter().collect();
    order.sort_by(|a, b| (a.param_count, &a.model_id).cmp(&(b.param_count, &b.model_id)));

    let mut models = Vec::with_capacity(order.len());
    for e in &order {
        let mut cells = Vec::new();
        let mut missing_tasks = Vec::new();
        for t in &input.tasks {
            let Some(r) = selected.get(&(e.model_id.as_str(), t.name.as_str())) else {
                missing_tasks.push(t.name.clone());
                gaps.push(format!("{}: no selected probe for task {}", e.model_id, t.name));
                continue;
            };
            let (Some(test_score), Some(test_accuracy), Some(test_auc)) =
                (r.test_score, r.test_accuracy, r.test_auc)
            else {
                missing_tasks.push(t.name.clone());
                gaps.push(format!("{}: selected probe for {} has no test scores", e.model_id, t.name));
                continue;
            };
            let ctx = format!("{} {}", e.model_id, t.name);
            let dp = |auc: f64, split: &str| match checked_d_prime(auc, &format!("{ctx} {split}")) {
                Ok(v) => Some(v),
                Err(_) => None,
            };
            cells.push(TaskCell {
                task: t.name.clone(),
                variant: r.variant,
                dev_score: r.dev_score,
                dev_acc: acc_like(t.metric, r.dev_score, r.dev_accuracy),
                dev_auc: r.dev_auc,
                dev_d_prime: dp(r.dev_auc, "dev"),
                test_score,
                test_acc: acc_like(t.metric, test_score, test_accuracy),
                test_auc,
                test_d_prime: dp(test_auc, "test"),
            });
        }
        let complete = missing_tasks.is_empty();
        let avg = |f: fn(&TaskCell) -> f64, name: &str, gaps: &mut Vec<String>| -> Option<f64> {
            if !complete {
                return None;
            }
            let aucs: Vec<f64> = cells.iter().map(f).collect();
            match average_d_prime(&aucs) {
                Ok(v) => Some(v),
                Err(err) => {
                    gaps.push(format!("{}: {name} undefined ({err})", e.model_id));
                    None
                }
            }
        };
        let avg_d_prime_dev = avg(|c| c.dev_auc, "dev average d'", &mut gaps);
        let avg_d_prime_test = avg(|c| c.test_auc, "test average d'", &mut gaps);
        let accs = |f: fn(&TaskCell) -> f64| complete.then(|| mean(&cells.iter().map(f).collect::<Vec<_>>()));
        models.push(ModelReport {
            model_id: e.model_id.clone(),
            param_count: e.param_count,
            size_mb: size_mb(e.param_count),
            avg_acc_dev: accs(|c| c.dev_acc),
            avg_acc_test: accs(|c| c.test_acc),
            cells,
            missing_tasks,
            avg_d_prime_dev,
            avg_d_prime_test,
            best: false,
            frontier: false,
        });
    }
    let sizes: Vec<usize> = models.iter().map(|m| m.param_count).collect();
    let dev: Vec<Option<f64>> = models.iter().map(|m| m.avg_d_prime_dev).collect();
    let (best, frontier) = mark_best(&sizes, &dev);
    for (k, m) in models.iter_mut().enumerate() {
        m.best = best[k];
        m.frontier = frontier[k];
    }

    let kendall = kendall_table(&models);
    if kendall.degenerate {
        gaps.push(format!(
            "kendall: degenerate with {} complete model(s); undefined cells are null",
            kendall.models_used
        ));
    }
    let ab_tests = input.ab_tests.iter().map(|s| ab_result(s, &models, &entries)).collect();
    let robustness = robustness(&input.tasks, &models, &mut gaps);

    let mut seeds: Vec<u64> = input.models.iter().map(|m| m.root_seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let input_hash = hex::encode(Sha256::digest(serde_json::to_vec(input)?));
    Ok(MetricReport {
        provenance: Provenance { input_hash, seeds },
        tasks: input.tasks.iter().map(|t| t.name.clone()).collect(),
        models,
        kendall,
        ab_tests,
        robustness,
        gaps,
    })
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `report.json`, `table.csv`, `curve.csv`, `kendall.csv`,
/// `ttest.json` and `robustness.csv` into `dir`.
pub fn write_report(report: &MetricReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_vec_pretty(report)?;
    json.push(b'\n');
    std::fs::write(dir.join("report.json"), json)?;
    let mut tt = serde_json::to_vec_pretty(&report.ab_tests)?;
    tt.push(b'\n');
    std::fs::write(dir.join("ttest.json"), tt)?;

    let mut w = csv::Writer::from_path(dir.join("table.csv")).map_err(csv_err)?;
    let mut head = vec!["model_id".to_string(), "param_count".into(), "size_mb".into()];
    head.extend(report.tasks.iter().cloned());
    head.push("avg_d_prime_test".into());
    w.write_record(&head).map_err(csv_err)?;
    for m in &report.models {
        let mut rec = vec![m.model_id.clone(), m.param_count.to_string(), m.size_mb.to_string()];
        for t in &report.tasks {
            rec.push(fmt(m.cells.iter().find(|c| &c.task == t).map(|c| c.test_score)));
        }
        rec.push(fmt(m.avg_d_prime_test));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("curve.csv")).map_err(csv_err)?;
    w.write_record([
        "model_id",
        "param_count",
        "size_mb",
        "avg_d_prime_dev",
        "avg_d_prime_test",
        "best",
        "frontier",
    ])
    .map_err(csv_err)?;
    for m in &report.models {
        w.write_record([
            m.model_id.clone(),
            m.param_count.to_string(),
            m.size_mb.to_string(),
            fmt(m.avg_d_prime_dev),
            fmt(m.avg_d_prime_test),
            m.best.to_string(),
            m.frontier.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("kendall.csv")).map_err(csv_err)?;
    let mut head = vec![String::new()];
    head.extend(report.kendall.orderings.iter().cloned());
    w.write_record(&head).map_err(csv_err)?;
    for (name, row) in report.kendall.orderings.iter().zip(&report.kendall.tau) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|v| fmt(*v)));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("robustness.csv")).map_err(csv_err)?;
    w.write_record(["left_out", "best_model", "frontier"]).map_err(csv_err)?;
    for r in &report.robustness {
        w.write_record([r.left_out.clone(), r.best_model.clone().unwrap_or_default(), r.frontier.join(";")])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn task(name: &str, metric: TaskMetric) -> TaskSpec {
        TaskSpec {
            name: name.into(),
            metric,
            num_classes: 2,
        }
    }

    fn entry(id: &str, params: usize) -> ModelEntry {
        ModelEntry {
            model_id: id.into(),
            param_count: params,
            group: None,
            pair_key: None,
            root_seed: 0,
        }
    }

    fn row(model: &str, task: &str, auc: f64, acc: f64) -> ProbeRow {
        ProbeRow {
            model_id: model.into(),
            task: task.into(),
            variant: ProbeVariant::Lda,
            selected: true,
            dev_score: acc,
            dev_accuracy: acc,
            dev_auc: auc,
            test_score: Some(acc),
            test_accuracy: Some(acc),
            test_auc: Some(auc),
        }
    }

    #[test]
    fn single_model_single_task_is_one_point_and_degenerate() {
        let input = ReportInput {
            tasks: vec![task("t", TaskMetric::Accuracy)],
            models: vec![entry("m", 100)],
            rows: vec![row("m", "t", 0.8, 0.7)],
            ab_tests: vec![],
        };
        let r = run_report(&input).unwrap();
        assert_eq!(r.models.len(), 1);
        assert!(r.models[0].best && r.models[0].frontier);
        assert!(r.kendall.degenerate);
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    assert_eq!(r.kendall.tau[i][j], Some(1.0));
                } else {
                    assert_eq!(r.kendall.tau[i][j], None);
                }
            }
        }
        assert!(r.gaps.iter().any(|g| g.contains("kendall")));
    }

    #[test]
    fn dominating_model_is_best_and_orderings_agree() {
        let tasks = vec![task("a", TaskMetric::Accuracy), task("b", TaskMetric::Eer)];
        let mut rows = vec![];
        for (m, auc, acc) in [("small", 0.7, 0.6), ("mid", 0.8, 0.7), ("big", 0.9, 0.8)] {
            rows.push(row(m, "a", auc, acc));
            let mut e = row(m, "b", auc, 1.0 - acc);
            e.test_score = Some(1.0 - acc);
            rows.push(e);
        }
        let input = ReportInput {
            tasks,
            models: vec![entry("big", 300), entry("small", 100), entry("mid", 200)],
            rows,
            ab_tests: vec![],
        };
        let r = run_report(&input).unwrap();
        let ids: Vec<&str> = r.models.iter().map(|m| m.model_id.as_str()).collect();
        assert_eq!(ids, ["small", "mid", "big"]);
        assert!(r.models.iter().all(|m| m.best && m.frontier));
        assert!(!r.kendall.degenerate);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(r.kendall.tau[i][j], Some(1.0));
            }
        }
        // acc for the eer task is 1 - EER
        assert!((r.models[2].cells[1].test_acc - 0.8).abs() < 1e-12);
    }

    #[test]
    fn average_d_prime_recomputes_bit_exactly() {
        let input = ReportInput {
            tasks: vec![task("a", TaskMetric::Accuracy), task("b", TaskMetric::Accuracy)],
            models: vec![entry("m", 10)],
            rows: vec![row("m", "a", 0.73, 0.7), row("m", "b", 0.91, 0.8)],
            ab_tests: vec![],
        };
        let r = run_report(&input).unwrap();
        let m = &r.models[0];
        let aucs: Vec<f64> = m.cells.iter().map(|c| c.test_auc).collect();
        assert_eq!(m.avg_d_prime_test.unwrap().to_bits(), average_d_prime(&aucs).unwrap().to_bits());
        let back: MetricReport =
            serde_json::from_slice(&serde_json::to_vec(&r).unwrap()).unwrap();
        let aucs: Vec<f64> = back.models[0].cells.iter().map(|c| c.test_auc).collect();
        assert_eq!(back.models[0].avg_d_prime_test.unwrap().to_bits(), average_d_prime(&aucs).unwrap().to_bits());
    }

    #[test]
    fn unknown_model_errors_and_missing_task_is_a_gap() {
        let mut input = ReportInput {
            tasks: vec![task("a", TaskMetric::Accuracy), task("b", TaskMetric::Accuracy)],
            models: vec![entry("m", 10), entry("n", 20)],
            rows: vec![row("m", "a", 0.7, 0.7), row("m", "b", 0.7, 0.7), row("n", "a", 0.8, 0.8)],
            ab_tests: vec![],
        };
        let r = run_report(&input).unwrap();
        assert_eq!(r.models[1].missing_tasks, vec!["b"]);
        assert_eq!(r.models[1].avg_d_prime_dev, None);
        assert!(r.gaps.iter().any(|g| g.contains("n: no selected probe for task b")));
        input.rows.push(row("ghost", "a", 0.7, 0.7));
        assert!(matches!(run_report(&input), Err(Error::UnknownModel(id)) if id == "ghost"));
    }

    #[test]
    fn leave_one_task_out_tracks_the_frontier() {
        // "big" is better on a, "small" better on b by a wide margin
        let tasks = vec![task("a", TaskMetric::Accuracy), task("b", TaskMetric::Accuracy)];
        let rows = vec![
            row("small", "a", 0.6, 0.6),
            row("small", "b", 0.95, 0.9),
            row("big", "a", 0.9, 0.9),
            row("big", "b", 0.7, 0.7),
        ];
        let input = ReportInput {
            tasks,
            models: vec![entry("small", 1), entry("big", 2)],
            rows,
            ab_tests: vec![],
        };
        let r = run_report(&input).unwrap();
        assert_eq!(r.robustness.len(), 2);
        assert_eq!(r.robustness[0].left_out, "a");
        assert_eq!(r.robustness[0].best_model.as_deref(), Some("small"));
        assert_eq!(r.robustness[0].frontier, vec!["small"]);
        assert_eq!(r.robustness[1].best_model.as_deref(), Some("big"));
        assert_eq!(r.robustness[1].frontier, vec!["small", "big"]);
    }

    #[test]
    fn ab_pairs_by_key_and_tests_b_minus_a() {
        let tasks = vec![task("t", TaskMetric::Accuracy)];
        let mut models = vec![];
        let mut rows = vec![];
        for (k, (a, b)) in [(0.70, 0.75), (0.72, 0.80), (0.69, 0.74), (0.71, 0.73)].iter().enumerate() {
            for (g, auc) in [("single", a), ("combined", b)] {
                let id = format!("{g}{k}");
                models.push(ModelEntry {
                    group: Some(g.into()),
                    pair_key: Some(k.to_string()),
                    ..entry(&id, 5)
                });
                rows.push(row(&id, "t", *auc, 0.5));
            }
        }
        models.push(ModelEntry {
            group: Some("single".into()),
            pair_key: Some("lonely".into()),
            ..entry("x", 5)
        });
        rows.push(row("x", "t", 0.6, 0.5));
        let spec: AbSpec = "corpus:single:combined:t".parse().unwrap();
        let input = ReportInput {
            tasks,
            models,
            rows,
            ab_tests: vec![spec],
        };
        let r = run_report(&input).unwrap();
        let ab = &r.ab_tests[0];
        assert_eq!(ab.pairs.len(), 4);
        let t = ab.test.as_ref().unwrap();
        assert!(t.mean_difference > 0.0);
        let diffs: Vec<f64> = ab.pairs.iter().map(|p| p.b - p.a).collect();
        let zeros = vec![0.0; 4];
        let direct = paired_t_test(&diffs, &zeros).unwrap();
        assert!((direct.t_statistic - t.t_statistic).abs() < 1e-12);
        assert!(ab.note.as_deref().unwrap().contains("1 unpaired"));
        assert!("bad".parse::<AbSpec>().is_err());
    }

    #[test]
    fn written_files_are_byte_stable() {
        let input = ReportInput {
            tasks: vec![task("a", TaskMetric::Accuracy)],
            models: vec![entry("m", 10), entry("n", 10)],
            rows: vec![row("m", "a", 0.7, 0.7), row("n", "a", 0.8, 0.75)],
            ab_tests: vec![],
        };
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        write_report(&run_report(&input).unwrap(), d1.path()).unwrap();
        write_report(&run_report(&input).unwrap(), d2.path()).unwrap();
        for f in ["report.json", "table.csv", "curve.csv", "kendall.csv", "ttest.json", "robustness.csv"] {
            assert_eq!(
                std::fs::read(d1.path().join(f)).unwrap(),
                std::fs::read(d2.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let curve = std::fs::read_to_string(d1.path().join("curve.csv")).unwrap();
        // same size: only the higher dev d' is best
        assert!(curve.contains("m,10,") && curve.lines().nth(2).unwrap().ends_with("true,true"));
        assert!(curve.lines().nth(1).unwrap().ends_with("false,false"));
    }

    proptest! {
        #[test]
        fn kendall_table_is_symmetric_with_unit_diagonal(
            aucs in proptest::collection::vec((0.51f64..0.99, 0.51f64..0.99, 0.0f64..1.0), 0..6),
        ) {
            let tasks = vec![task("t", TaskMetric::Accuracy)];
            let models: Vec<ModelEntry> = (0..aucs.len()).map(|i| entry(&format!("m{i}"), i)).collect();
            let rows: Vec<ProbeRow> = aucs
                .iter()
                .enumerate()
                .map(|(i, &(d, t, acc))| {
                    let mut r = row(&format!("m{i}"), "t", d, acc);
                    r.test_auc = Some(t);
                    r
                })
                .collect();
            let r = run_report(&ReportInput { tasks, models, rows, ab_tests: vec![] }).unwrap();
            for i in 0..4 {
                prop_assert_eq!(r.kendall.tau[i][i], Some(1.0));
                for j in 0..4 {
                    prop_assert_eq!(r.kendall.tau[i][j], r.kendall.tau[j][i]);
                }
            }
        }
    }
}
