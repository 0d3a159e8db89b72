//! Linear classifiers over standardized embeddings: L2-penalized
//! multinomial logistic regression and shrinkage LDA.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::lbfgs::{self, LbfgsOptions};
use crate::error::{Error, Result};

/// Per-dimension affine map fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Zero-variance dimensions keep unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot standardize zero rows".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::ShapeMismatch {
                    context: "probe input row",
                    expected: d,
                    actual: r.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// `scores(x) = softmax(W·x + b)` on standardized inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub num_classes: usize,
    pub dim: usize,
    /// Row-major `num_classes × dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub standardizer: Standardizer,
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

impl LinearClassifier {
    fn logits_std(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_classes)
            .map(|c| {
                let w = &self.weights[c * self.dim..(c + 1) * self.dim];
                self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn logits(&self, row: &[f64]) -> Vec<f64> {
        self.logits_std(&self.standardizer.apply(row))
    }

    /// Class posterior estimates.
    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        let mut z = self.logits(row);
        softmax_in_place(&mut z);
        z
    }

    /// Highest-scoring class; ties go to the lower index.
    pub fn predict(&self, row: &[f64]) -> usize {
        let z = self.logits(row);
        let mut best = 0;
        for (c, v) in z.iter().enumerate() {
            if *v > z[best] {
                best = c;
            }
        }
        best
    }
}

pub(crate) fn check_training_set(x: &[Vec<f64>], y: &[usize], num_classes: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            context: "probe rows vs labels",
            expected: x.len(),
            actual: y.len(),
        });
    }
    let mut counts = vec![0usize; num_classes];
    for &l in y {
        if l >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        counts[l] += 1;
    }
    let present = counts.iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(Error::SingleClass(present));
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass { class });
    }
    if x.iter().all(|r| r == &x[0]) {
        return Err(Error::Degenerate(
            "all training embeddings are identical".into(),
        ));
    }
    Ok(())
}

/// Mean cross-entropy plus `½·l2·‖W‖²` (bias unpenalized), fitted by
/// L-BFGS to gradient norm `opts.grad_tol`.
pub fn fit_logreg(
    x: &[Vec<f64>],
    y: &[usize],
    num_classes: usize,
    l2: f64,
    opts: LbfgsOptions,
) -> Result<LinearClassifier> {
    check_training_set(x, y, num_classes)?;
    let standardizer = Standardizer::fit(x)?;
    let xs: Vec<Vec<f64>> = x.iter().map(|r| standardizer.apply(r)).collect();
    let (c, d) = (num_classes, standardizer.mean.len());
    let n = xs.len() as f64;
    let mut theta = vec![0.0; c * d + c];
    let mut z = vec![0.0; c];

    let report = lbfgs::minimize(&mut theta, opts, |theta, grad| {
        grad.fill(0.0);
        let (w, b) = theta.split_at(c * d);
        let mut loss = 0.0;
        for (row, &label) in xs.iter().zip(y) {
            for k in 0..c {
                z[k] = b[k] + w[k * d..(k + 1) * d].iter().zip(row).map(|(a, v)| a * v).sum::<f64>();
            }
            let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - z[label];
            for k in 0..c {
                let r = (z[k] - lse).exp() - if k == label { 1.0 } else { 0.0 };
                let gw = &mut grad[k * d..(k + 1) * d];
                for (gi, v) in gw.iter_mut().zip(row) {
                    *gi += r * v;
                }
                grad[c * d + k] += r;
            }
        }
        grad.iter_mut().for_each(|g| *g /= n);
        let mut penalty = 0.0;
        for (gi, wi) in grad[..c * d].iter_mut().zip(w) {
            *gi += l2 * wi;
            penalty += wi * wi;
        }
        loss / n + 0.5 * l2 * penalty
    });
    if !report.value.is_finite() {
        return Err(Error::Degenerate("logistic regression objective is not finite".into()));
    }
    let (w, b) = theta.split_at(c * d);
    Ok(LinearClassifier {
        num_classes: c,
        dim: d,
        weights: w.to_vec(),
        bias: b.to_vec(),
        standardizer,
    })
}

/// Gaussian classes with a shared covariance shrunk toward its scaled
/// identity by `shrinkage`.
pub fn fit_lda(x: &[Vec<f64>], y: &[usize], num_classes: usize, shrinkage: f64) -> Result<LinearClassifier> {
    check_training_set(x, y, num_classes)?;
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::Config(format!("LDA shrinkage must be in [0, 1], got {shrinkage}")));
    }
    let standardizer = Standardizer::fit(x)?;
    let xs: Vec<Vec<f64>> = x.iter().map(|r| standardizer.apply(r)).collect();
    let (c, d) = (num_classes, standardizer.mean.len());
    let n = xs.len();

    let mut means = vec![vec![0.0; d]; c];
    let mut counts = vec![0usize; c];
    for (row, &l) in xs.iter().zip(y) {
        counts[l] += 1;
        for (m, v) in means[l].iter_mut().zip(row) {
            *m += v;
        }
    }
    for (m, &k) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= k as f64);
    }

    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (row, &l) in xs.iter().zip(y) {
        let r = DVector::from_iterator(d, row.iter().zip(&means[l]).map(|(a, b)| a - b));
        cov.syger(1.0, &r, &r, 1.0);
    }
    cov /= n as f64;
    let avg_var = cov.trace() / d as f64;
    if !(avg_var > 0.0) {
        return Err(Error::Degenerate("LDA within-class scatter is zero".into()));
    }
    let shrunk = cov * (1.0 - shrinkage) + DMatrix::<f64>::identity(d, d) * (shrinkage * avg_var);
    let chol = shrunk
        .cholesky()
        .ok_or_else(|| Error::Degenerate("LDA covariance is not positive definite".into()))?;

    let mut weights = Vec::with_capacity(c * d);
    let mut bias = Vec::with_capacity(c);
    for (m, &k) in means.iter().zip(&counts) {
        let mu = DVector::from_column_slice(m);
        let w = chol.solve(&mu);
        bias.push(-0.5 * mu.dot(&w) + (k as f64 / n as f64).ln());
        weights.extend(w.iter());
    }
    Ok(LinearClassifier {
        num_classes: c,
        dim: d,
        weights,
        bias,
        standardizer,
    })
}
