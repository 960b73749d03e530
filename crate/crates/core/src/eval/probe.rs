//! Linear probing of frozen embeddings: multinomial logistic regression
//! trained by full-batch gradient descent with an L2 penalty on the weights.

use serde::{Deserialize, Serialize};

use crate::datagen::GroupSplit;
use crate::error::{ColtError, Result};
use crate::eval::{group_metrics, GroupMetrics};
use crate::numkit::{Matrix, RngStream};

/// Probe optimizer settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub iters: usize,
    pub l2: f64,
    /// Base learning rate; internally divided by the squared maximum feature
    /// norm when that exceeds 1, so descent stays stable on any scale.
    pub lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            iters: 500,
            l2: 1e-4,
            lr: 2.0,
        }
    }
}

/// Frozen-encoder probe evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeResult {
    pub per_class_acc: Vec<f64>,
    pub groups: GroupMetrics,
    pub overall_acc: f64,
    pub test_predictions: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Trains a linear classifier on a stratified `fraction` of the training
/// embeddings and reports per-class test accuracy.
///
/// The probe subsample keeps at least one sample per class where possible;
/// `fraction * |train|` must cover the class count. Classes absent from the
/// subsample produce a warning and are still evaluated.
#[allow(clippy::too_many_arguments)]
pub fn linear_probe(
    train_emb: &Matrix,
    train_labels: &[usize],
    test_emb: &Matrix,
    test_labels: &[usize],
    split: &GroupSplit,
    fraction: f64,
    config: &ProbeConfig,
    rng: &RngStream,
) -> Result<ProbeResult> {
    let num_classes = split.num_classes();
    if train_emb.rows() != train_labels.len() || test_emb.rows() != test_labels.len() {
        return Err(ColtError::Contract(
            "embedding row counts do not match label counts".to_string(),
        ));
    }
    if train_emb.cols() != test_emb.cols() {
        return Err(ColtError::Contract(
            "train and test embedding dimensions differ".to_string(),
        ));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ColtError::Parameter(format!(
            "probe fraction must be in (0,1], got {}",
            fraction
        )));
    }
    if (fraction * train_labels.len() as f64) < num_classes as f64 {
        return Err(ColtError::Parameter(format!(
            "fraction {} of {} samples cannot cover {} classes",
            fraction,
            train_labels.len(),
            num_classes
        )));
    }
    if let Some(&bad) = train_labels
        .iter()
        .chain(test_labels)
        .find(|&&l| l >= num_classes)
    {
        return Err(ColtError::Contract(format!(
            "label {} outside the {}-class split",
            bad, num_classes
        )));
    }

    let mut warnings = Vec::new();
    let subset = stratified_subsample(train_labels, num_classes, fraction, rng);
    let mut trained_classes = vec![false; num_classes];
    for &i in &subset {
        trained_classes[train_labels[i]] = true;
    }
    for (c, present) in trained_classes.iter().enumerate() {
        if !present {
            warnings.push(format!(
                "class {} absent from the probe training subset",
                c
            ));
        }
    }

    let mut sub_emb = Matrix::zeros(subset.len(), train_emb.cols());
    let mut sub_labels = Vec::with_capacity(subset.len());
    for (row, &i) in subset.iter().enumerate() {
        sub_emb.row_mut(row).copy_from_slice(train_emb.row(i));
        sub_labels.push(train_labels[i]);
    }

    let (weights, bias) = fit_softmax_regression(&sub_emb, &sub_labels, num_classes, config);

    let mut per_class_correct = vec![0usize; num_classes];
    let mut per_class_total = vec![0usize; num_classes];
    let mut test_predictions = Vec::with_capacity(test_labels.len());
    let logits = logits_of(test_emb, &weights, &bias);
    for (i, &label) in test_labels.iter().enumerate() {
        let row = logits.row(i);
        let pred = argmax(row);
        test_predictions.push(pred);
        per_class_total[label] += 1;
        if pred == label {
            per_class_correct[label] += 1;
        }
    }
    if let Some(missing) = per_class_total.iter().position(|&t| t == 0) {
        return Err(ColtError::Contract(format!(
            "class {} has no test samples; per-class accuracy undefined",
            missing
        )));
    }
    let per_class_acc: Vec<f64> = per_class_correct
        .iter()
        .zip(&per_class_total)
        .map(|(&c, &t)| c as f64 / t as f64)
        .collect();
    let overall_acc = per_class_correct.iter().sum::<usize>() as f64 / test_labels.len() as f64;
    let groups = group_metrics(&per_class_acc, split)?;

    Ok(ProbeResult {
        per_class_acc,
        groups,
        overall_acc,
        test_predictions,
        warnings,
    })
}

/// Per-class shuffled index selection: class c contributes
/// `max(1, round(fraction * count))` samples (capped at its count).
fn stratified_subsample(
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    rng: &RngStream,
) -> Vec<usize> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    let mut chosen = Vec::new();
    for (c, ids) in per_class.iter_mut().enumerate() {
        if ids.is_empty() {
            continue;
        }
        let take = if fraction >= 1.0 {
            ids.len()
        } else {
            ((fraction * ids.len() as f64).round() as usize).clamp(1, ids.len())
        };
        let mut s = rng.substream_indexed("probe-subsample", c as u64);
        s.shuffle(ids);
        chosen.extend(ids.iter().take(take));
    }
    chosen.sort_unstable();
    chosen
}

fn logits_of(x: &Matrix, weights: &Matrix, bias: &[f64]) -> Matrix {
    let mut logits = x.matmul(weights);
    for i in 0..logits.rows() {
        for (v, b) in logits.row_mut(i).iter_mut().zip(bias) {
            *v += b;
        }
    }
    logits
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Full-batch gradient descent on the multinomial cross-entropy
/// `J = (1/n) sum CE + (l2/2) ||W||^2` (bias unpenalized), starting from zero.
fn fit_softmax_regression(
    x: &Matrix,
    labels: &[usize],
    num_classes: usize,
    config: &ProbeConfig,
) -> (Matrix, Vec<f64>) {
    let n = x.rows();
    let d = x.cols();
    let mut weights = Matrix::zeros(d, num_classes);
    let mut bias = vec![0.0; num_classes];

    let max_norm_sq = x
        .row_norms()
        .iter()
        .map(|v| v * v)
        .fold(0.0f64, f64::max);
    let lr = config.lr / max_norm_sq.max(1.0);
    let inv_n = 1.0 / n as f64;

    for _ in 0..config.iters {
        let logits = logits_of(x, &weights, &bias);
        // grad over logits: (softmax - onehot)/n
        let mut grad_logits = Matrix::zeros(n, num_classes);
        for i in 0..n {
            let row = logits.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let g = grad_logits.row_mut(i);
            for (k, e) in exps.iter().enumerate() {
                g[k] = (e / sum) * inv_n;
            }
            g[labels[i]] -= inv_n;
        }
        let grad_w = x.transpose_matmul(&grad_logits);
        for r in 0..d {
            for (w, g) in weights.row_mut(r).iter_mut().zip(grad_w.row(r)) {
                *w -= lr * (g + config.l2 * *w);
            }
        }
        for k in 0..num_classes {
            let gb: f64 = (0..n).map(|i| grad_logits.get(i, k)).sum();
            bias[k] -= lr * gb;
        }
    }
    (weights, bias)
}
