//! Frozen-encoder evaluation and embedding-space diagnostics: linear probing,
//! group accuracies with the balancedness Std, the normalized
//! misclassification matrix, alignment/uniformity, augmentation-graph
//! connectivity, and the tail-discovery ratio.

mod probe;
mod quality;

pub use probe::{linear_probe, ProbeConfig, ProbeResult};
pub use quality::{alignment_uniformity, aug_graph_connectivity, connectivity_threshold};

use serde::{Deserialize, Serialize};

use crate::datagen::{Group, GroupSplit};
use crate::error::{ColtError, Result};
use crate::tailness::TailnessState;

/// Group accuracies and their population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub many: f64,
    pub median: f64,
    pub few: f64,
    pub std: f64,
}

/// Group accuracy is the unweighted mean of member-class accuracies; the
/// balancedness Std is the population standard deviation of the three group
/// values.
pub fn group_metrics(per_class_acc: &[f64], split: &GroupSplit) -> Result<GroupMetrics> {
    if per_class_acc.len() != split.num_classes() {
        return Err(ColtError::Contract(format!(
            "{} accuracies for {} classes",
            per_class_acc.len(),
            split.num_classes()
        )));
    }
    if per_class_acc.iter().any(|a| !a.is_finite()) {
        return Err(ColtError::Contract(
            "per-class accuracy contains a non-finite value".to_string(),
        ));
    }
    let group_mean = |g: Group| -> Result<f64> {
        let classes = split.classes_in(g);
        if classes.is_empty() {
            return Err(ColtError::Contract(format!("group {} is empty", g)));
        }
        Ok(classes.iter().map(|&c| per_class_acc[c]).sum::<f64>() / classes.len() as f64)
    };
    let many = group_mean(Group::Many)?;
    let median = group_mean(Group::Median)?;
    let few = group_mean(Group::Few)?;
    let mean = (many + median + few) / 3.0;
    let var = ((many - mean).powi(2) + (median - mean).powi(2) + (few - mean).powi(2)) / 3.0;
    Ok(GroupMetrics {
        many,
        median,
        few,
        std: var.sqrt(),
    })
}

/// Normalized misclassification matrix over the splits {Few, Median, Many}.
///
/// Entry (i, j) is the share of split-i misclassifications predicted into
/// split j, divided by split j's share of classes. Rows of splits with zero
/// misclassified instances are undefined (`None`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmmMatrix {
    /// Row-major entries, `None` on undefined rows.
    pub entries: [[Option<f64>; 3]; 3],
    /// Misclassified-instance totals per true split.
    pub row_totals: [usize; 3],
}

/// Split order used by the matrix axes.
pub const NMM_SPLITS: [Group; 3] = [Group::Few, Group::Median, Group::Many];

fn split_index(g: Group) -> usize {
    match g {
        Group::Few => 0,
        Group::Median => 1,
        Group::Many => 2,
    }
}

impl NmmMatrix {
    pub fn get(&self, true_group: Group, pred_group: Group) -> Option<f64> {
        self.entries[split_index(true_group)][split_index(pred_group)]
    }
}

/// Builds an [`NmmMatrix`] from raw misclassification counts and the number of
/// classes in each split, both ordered {Few, Median, Many}.
pub fn nmm_from_counts(m: [[usize; 3]; 3], split_class_counts: [usize; 3]) -> NmmMatrix {
    let total_classes: usize = split_class_counts.iter().sum();
    let mut entries = [[None; 3]; 3];
    let mut row_totals = [0usize; 3];
    for i in 0..3 {
        let row_sum: usize = m[i].iter().sum();
        row_totals[i] = row_sum;
        if row_sum == 0 {
            continue;
        }
        for j in 0..3 {
            let share = m[i][j] as f64 / row_sum as f64;
            let class_share = split_class_counts[j] as f64 / total_classes as f64;
            entries[i][j] = Some(share / class_share);
        }
    }
    NmmMatrix {
        entries,
        row_totals,
    }
}

/// Computes the NMM of a prediction vector against ground-truth labels.
/// Correctly classified samples are ignored; a prediction into the wrong
/// class of the sample's own split lands on the diagonal.
pub fn nmm(predictions: &[usize], labels: &[usize], split: &GroupSplit) -> Result<NmmMatrix> {
    if predictions.len() != labels.len() {
        return Err(ColtError::Contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut m = [[0usize; 3]; 3];
    for (&pred, &label) in predictions.iter().zip(labels) {
        if pred == label {
            continue;
        }
        if pred >= split.num_classes() || label >= split.num_classes() {
            return Err(ColtError::Contract(format!(
                "class {} outside the {}-class split",
                pred.max(label),
                split.num_classes()
            )));
        }
        let i = split_index(split.group_of(label));
        let j = split_index(split.group_of(pred));
        m[i][j] += 1;
    }
    let mut split_class_counts = [0usize; 3];
    for c in 0..split.num_classes() {
        split_class_counts[split_index(split.group_of(c))] += 1;
    }
    Ok(nmm_from_counts(m, split_class_counts))
}

/// Tail-discovery ratios (phi_major, phi_minor) at the given top-score
/// percentage.
///
/// The subset holds the top `ceil(gamma% * N)` scored samples (ties broken by
/// lower sample id). For a target group T, phi is the ratio of T's share in
/// the subset to T's share in the whole scored set; Major is the Many group
/// and Minor the Few group.
pub fn tail_discovery_ratio(
    state: &TailnessState,
    labels: &[Option<usize>],
    split: &GroupSplit,
    gamma_percent: f64,
) -> Result<(f64, f64)> {
    if !(gamma_percent > 0.0 && gamma_percent <= 100.0) {
        return Err(ColtError::Parameter(format!(
            "gamma must be in (0,100], got {}",
            gamma_percent
        )));
    }
    if state.is_empty() {
        return Err(ColtError::Contract(
            "tail discovery on empty tailness state".to_string(),
        ));
    }
    let group_of = |id: usize| -> Result<Group> {
        let class = labels
            .get(id)
            .copied()
            .flatten()
            .ok_or_else(|| ColtError::Contract(format!("scored sample {} has no label", id)))?;
        Ok(split.group_of(class))
    };

    let mut scored: Vec<(usize, f64)> = state.scores().iter().map(|(&id, &s)| (id, s)).collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let n = scored.len();
    let sub_len = ((gamma_percent / 100.0 * n as f64).ceil() as usize).clamp(1, n);

    let mut totals = [0usize; 3];
    let mut in_sub = [0usize; 3];
    for (rank, &(id, _)) in scored.iter().enumerate() {
        let g = split_index(group_of(id)?);
        totals[g] += 1;
        if rank < sub_len {
            in_sub[g] += 1;
        }
    }
    let phi = |g: Group| -> Result<f64> {
        let gi = split_index(g);
        if totals[gi] == 0 {
            return Err(ColtError::Contract(format!(
                "group {} absent from the scored dataset",
                g
            )));
        }
        let sub_share = in_sub[gi] as f64 / sub_len as f64;
        let total_share = totals[gi] as f64 / n as f64;
        Ok(sub_share / total_share)
    };
    Ok((phi(Group::Many)?, phi(Group::Few)?))
}
