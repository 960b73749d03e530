//! Clustering of the ID feature space, conversion of cluster tailness into an
//! integer sampling budget, and greedy similarity-ranked OOD selection on the
//! resampling schedule.

use std::io::Write;

use crate::datagen::Domain;
use crate::error::{ColtError, Result};
use crate::numkit::{cosine_sim, Matrix, RngStream};
use crate::tailness::TailnessState;

/// Result of k-means clustering over ID embeddings.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    /// `C x d` raw centroids (not re-normalized).
    pub prototypes: Matrix,
    /// Row index -> cluster id.
    pub assignments: Vec<usize>,
    /// Final within-cluster sum of squared distances.
    pub inertia: f64,
    /// Inertia recorded at every Lloyd iteration; non-increasing.
    pub inertia_history: Vec<f64>,
    /// Per-cluster mean tailness; filled by the caller from
    /// [`cluster_tailness`].
    pub cluster_tailness: Vec<f64>,
}

impl ClusterModel {
    pub fn num_clusters(&self) -> usize {
        self.prototypes.rows()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Integer per-cluster sampling budgets summing exactly to the total.
#[derive(Debug, Clone)]
pub struct BudgetAllocation {
    pub budgets: Vec<usize>,
    pub total: usize,
    /// Pre-rounding real-valued budgets.
    pub real_budgets: Vec<f64>,
    /// Cluster tailness scores the allocation was computed from.
    pub scores: Vec<f64>,
}

/// OOD samples selected in one resampling round.
#[derive(Debug, Clone)]
pub struct SampleRoster {
    pub round: usize,
    pub entries: Vec<RosterEntry>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RosterEntry {
    pub cluster: usize,
    pub ood_id: usize,
    pub similarity: f64,
}

impl SampleRoster {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ood_ids(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.ood_id).collect()
    }

    /// Appends this round's rows to a CSV writer.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{}",
                self.round, e.cluster, e.ood_id, e.similarity
            )?;
        }
        Ok(())
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// k-means++ initialization: first centroid uniform, the rest sampled with
/// probability proportional to the squared distance to the nearest chosen
/// centroid. When every remaining distance is zero, the lowest-index unchosen
/// point is taken.
fn kmeans_pp_init(z: &Matrix, c: usize, rng: &mut RngStream) -> Matrix {
    let n = z.rows();
    let mut chosen = Vec::with_capacity(c);
    let mut taken = vec![false; n];
    let first = rng.range(n);
    chosen.push(first);
    taken[first] = true;
    let mut min_d2: Vec<f64> = (0..n)
        .map(|i| squared_distance(z.row(i), z.row(first)))
        .collect();
    for _ in 1..c {
        let total: f64 = min_d2.iter().sum();
        let next = if total > 0.0 {
            let weights: Vec<f64> = min_d2
                .iter()
                .enumerate()
                .map(|(i, &d)| if taken[i] { 0.0 } else { d })
                .collect();
            let candidate = rng.weighted_index(&weights);
            if taken[candidate] || weights[candidate] == 0.0 {
                (0..n).find(|&i| !taken[i]).unwrap_or(candidate)
            } else {
                candidate
            }
        } else {
            (0..n).find(|&i| !taken[i]).expect("c <= n")
        };
        chosen.push(next);
        taken[next] = true;
        for i in 0..n {
            let d = squared_distance(z.row(i), z.row(next));
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }
    let mut protos = Matrix::zeros(c, z.cols());
    for (k, &idx) in chosen.iter().enumerate() {
        protos.row_mut(k).copy_from_slice(z.row(idx));
    }
    protos
}

fn nearest_cluster(z: &Matrix, protos: &Matrix, i: usize) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for c in 0..protos.rows() {
        let d = squared_distance(z.row(i), protos.row(c));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Lloyd's algorithm with k-means++ initialization.
///
/// Stops when the assignment vector is unchanged or after 100 iterations.
/// Empty clusters are re-seeded with the point farthest from its currently
/// assigned centroid, which keeps the recorded inertia sequence non-increasing.
pub fn kmeans(z: &Matrix, c: usize, rng: &mut RngStream) -> Result<ClusterModel> {
    let n = z.rows();
    if c == 0 {
        return Err(ColtError::Parameter("cluster count must be >= 1".to_string()));
    }
    if c > n {
        return Err(ColtError::Parameter(format!(
            "cannot form {} clusters from {} points",
            c, n
        )));
    }

    let mut protos = kmeans_pp_init(z, c, rng);
    let mut prev_assignments: Option<Vec<usize>> = None;
    let mut assignments = vec![0usize; n];
    let mut inertia_history = Vec::new();
    let mut inertia = 0.0;

    for _iter in 0..100 {
        for i in 0..n {
            assignments[i] = nearest_cluster(z, &protos, i);
        }

        // re-seed empty clusters with the globally farthest point, provided
        // its donor cluster keeps at least one member
        let mut counts = vec![0usize; c];
        for &a in &assignments {
            counts[a] += 1;
        }
        for empty in 0..c {
            if counts[empty] > 0 {
                continue;
            }
            let mut far_i = None;
            let mut far_d = -1.0;
            for i in 0..n {
                if counts[assignments[i]] <= 1 {
                    continue;
                }
                let d = squared_distance(z.row(i), protos.row(assignments[i]));
                if d > far_d {
                    far_d = d;
                    far_i = Some(i);
                }
            }
            if let Some(i) = far_i {
                counts[assignments[i]] -= 1;
                assignments[i] = empty;
                counts[empty] = 1;
                protos.row_mut(empty).copy_from_slice(z.row(i));
            }
        }

        inertia = (0..n)
            .map(|i| squared_distance(z.row(i), protos.row(assignments[i])))
            .sum();
        inertia_history.push(inertia);

        if prev_assignments.as_deref() == Some(assignments.as_slice()) {
            break;
        }
        prev_assignments = Some(assignments.clone());

        // centroid update
        let mut sums = Matrix::zeros(c, z.cols());
        let mut counts = vec![0usize; c];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(z.row(i)) {
                *s += v;
            }
        }
        for k in 0..c {
            if counts[k] > 0 {
                for s in sums.row_mut(k) {
                    *s /= counts[k] as f64;
                }
            } else {
                sums.row_mut(k).copy_from_slice(protos.row(k));
            }
        }
        protos = sums;
    }

    Ok(ClusterModel {
        prototypes: protos,
        assignments,
        inertia,
        inertia_history,
        cluster_tailness: Vec::new(),
    })
}

/// Mean tailness score of each cluster's members.
pub fn cluster_tailness(model: &ClusterModel, state: &TailnessState) -> Result<Vec<f64>> {
    let c = model.num_clusters();
    let mut sums = vec![0.0; c];
    let mut counts = vec![0usize; c];
    for (sample, &cluster) in model.assignments.iter().enumerate() {
        let score = state.score(sample).ok_or_else(|| {
            ColtError::Contract(format!("sample {} has no tailness score", sample))
        })?;
        sums[cluster] += score;
        counts[cluster] += 1;
    }
    sums.iter()
        .zip(&counts)
        .enumerate()
        .map(|(k, (&s, &n))| {
            if n == 0 {
                Err(ColtError::Contract(format!("cluster {} is empty", k)))
            } else {
                Ok(s / n as f64)
            }
        })
        .collect()
}

/// Converts cluster tailness scores into integer budgets.
///
/// Scores are standardized with the population standard deviation (uniform
/// when the deviation is below 1e-12), passed through a temperature softmax,
/// scaled by the total budget, and rounded by largest remainder. Rounding ties
/// go to the higher-tailness cluster, then to the lower index.
pub fn allocate_budget(scores: &[f64], total: usize, tau_c: f64) -> Result<BudgetAllocation> {
    if scores.is_empty() {
        return Err(ColtError::Parameter(
            "budget allocation needs at least one cluster".to_string(),
        ));
    }
    if !(tau_c > 0.0) {
        return Err(ColtError::Parameter(format!(
            "tau_c must be positive, got {}",
            tau_c
        )));
    }
    let c = scores.len();
    let mean = scores.iter().sum::<f64>() / c as f64;
    let variance = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / c as f64;
    let std = variance.sqrt();
    let standardized: Vec<f64> = if std < 1e-12 {
        vec![0.0; c]
    } else {
        scores.iter().map(|s| (s - mean) / std).collect()
    };
    let probs = crate::numkit::softmax_temp(&standardized, tau_c)?;
    let real_budgets: Vec<f64> = probs.iter().map(|p| p * total as f64).collect();

    let mut budgets: Vec<usize> = real_budgets.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = budgets.iter().sum();
    let extras = total - assigned.min(total);
    let mut order: Vec<usize> = (0..c).collect();
    order.sort_by(|&a, &b| {
        let ra = real_budgets[a] - real_budgets[a].floor();
        let rb = real_budgets[b] - real_budgets[b].floor();
        rb.partial_cmp(&ra)
            .unwrap()
            .then(scores[b].partial_cmp(&scores[a]).unwrap())
            .then(a.cmp(&b))
    });
    for &idx in order.iter().take(extras) {
        budgets[idx] += 1;
    }
    debug_assert_eq!(budgets.iter().sum::<usize>(), total);

    Ok(BudgetAllocation {
        budgets,
        total,
        real_budgets,
        scores: scores.to_vec(),
    })
}

/// Greedy per-cluster OOD selection.
///
/// Clusters are processed in descending tailness order (ties by lower id);
/// each takes its budget's worth of not-yet-taken pool samples ranked by
/// cosine similarity to its prototype. A sample joins at most one cluster per
/// round. If the pool cannot cover the total budget the roster is truncated
/// with a warning.
pub fn select_ood(
    prototypes: &Matrix,
    allocation: &BudgetAllocation,
    ood_embeddings: &Matrix,
    round: usize,
) -> Result<SampleRoster> {
    let pool = ood_embeddings.rows();
    let total: usize = allocation.budgets.iter().sum();
    if pool == 0 && total > 0 {
        return Err(ColtError::PoolExhausted(
            "positive budget but the OOD pool is empty".to_string(),
        ));
    }
    let mut warnings = Vec::new();
    if total > pool {
        warnings.push(format!(
            "budget {} exceeds pool size {}; roster truncated",
            total, pool
        ));
    }

    let mut order: Vec<usize> = (0..allocation.budgets.len()).collect();
    order.sort_by(|&a, &b| {
        allocation.scores[b]
            .partial_cmp(&allocation.scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut taken = vec![false; pool];
    let mut entries = Vec::with_capacity(total.min(pool));
    for &cluster in &order {
        let budget = allocation.budgets[cluster];
        if budget == 0 {
            continue;
        }
        let proto = prototypes.row(cluster);
        let mut ranked: Vec<(f64, usize)> = (0..pool)
            .filter(|&j| !taken[j])
            .map(|j| Ok((cosine_sim(proto, ood_embeddings.row(j))?, j)))
            .collect::<Result<_>>()?;
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for &(similarity, j) in ranked.iter().take(budget) {
            taken[j] = true;
            entries.push(RosterEntry {
                cluster,
                ood_id: j,
                similarity,
            });
        }
    }

    Ok(SampleRoster {
        round,
        entries,
        warnings,
    })
}

/// Resampling schedule: true iff `epoch >= w` and `(epoch - w) % r == 0`.
pub fn should_resample(epoch: usize, warmup: usize, interval: usize) -> bool {
    assert!(interval >= 1, "resample interval must be >= 1");
    epoch >= warmup && (epoch - warmup) % interval == 0
}

/// One entry of the active training set, referencing its source dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainEntry {
    pub domain: Domain,
    /// Index into the ID set or the OOD pool, depending on `domain`.
    pub index: usize,
}

/// New training set: the full ID set plus this round's roster. The previous
/// round's OOD subset is discarded; the pool itself is never shrunk.
pub fn rebuild_train_set(id_len: usize, roster: &SampleRoster) -> Vec<TrainEntry> {
    let mut train = Vec::with_capacity(id_len + roster.len());
    train.extend((0..id_len).map(|i| TrainEntry {
        domain: Domain::Id,
        index: i,
    }));
    train.extend(roster.entries.iter().map(|e| TrainEntry {
        domain: Domain::Ood,
        index: e.ood_id,
    }));
    train
}
