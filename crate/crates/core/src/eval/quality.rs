//! Embedding-space quality diagnostics: alignment/uniformity and the
//! augmentation-graph connectivity score.

use crate::error::{ColtError, Result};
use crate::numkit::Matrix;

/// Alignment and uniformity of unit-norm embeddings.
///
/// Alignment is the mean squared distance over positive pairs (`paired_views`
/// holds the two views of sample `i` at rows `2i` and `2i+1`). Uniformity is
/// the log of the mean Gaussian-kernel value `exp(-2 ||z_i - z_j||^2)` over
/// all distinct sample pairs of `sample_emb`.
pub fn alignment_uniformity(paired_views: &Matrix, sample_emb: &Matrix) -> Result<(f64, f64)> {
    if paired_views.rows() % 2 != 0 || paired_views.rows() == 0 {
        return Err(ColtError::Contract(
            "paired views must come in a positive even count".to_string(),
        ));
    }
    if sample_emb.rows() < 2 {
        return Err(ColtError::Contract(
            "uniformity needs at least two samples".to_string(),
        ));
    }

    let pairs = paired_views.rows() / 2;
    let mut alignment = 0.0;
    for p in 0..pairs {
        alignment += squared_distance(paired_views.row(2 * p), paired_views.row(2 * p + 1));
    }
    alignment /= pairs as f64;

    let n = sample_emb.rows();
    let mut kernel_sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            kernel_sum +=
                (-2.0 * squared_distance(sample_emb.row(i), sample_emb.row(j))).exp();
        }
    }
    let num_pairs = (n * (n - 1) / 2) as f64;
    let uniformity = (kernel_sum / num_pairs).ln();

    Ok((alignment, uniformity))
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

/// Smallest distance between any view of sample `i` and any view of sample `j`.
fn min_view_distance(a: &Matrix, b: &Matrix) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            let d = squared_distance(a.row(i), b.row(j)).sqrt();
            if d < best {
                best = d;
            }
        }
    }
    best
}

/// Default edge threshold: the given percentile (nearest-rank) of all
/// pairwise min-view distances.
pub fn connectivity_threshold(views_per_sample: &[Matrix], percentile: f64) -> Result<f64> {
    if views_per_sample.len() < 2 {
        return Err(ColtError::Contract(
            "threshold needs at least two samples".to_string(),
        ));
    }
    if !(0.0..=100.0).contains(&percentile) {
        return Err(ColtError::Parameter(format!(
            "percentile must be in [0,100], got {}",
            percentile
        )));
    }
    let mut distances = Vec::new();
    for i in 0..views_per_sample.len() {
        for j in (i + 1)..views_per_sample.len() {
            distances.push(min_view_distance(&views_per_sample[i], &views_per_sample[j]));
        }
    }
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = ((percentile / 100.0 * distances.len() as f64).ceil() as usize).max(1);
    Ok(distances[rank - 1])
}

/// Per-class augmentation-graph connectivity.
///
/// Within each class an edge joins samples `i` and `j` when the smallest
/// distance between any of their views is strictly below `threshold`;
/// `s_c[k]` is the fraction of class-`k` samples with at least one edge.
/// Classes without members (or with one member) score 0.
pub fn aug_graph_connectivity(
    views_per_sample: &[Matrix],
    labels: &[usize],
    threshold: f64,
) -> Result<Vec<f64>> {
    if threshold < 0.0 {
        return Err(ColtError::Parameter(format!(
            "threshold must be >= 0, got {}",
            threshold
        )));
    }
    if views_per_sample.len() != labels.len() {
        return Err(ColtError::Contract(format!(
            "{} view sets for {} labels",
            views_per_sample.len(),
            labels.len()
        )));
    }
    if let Some(bad) = views_per_sample.iter().position(|v| v.rows() < 2) {
        return Err(ColtError::Contract(format!(
            "sample {} has fewer than two views",
            bad
        )));
    }

    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut scores = vec![0.0; num_classes];
    for k in 0..num_classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        if members.len() < 2 {
            continue;
        }
        let mut connected = vec![false; members.len()];
        for a in 0..members.len() {
            for b in (a + 1)..members.len() {
                let d = min_view_distance(
                    &views_per_sample[members[a]],
                    &views_per_sample[members[b]],
                );
                if d < threshold {
                    connected[a] = true;
                    connected[b] = true;
                }
            }
        }
        scores[k] =
            connected.iter().filter(|&&c| c).count() as f64 / members.len() as f64;
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{row_normalize, RngStream};

    #[test]
    fn alignment_zero_for_identical_views() {
        let views = row_normalize(
            &Matrix::from_rows(&[
                vec![1.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![0.0, 1.0],
            ])
            .unwrap(),
        )
        .unwrap();
        let samples = row_normalize(
            &Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        )
        .unwrap();
        let (alignment, _) = alignment_uniformity(&views, &samples).unwrap();
        assert_eq!(alignment, 0.0);
    }

    #[test]
    fn uniformity_antipodal_closed_form() {
        // one pair at squared distance 4 -> ln(exp(-8)) = -8
        let samples =
            Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]).unwrap();
        let views = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![-1.0, 0.0],
        ])
        .unwrap();
        let (_, uniformity) = alignment_uniformity(&views, &samples).unwrap();
        assert!((uniformity + 8.0).abs() < 1e-12);
    }

    #[test]
    fn alignment_uniformity_brute_force_oracle() {
        let mut rng = RngStream::new(42);
        let n = 12;
        let views = row_normalize(&Matrix::from_vec(2 * n, 5, rng.normal_vec(2 * n * 5)).unwrap())
            .unwrap();
        let samples =
            row_normalize(&Matrix::from_vec(n, 5, rng.normal_vec(n * 5)).unwrap()).unwrap();
        let (alignment, uniformity) = alignment_uniformity(&views, &samples).unwrap();

        // independent double-loop recomputation
        let mut a = 0.0;
        for p in 0..n {
            let mut d = 0.0;
            for j in 0..5 {
                let diff = views.get(2 * p, j) - views.get(2 * p + 1, j);
                d += diff * diff;
            }
            a += d;
        }
        a /= n as f64;
        let mut s = 0.0;
        let mut count = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i < j {
                    let mut d = 0.0;
                    for k in 0..5 {
                        let diff = samples.get(i, k) - samples.get(j, k);
                        d += diff * diff;
                    }
                    s += (-2.0 * d).exp();
                    count += 1.0;
                }
            }
        }
        let u = (s / count).ln();
        assert!((alignment - a).abs() < 1e-10);
        assert!((uniformity - u).abs() < 1e-10);
    }

    #[test]
    fn alignment_uniformity_rotation_invariant() {
        let mut rng = RngStream::new(77);
        let n = 8;
        let views =
            row_normalize(&Matrix::from_vec(2 * n, 3, rng.normal_vec(2 * n * 3)).unwrap()).unwrap();
        let samples =
            row_normalize(&Matrix::from_vec(n, 3, rng.normal_vec(n * 3)).unwrap()).unwrap();
        let (a0, u0) = alignment_uniformity(&views, &samples).unwrap();

        // rotate about the z axis by a fixed angle
        let theta = 1.1f64;
        let (s, c) = theta.sin_cos();
        let rot = Matrix::from_rows(&[
            vec![c, -s, 0.0],
            vec![s, c, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let (a1, u1) =
            alignment_uniformity(&views.matmul(&rot), &samples.matmul(&rot)).unwrap();
        assert!((a0 - a1).abs() < 1e-12);
        assert!((u0 - u1).abs() < 1e-12);
    }

    #[test]
    fn uniformity_needs_two_samples() {
        let one = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let views =
            Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(alignment_uniformity(&views, &one).is_err());
    }

    fn view_set(points: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(&points.iter().map(|p| p.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn connectivity_zero_threshold_no_edges() {
        let views = vec![
            view_set(&[[0.0, 0.0], [0.0, 0.0]]),
            view_set(&[[0.0, 0.0], [0.0, 0.0]]),
        ];
        let s = aug_graph_connectivity(&views, &[0, 0], 0.0).unwrap();
        assert_eq!(s, vec![0.0]);
    }

    #[test]
    fn connectivity_huge_threshold_complete_graph() {
        let views = vec![
            view_set(&[[0.0, 0.0], [0.1, 0.0]]),
            view_set(&[[5.0, 5.0], [5.1, 5.0]]),
            view_set(&[[9.0, 0.0], [9.1, 0.0]]),
        ];
        let s = aug_graph_connectivity(&views, &[0, 0, 0], 1e6).unwrap();
        assert_eq!(s, vec![1.0]);
    }

    #[test]
    fn connectivity_hand_construction_isolated_node() {
        // class 0: four samples on a line; samples 0-1 and 1-2 are close, but
        // sample 3 sits far away -> 3 of 4 nodes connected
        let views = vec![
            view_set(&[[0.0, 0.0], [0.1, 0.0]]),
            view_set(&[[0.5, 0.0], [0.6, 0.0]]),
            view_set(&[[1.0, 0.0], [1.1, 0.0]]),
            view_set(&[[50.0, 0.0], [50.1, 0.0]]),
        ];
        let s = aug_graph_connectivity(&views, &[0, 0, 0, 0], 0.75).unwrap();
        assert_eq!(s, vec![0.75]);
    }

    #[test]
    fn connectivity_rejects_negative_threshold() {
        let views = vec![view_set(&[[0.0, 0.0], [0.1, 0.0]])];
        assert!(aug_graph_connectivity(&views, &[0], -0.1).is_err());
    }

    #[test]
    fn threshold_percentile_nearest_rank() {
        let views = vec![
            view_set(&[[0.0, 0.0], [0.0, 0.0]]),
            view_set(&[[1.0, 0.0], [1.0, 0.0]]),
            view_set(&[[3.0, 0.0], [3.0, 0.0]]),
        ];
        // pairwise min distances: 1, 3, 2 -> sorted [1, 2, 3]
        let t = connectivity_threshold(&views, 10.0).unwrap();
        assert_eq!(t, 1.0);
        let t = connectivity_threshold(&views, 100.0).unwrap();
        assert_eq!(t, 3.0);
    }
}
