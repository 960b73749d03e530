//! Per-sample tailness scores: the negated sum of a sample's top-k% largest
//! negative logits, smoothed across epochs with a momentum update. A score
//! near zero means a sparse neighborhood (likely tail); a strongly negative
//! score means a dense one (likely head). Scores exist for ID samples only.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{ColtError, Result};

/// Momentum-smoothed tailness scores keyed by ID-sample id.
#[derive(Debug, Clone)]
pub struct TailnessState {
    scores: BTreeMap<usize, f64>,
    momentum: f64,
    k_percent: f64,
    epoch: usize,
}

impl TailnessState {
    pub fn new(momentum: f64, k_percent: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(ColtError::Parameter(format!(
                "momentum must be in [0,1), got {}",
                momentum
            )));
        }
        if !(k_percent > 0.0 && k_percent <= 100.0) {
            return Err(ColtError::Parameter(format!(
                "k_percent must be in (0,100], got {}",
                k_percent
            )));
        }
        Ok(Self {
            scores: BTreeMap::new(),
            momentum,
            k_percent,
            epoch: 0,
        })
    }

    pub fn k_percent(&self) -> f64 {
        self.k_percent
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn score(&self, sample: usize) -> Option<f64> {
        self.scores.get(&sample).copied()
    }

    /// Scores in ascending sample-id order.
    pub fn scores(&self) -> &BTreeMap<usize, f64> {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Folds one epoch of fresh scores into the state. A sample observed for
    /// the first time takes its fresh score directly; afterwards
    /// `score <- m * old + (1 - m) * fresh`.
    pub fn momentum_update(&mut self, fresh: &BTreeMap<usize, f64>) {
        for (&id, &value) in fresh {
            match self.scores.get_mut(&id) {
                Some(old) => *old = self.momentum * *old + (1.0 - self.momentum) * value,
                None => {
                    self.scores.insert(id, value);
                }
            }
        }
        self.epoch += 1;
    }

    /// Writes `sample_id,class_id,score` rows (header included).
    pub fn dump_csv<P: AsRef<Path>>(&self, labels: &[Option<usize>], path: P) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
        writeln!(out, "sample_id,class_id,score")?;
        for (&id, &score) in &self.scores {
            let class = labels
                .get(id)
                .copied()
                .flatten()
                .map_or(String::from(""), |c| c.to_string());
            writeln!(out, "{},{},{}", id, class, score)?;
        }
        Ok(())
    }
}

/// Tailness of one anchor: `s = -sum(top ceil(k% * len) entries)`, at least
/// one entry.
pub fn tailness_from_logits(p_neg: &[f64], k_percent: f64) -> Result<f64> {
    if p_neg.is_empty() {
        return Err(ColtError::Contract(
            "tailness of empty negative-logit vector".to_string(),
        ));
    }
    if !(k_percent > 0.0 && k_percent <= 100.0) {
        return Err(ColtError::Parameter(format!(
            "k_percent must be in (0,100], got {}",
            k_percent
        )));
    }
    let count = ((k_percent / 100.0 * p_neg.len() as f64).ceil() as usize).max(1);
    let mut sorted = p_neg.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite logits"));
    Ok(-sorted[..count.min(sorted.len())].iter().sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_sum_at_hundred_percent() {
        let s = tailness_from_logits(&[0.2, 0.1], 100.0).unwrap();
        assert!((s + 0.3).abs() < 1e-15);
    }

    #[test]
    fn half_percent_takes_top_one_of_two() {
        let s = tailness_from_logits(&[0.2119, 0.2119], 50.0).unwrap();
        assert!((s + 0.2119).abs() < 1e-15);
    }

    #[test]
    fn default_k_two_percent_selects_at_least_one() {
        // 2% of 10 entries rounds up to 1
        let logits = vec![0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.5];
        let s = tailness_from_logits(&logits, 2.0).unwrap();
        assert!((s + 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_vector_is_contract_error() {
        assert!(tailness_from_logits(&[], 2.0).is_err());
    }

    #[test]
    fn larger_selected_logit_strictly_decreases_score() {
        let base = vec![0.3, 0.2, 0.1, 0.05];
        let s0 = tailness_from_logits(&base, 50.0).unwrap(); // top 2: 0.3 + 0.2
        let denser = vec![0.4, 0.2, 0.1, 0.05];
        let s1 = tailness_from_logits(&denser, 50.0).unwrap();
        assert!(s1 < s0);
    }

    #[test]
    fn momentum_zero_uses_fresh_value() {
        let mut state = TailnessState::new(0.0, 2.0).unwrap();
        state.momentum_update(&BTreeMap::from([(0, -0.5)]));
        state.momentum_update(&BTreeMap::from([(0, -0.3)]));
        assert_eq!(state.score(0), Some(-0.3));
    }

    #[test]
    fn momentum_update_hand_value() {
        let mut state = TailnessState::new(0.9, 2.0).unwrap();
        state.momentum_update(&BTreeMap::from([(7, -0.5)]));
        state.momentum_update(&BTreeMap::from([(7, -0.3)]));
        let s = state.score(7).unwrap();
        assert!((s + 0.48).abs() < 1e-12); // 0.9*(-0.5) + 0.1*(-0.3)
    }

    #[test]
    fn fixed_point_for_equal_values() {
        for m in [0.0, 0.3, 0.9, 0.99] {
            let mut state = TailnessState::new(m, 2.0).unwrap();
            state.momentum_update(&BTreeMap::from([(1, -0.25)]));
            for _ in 0..5 {
                state.momentum_update(&BTreeMap::from([(1, -0.25)]));
            }
            assert!((state.score(1).unwrap() + 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn update_is_convex_combination() {
        let mut state = TailnessState::new(0.7, 2.0).unwrap();
        state.momentum_update(&BTreeMap::from([(2, -0.9)]));
        state.momentum_update(&BTreeMap::from([(2, -0.1)]));
        let s = state.score(2).unwrap();
        assert!(s <= -0.1 && s >= -0.9);
    }

    #[test]
    fn invalid_momentum_rejected() {
        assert!(TailnessState::new(1.0, 2.0).is_err());
        assert!(TailnessState::new(-0.1, 2.0).is_err());
    }

    #[test]
    fn first_observation_sets_score_directly() {
        let mut state = TailnessState::new(0.9, 2.0).unwrap();
        state.momentum_update(&BTreeMap::from([(3, -0.42)]));
        assert_eq!(state.score(3), Some(-0.42));
    }
}
