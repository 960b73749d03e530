//! Synthetic long-tailed datasets and OOD pools in feature space, vector-space
//! view augmentation, and ingestion of externally computed embeddings.
//!
//! Class labels generated here are consumed only by evaluation code; the
//! training losses never see them.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ColtError, Result};
use crate::numkit::{Matrix, RngStream};

/// Which distribution a sample (or dataset) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Id,
    Ood,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Id => write!(f, "ID"),
            Domain::Ood => write!(f, "OOD"),
        }
    }
}

/// Class-size tertile group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    Many,
    Median,
    Few,
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::Many => write!(f, "Many"),
            Group::Median => write!(f, "Median"),
            Group::Few => write!(f, "Few"),
        }
    }
}

/// One sample: raw feature vector plus evaluation-only metadata.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    /// Class id; `None` for OOD samples.
    pub label: Option<usize>,
    pub domain: Domain,
    /// Tertile group of the sample's class, filled by [`Dataset::apply_groups`].
    pub group: Option<Group>,
}

/// A collection of samples from one domain.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    /// Per-class sample counts; empty for unlabeled datasets.
    pub class_counts: Vec<usize>,
    pub domain: Domain,
    pub dim: usize,
}

impl Dataset {
    fn validate(self) -> Result<Self> {
        if !self.class_counts.is_empty() {
            let mut counts = vec![0usize; self.class_counts.len()];
            for (i, s) in self.samples.iter().enumerate() {
                match s.label {
                    Some(c) if c < counts.len() => counts[c] += 1,
                    Some(c) => {
                        return Err(ColtError::Contract(format!(
                            "sample {} has label {} outside {} classes",
                            i,
                            c,
                            counts.len()
                        )))
                    }
                    None => {
                        return Err(ColtError::Contract(format!(
                            "sample {} of a labeled dataset has no label",
                            i
                        )))
                    }
                }
            }
            if counts != self.class_counts {
                return Err(ColtError::Contract(
                    "class_counts inconsistent with samples".to_string(),
                ));
            }
        }
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Stacks all sample features into a matrix (row per sample).
    pub fn features_matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.samples.len(), self.dim);
        for (i, s) in self.samples.iter().enumerate() {
            m.row_mut(i).copy_from_slice(&s.features);
        }
        m
    }

    /// Labels as a plain vector; callers must only use this for evaluation.
    pub fn labels(&self) -> Vec<Option<usize>> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Fills each sample's group tag from a class split.
    pub fn apply_groups(&mut self, split: &GroupSplit) {
        for s in &mut self.samples {
            s.group = s.label.map(|c| split.group_of(c));
        }
    }
}

/// Parameters of the synthetic Gaussian-mixture generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub max_class_size: usize,
    /// Largest class size divided by smallest; >= 1.
    pub imbalance_ratio: f64,
    pub dim: usize,
    /// Scale of the Gaussian draw producing class means.
    pub id_center_scale: f64,
    /// Distance by which OOD mixture components are displaced from ID means.
    pub ood_center_shift: f64,
    /// Within-class feature noise.
    pub noise_sigma: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(ColtError::Parameter(
                "num_classes must be >= 2".to_string(),
            ));
        }
        if self.dim < 2 {
            return Err(ColtError::Parameter("dim must be >= 2".to_string()));
        }
        if self.imbalance_ratio < 1.0 {
            return Err(ColtError::Parameter(
                "imbalance_ratio must be >= 1".to_string(),
            ));
        }
        if self.max_class_size == 0 {
            return Err(ColtError::Parameter(
                "max_class_size must be positive".to_string(),
            ));
        }
        if self.noise_sigma < 0.0 || self.ood_center_shift < 0.0 {
            return Err(ColtError::Parameter(
                "noise_sigma and ood_center_shift must be non-negative".to_string(),
            ));
        }
        Ok(())
    }
}

/// Mapping from class id to tertile group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSplit {
    groups: Vec<Group>,
}

impl GroupSplit {
    pub fn group_of(&self, class: usize) -> Group {
        self.groups[class]
    }

    pub fn num_classes(&self) -> usize {
        self.groups.len()
    }

    /// Class ids belonging to `group`, ascending.
    pub fn classes_in(&self, group: Group) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| **g == group)
            .map(|(c, _)| c)
            .collect()
    }
}

/// Geometric class-size profile: class `c` has size
/// `round(max_class_size * ratio^(-c/(num_classes-1)))`.
pub fn class_sizes(spec: &SyntheticSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let n = spec.num_classes;
    let sizes: Vec<usize> = (0..n)
        .map(|c| {
            let exponent = -(c as f64) / (n as f64 - 1.0);
            (spec.max_class_size as f64 * spec.imbalance_ratio.powf(exponent)).round() as usize
        })
        .collect();
    if sizes.iter().any(|&s| s == 0) {
        return Err(ColtError::Parameter(format!(
            "smallest class rounds to 0 (max_class_size={}, imbalance_ratio={})",
            spec.max_class_size, spec.imbalance_ratio
        )));
    }
    Ok(sizes)
}

/// Class means depend only on the stream key, the class id, and the spec's
/// dim/scale, so ID train, ID eval, and the OOD pool all see the same centers.
fn class_means(spec: &SyntheticSpec, rng: &RngStream) -> Vec<Vec<f64>> {
    (0..spec.num_classes)
        .map(|c| {
            let mut s = rng.substream_indexed("id-center", c as u64);
            s.normal_vec(spec.dim)
                .into_iter()
                .map(|v| v * spec.id_center_scale)
                .collect()
        })
        .collect()
}

fn gaussian_sample(mean: &[f64], sigma: f64, rng: &mut RngStream) -> Vec<f64> {
    mean.iter().map(|&m| m + sigma * rng.normal()).collect()
}

/// Generates the long-tailed ID training set.
pub fn gen_longtail_id(spec: &SyntheticSpec, rng: &RngStream) -> Result<Dataset> {
    let sizes = class_sizes(spec)?;
    let means = class_means(spec, rng);
    let mut samples = Vec::with_capacity(sizes.iter().sum());
    for (c, (&size, mean)) in sizes.iter().zip(&means).enumerate() {
        let mut s = rng.substream_indexed("id-class", c as u64);
        for _ in 0..size {
            samples.push(LabeledSample {
                features: gaussian_sample(mean, spec.noise_sigma, &mut s),
                label: Some(c),
                domain: Domain::Id,
                group: None,
            });
        }
    }
    Dataset {
        samples,
        class_counts: sizes,
        domain: Domain::Id,
        dim: spec.dim,
    }
    .validate()
}

/// Generates a balanced labeled set from the same class means, for frozen
/// encoder evaluation. Noise draws are independent of the training set.
pub fn gen_balanced_eval(spec: &SyntheticSpec, per_class: usize, rng: &RngStream) -> Result<Dataset> {
    spec.validate()?;
    if per_class == 0 {
        return Err(ColtError::Parameter(
            "per_class must be positive".to_string(),
        ));
    }
    let means = class_means(spec, rng);
    let mut samples = Vec::with_capacity(per_class * spec.num_classes);
    for (c, mean) in means.iter().enumerate() {
        let mut s = rng.substream_indexed("eval-class", c as u64);
        for _ in 0..per_class {
            samples.push(LabeledSample {
                features: gaussian_sample(mean, spec.noise_sigma, &mut s),
                label: Some(c),
                domain: Domain::Id,
                group: None,
            });
        }
    }
    Dataset {
        samples,
        class_counts: vec![per_class; spec.num_classes],
        domain: Domain::Id,
        dim: spec.dim,
    }
    .validate()
}

fn unit_vector(dim: usize, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let v = rng.normal_vec(dim);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Generates the unlabeled OOD pool.
///
/// The pool mixes two kinds of components: one per ID class, displaced from
/// that class mean by `ood_center_shift` in a random direction, and the same
/// number of novel components drawn from the ID-center law and displaced the
/// same way. With `ood_center_shift = 0` every component mean follows the ID
/// center distribution, giving the near-ID control condition; larger shifts
/// move the pool toward pure noise.
pub fn gen_ood_pool(spec: &SyntheticSpec, pool_size: usize, rng: &RngStream) -> Result<Dataset> {
    spec.validate()?;
    if pool_size == 0 {
        return Err(ColtError::Parameter(
            "pool_size must be positive".to_string(),
        ));
    }
    let id_means = class_means(spec, rng);
    let mut components = Vec::with_capacity(2 * spec.num_classes);
    for (c, mean) in id_means.iter().enumerate() {
        let mut s = rng.substream_indexed("ood-shift-dir", c as u64);
        let dir = unit_vector(spec.dim, &mut s);
        components.push(
            mean.iter()
                .zip(&dir)
                .map(|(m, d)| m + spec.ood_center_shift * d)
                .collect::<Vec<f64>>(),
        );
    }
    for j in 0..spec.num_classes {
        let mut s = rng.substream_indexed("ood-novel", j as u64);
        let base: Vec<f64> = s
            .normal_vec(spec.dim)
            .into_iter()
            .map(|v| v * spec.id_center_scale)
            .collect();
        let dir = unit_vector(spec.dim, &mut s);
        components.push(
            base.iter()
                .zip(&dir)
                .map(|(b, d)| b + spec.ood_center_shift * d)
                .collect(),
        );
    }

    let mut s = rng.substream("ood-samples");
    let samples = (0..pool_size)
        .map(|_| {
            let comp = s.range(components.len());
            LabeledSample {
                features: gaussian_sample(&components[comp], spec.noise_sigma, &mut s),
                label: None,
                domain: Domain::Ood,
                group: None,
            }
        })
        .collect();
    Ok(Dataset {
        samples,
        class_counts: Vec::new(),
        domain: Domain::Ood,
        dim: spec.dim,
    })
}

/// Produces the two augmented views of one feature vector.
///
/// Each view applies, in order: additive Gaussian noise with standard
/// deviation `strength * noise_sigma`, a coordinate mask dropping each entry
/// with probability `strength * 0.2` (survivors rescaled by `1/(1-p)`), and a
/// global scale drawn uniformly from `[1 - 0.1*strength, 1 + 0.1*strength]`.
/// `strength = 0` is the identity on both views.
pub fn make_views(
    x: &[f64],
    strength: f64,
    noise_sigma: f64,
    rng: &mut RngStream,
) -> (Vec<f64>, Vec<f64>) {
    assert!(strength >= 0.0, "augmentation strength must be >= 0");
    let one = one_view(x, strength, noise_sigma, rng);
    let two = one_view(x, strength, noise_sigma, rng);
    (one, two)
}

fn one_view(x: &[f64], strength: f64, noise_sigma: f64, rng: &mut RngStream) -> Vec<f64> {
    let sigma = strength * noise_sigma;
    let drop_p = (strength * 0.2).min(0.95);
    let mut v: Vec<f64> = x.iter().map(|&xi| xi + sigma * rng.normal()).collect();
    if drop_p > 0.0 {
        let keep_scale = 1.0 / (1.0 - drop_p);
        for vi in &mut v {
            if rng.next_f64() < drop_p {
                *vi = 0.0;
            } else {
                *vi *= keep_scale;
            }
        }
    } else {
        // consume the mask draws anyway so strength only changes magnitudes,
        // not the stream layout
        for _ in 0..v.len() {
            rng.next_f64();
        }
    }
    let lo = 1.0 - 0.1 * strength;
    let hi = 1.0 + 0.1 * strength;
    let scale = lo + rng.next_f64() * (hi - lo);
    for vi in &mut v {
        *vi *= scale;
    }
    v
}

/// Partitions class ids into {Many, Median, Few} tertiles by class count.
///
/// Classes are ordered by descending count (ties by ascending class id); the
/// top third is Many, the bottom third Few, and the middle third plus any
/// remainder is Median.
pub fn group_split(class_counts: &[usize]) -> Result<GroupSplit> {
    let n = class_counts.len();
    if n < 3 {
        return Err(ColtError::Parameter(format!(
            "group split needs >= 3 classes, got {}",
            n
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| class_counts[b].cmp(&class_counts[a]).then(a.cmp(&b)));
    let third = n / 3;
    let mut groups = vec![Group::Median; n];
    for (rank, &class) in order.iter().enumerate() {
        groups[class] = if rank < third {
            Group::Many
        } else if rank >= n - third {
            Group::Few
        } else {
            Group::Median
        };
    }
    Ok(GroupSplit { groups })
}

/// Reads an embedding file.
///
/// Format: a header line `dim=<d> domain=<ID|OOD> labeled=<0|1>`, then one
/// sample per line — an integer label first when `labeled=1`, followed by `d`
/// whitespace-separated decimals.
pub fn load_embeddings<P: AsRef<Path>>(path: P) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| ColtError::Parse {
        line: 1,
        message: "empty file, expected header".to_string(),
    })?;
    let header = header?;
    let mut dim: Option<usize> = None;
    let mut domain: Option<Domain> = None;
    let mut labeled: Option<bool> = None;
    for token in header.split_whitespace() {
        let (key, value) = token.split_once('=').ok_or_else(|| ColtError::Parse {
            line: 1,
            message: format!("malformed header token '{}'", token),
        })?;
        match key {
            "dim" => {
                dim = Some(value.parse().map_err(|_| ColtError::Parse {
                    line: 1,
                    message: format!("bad dim '{}'", value),
                })?)
            }
            "domain" => {
                domain = Some(match value {
                    "ID" => Domain::Id,
                    "OOD" => Domain::Ood,
                    other => {
                        return Err(ColtError::Parse {
                            line: 1,
                            message: format!("domain must be ID or OOD, got '{}'", other),
                        })
                    }
                })
            }
            "labeled" => {
                labeled = Some(match value {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(ColtError::Parse {
                            line: 1,
                            message: format!("labeled must be 0 or 1, got '{}'", other),
                        })
                    }
                })
            }
            other => {
                return Err(ColtError::Parse {
                    line: 1,
                    message: format!("unknown header key '{}'", other),
                })
            }
        }
    }
    let (dim, domain, labeled) = match (dim, domain, labeled) {
        (Some(d), Some(dom), Some(l)) => (d, dom, l),
        _ => {
            return Err(ColtError::Parse {
                line: 1,
                message: "header must define dim, domain and labeled".to_string(),
            })
        }
    };

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label = if labeled {
            let tok = tokens.next().ok_or_else(|| ColtError::Parse {
                line: line_no,
                message: "missing label".to_string(),
            })?;
            Some(tok.parse::<usize>().map_err(|_| ColtError::Parse {
                line: line_no,
                message: format!("bad label '{}'", tok),
            })?)
        } else {
            None
        };
        let features: Vec<f64> = tokens
            .map(|t| {
                t.parse::<f64>().map_err(|_| ColtError::Parse {
                    line: line_no,
                    message: format!("bad value '{}'", t),
                })
            })
            .collect::<Result<_>>()?;
        if features.len() != dim {
            return Err(ColtError::Parse {
                line: line_no,
                message: format!("expected {} values, got {}", dim, features.len()),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(ColtError::Parse {
                line: line_no,
                message: "non-finite value".to_string(),
            });
        }
        samples.push(LabeledSample {
            features,
            label,
            domain,
            group: None,
        });
    }

    let class_counts = if labeled {
        let num_classes = samples
            .iter()
            .filter_map(|s| s.label)
            .max()
            .map_or(0, |m| m + 1);
        let mut counts = vec![0usize; num_classes];
        for s in &samples {
            counts[s.label.unwrap()] += 1;
        }
        counts
    } else {
        Vec::new()
    };

    Dataset {
        samples,
        class_counts,
        domain,
        dim,
    }
    .validate()
}

/// Writes a dataset in the format read by [`load_embeddings`].
pub fn save_embeddings<P: AsRef<Path>>(dataset: &Dataset, path: P) -> Result<()> {
    let labeled = !dataset.class_counts.is_empty();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(
        out,
        "dim={} domain={} labeled={}",
        dataset.dim,
        dataset.domain,
        if labeled { 1 } else { 0 }
    )?;
    for s in &dataset.samples {
        let mut line = String::new();
        if labeled {
            line.push_str(&s.label.unwrap().to_string());
        }
        for v in &s.features {
            if !line.is_empty() {
                line.push(' ');
            }
            line.push_str(&format!("{}", v));
        }
        writeln!(out, "{}", line)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_spec() -> SyntheticSpec {
        SyntheticSpec {
            num_classes: 10,
            max_class_size: 500,
            imbalance_ratio: 100.0,
            dim: 8,
            id_center_scale: 1.0,
            ood_center_shift: 0.5,
            noise_sigma: 0.3,
        }
    }

    #[test]
    fn longtail_sizes_match_profile() {
        let sizes = class_sizes(&default_spec()).unwrap();
        assert_eq!(sizes[0], 500);
        assert_eq!(*sizes.last().unwrap(), 5); // 500 * 100^-1
        assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        let ratio = sizes[0] as f64 / *sizes.last().unwrap() as f64;
        assert!((ratio / 100.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn balanced_limit_all_equal() {
        let spec = SyntheticSpec {
            imbalance_ratio: 1.0,
            ..default_spec()
        };
        let sizes = class_sizes(&spec).unwrap();
        assert!(sizes.iter().all(|&s| s == 500));
    }

    #[test]
    fn zero_smallest_class_rejected() {
        let spec = SyntheticSpec {
            max_class_size: 10,
            imbalance_ratio: 100.0,
            ..default_spec()
        };
        assert!(class_sizes(&spec).is_err());
    }

    #[test]
    fn longtail_dataset_consistent() {
        let rng = RngStream::new(1);
        let ds = gen_longtail_id(&default_spec(), &rng).unwrap();
        assert_eq!(ds.len(), ds.class_counts.iter().sum::<usize>());
        assert_eq!(ds.samples[0].label, Some(0));
        assert!(ds.samples.iter().all(|s| s.domain == Domain::Id));
    }

    #[test]
    fn train_and_eval_share_class_means() {
        let spec = SyntheticSpec {
            noise_sigma: 0.0,
            ..default_spec()
        };
        let rng = RngStream::new(3);
        let train = gen_longtail_id(&spec, &rng).unwrap();
        let eval = gen_balanced_eval(&spec, 2, &rng).unwrap();
        // with zero noise every sample sits exactly on its class mean
        let first_eval_of_class0 = &eval.samples[0];
        assert_eq!(train.samples[0].features, first_eval_of_class0.features);
    }

    #[test]
    fn ood_pool_rejects_zero_size() {
        let rng = RngStream::new(1);
        assert!(gen_ood_pool(&default_spec(), 0, &rng).is_err());
    }

    #[test]
    fn ood_pool_zero_shift_reuses_id_components() {
        // control condition: with shift 0 and zero noise, the shifted
        // components coincide exactly with the ID class means, so roughly half
        // the pool lands bit-exactly on an ID mean
        let spec = SyntheticSpec {
            ood_center_shift: 0.0,
            noise_sigma: 0.0,
            dim: 4,
            num_classes: 6,
            max_class_size: 10,
            imbalance_ratio: 2.0,
            ..default_spec()
        };
        let rng = RngStream::new(11);
        let pool = gen_ood_pool(&spec, 2_000, &rng).unwrap();
        let means: Vec<Vec<f64>> = gen_balanced_eval(&spec, 1, &rng)
            .unwrap()
            .samples
            .into_iter()
            .map(|s| s.features)
            .collect();
        let on_id_mean = pool
            .samples
            .iter()
            .filter(|s| means.iter().any(|m| *m == s.features))
            .count();
        let share = on_id_mean as f64 / pool.len() as f64;
        assert!(share > 0.35 && share < 0.65, "share {}", share);
    }

    #[test]
    fn views_identity_at_zero_strength() {
        let mut rng = RngStream::new(5);
        let x = vec![1.5, -2.0, 0.25];
        let (a, b) = make_views(&x, 0.0, 0.7, &mut rng);
        assert_eq!(a, x);
        assert_eq!(b, x);
    }

    #[test]
    fn views_differ_at_positive_strength() {
        let mut rng = RngStream::new(5);
        let x = vec![1.5, -2.0, 0.25];
        let (a, b) = make_views(&x, 1.0, 0.7, &mut rng);
        assert_ne!(a, b);
        assert_ne!(a, x);
    }

    #[test]
    fn views_reproducible_for_same_stream() {
        let x = vec![0.3, 0.9, -1.1, 4.0];
        let mut r1 = RngStream::new(8).substream("views");
        let mut r2 = RngStream::new(8).substream("views");
        assert_eq!(make_views(&x, 0.8, 0.5, &mut r1), make_views(&x, 0.8, 0.5, &mut r2));
    }

    #[test]
    fn group_split_one_per_group() {
        let split = group_split(&[500, 300, 5]).unwrap();
        assert_eq!(split.group_of(0), Group::Many);
        assert_eq!(split.group_of(1), Group::Median);
        assert_eq!(split.group_of(2), Group::Few);
    }

    #[test]
    fn group_split_ten_classes_remainder_in_median() {
        let counts: Vec<usize> = (0..10).map(|c| 100 - c).collect();
        let split = group_split(&counts).unwrap();
        assert_eq!(split.classes_in(Group::Many).len(), 3);
        assert_eq!(split.classes_in(Group::Median).len(), 4);
        assert_eq!(split.classes_in(Group::Few).len(), 3);
    }

    #[test]
    fn group_split_tie_break_by_class_id() {
        let split = group_split(&[7, 7, 7]).unwrap();
        assert_eq!(split.group_of(0), Group::Many);
        assert_eq!(split.group_of(1), Group::Median);
        assert_eq!(split.group_of(2), Group::Few);
    }

    #[test]
    fn group_split_too_few_classes() {
        assert!(group_split(&[5, 3]).is_err());
    }

    #[test]
    fn group_split_is_partition() {
        let mut rng = RngStream::new(17);
        for _ in 0..200 {
            let n = 3 + rng.range(20);
            let counts: Vec<usize> = (0..n).map(|_| rng.range(1000)).collect();
            let split = group_split(&counts).unwrap();
            let total = split.classes_in(Group::Many).len()
                + split.classes_in(Group::Median).len()
                + split.classes_in(Group::Few).len();
            assert_eq!(total, n);
        }
    }

    #[test]
    fn embeddings_roundtrip() {
        let rng = RngStream::new(2);
        let mut ds = gen_longtail_id(
            &SyntheticSpec {
                num_classes: 4,
                max_class_size: 6,
                imbalance_ratio: 3.0,
                ..default_spec()
            },
            &rng,
        )
        .unwrap();
        ds.apply_groups(&group_split(&ds.class_counts).unwrap());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        save_embeddings(&ds, &path).unwrap();
        let back = load_embeddings(&path).unwrap();
        assert_eq!(back.len(), ds.len());
        assert_eq!(back.class_counts, ds.class_counts);
        assert_eq!(back.domain, Domain::Id);
        for (a, b) in back.samples.iter().zip(&ds.samples) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn load_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "dim=2 domain=ID labeled=0\n0.5 0.25\n0.5\n").unwrap();
        let err = load_embeddings(&path).unwrap_err();
        match err {
            ColtError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }
}
