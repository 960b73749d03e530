//! End-to-end experiment orchestration: the warm-up/resample training loop,
//! per-epoch metrics, the final evaluation suite, and self-describing run
//! directories.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode};
use crate::datagen::{
    gen_balanced_eval, gen_longtail_id, gen_ood_pool, group_split, load_embeddings, make_views,
    Dataset, Domain, Group, GroupSplit,
};
use crate::encoder::{backward, forward, save_checkpoint, sgd_step, MlpParams};
use crate::error::{ColtError, Result};
use crate::eval::{
    alignment_uniformity, aug_graph_connectivity, connectivity_threshold, linear_probe, nmm,
    tail_discovery_ratio, NmmMatrix, ProbeConfig,
};
use crate::losses::{colt_loss, info_nce, ContrastiveBatch};
use crate::numkit::{Matrix, RngStream};
use crate::sampler::{
    allocate_budget, cluster_tailness, kmeans, rebuild_train_set, select_ood, should_resample,
    RosterEntry, SampleRoster, TrainEntry,
};
use crate::tailness::{tailness_from_logits, TailnessState};

/// Per-epoch training record; evaluation columns are filled on eval epochs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub loss_cl: f64,
    pub loss_scl: f64,
    pub loss_total: f64,
    pub eval: Option<EpochEval>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochEval {
    pub probe_all: f64,
    pub probe_many: f64,
    pub probe_median: f64,
    pub probe_few: f64,
    pub probe_std: f64,
    pub alignment: f64,
    pub uniformity: f64,
}

/// Final probe numbers for one training fraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub fraction: f64,
    pub all: f64,
    pub many: f64,
    pub median: f64,
    pub few: f64,
    pub std: f64,
    pub warnings: Vec<String>,
}

/// Everything two runs must share to be comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub num_classes: usize,
    pub test_size: usize,
    pub fractions: Vec<f64>,
    pub probe_iters: usize,
    pub probe_l2: f64,
}

/// Final metrics of one run, written as `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: String,
    pub seed: u64,
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub resample_epochs: Vec<usize>,
    pub final_loss_cl: f64,
    pub final_loss_scl: f64,
    pub class_counts: Vec<usize>,
    pub group_split: GroupSplit,
    pub probes: Vec<ProbeSummary>,
    pub nmm: NmmMatrix,
    pub alignment: f64,
    pub uniformity: f64,
    pub connectivity: Vec<f64>,
    pub connectivity_threshold: f64,
    pub connectivity_many_mean: f64,
    pub connectivity_few_mean: f64,
    pub phi_major: f64,
    pub phi_minor: f64,
    /// Mean final tailness score of each group's samples.
    pub tailness_mean_many: f64,
    pub tailness_mean_median: f64,
    pub tailness_mean_few: f64,
    pub protocol: Protocol,
}

/// In-memory result of a finished run; the same data lands in the run
/// directory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub metrics: Vec<MetricsRow>,
    pub config: ExperimentConfig,
    /// One report per resampling round (empty in baseline mode).
    pub resamples: Vec<ResampleReport>,
}

/// Diagnostic snapshot of one resampling round.
#[derive(Debug, Clone)]
pub struct ResampleReport {
    pub epoch: usize,
    pub round: usize,
    /// Integer budget per cluster (uniform pseudo-cluster in random mode).
    pub budgets: Vec<usize>,
    pub cluster_tailness: Vec<f64>,
    pub cluster_sizes: Vec<usize>,
    /// Fraction of each cluster's members belonging to the Few / Many groups.
    pub cluster_few_fraction: Vec<f64>,
    pub cluster_many_fraction: Vec<f64>,
}

struct LoadedData {
    id_train: Dataset,
    id_test: Dataset,
    ood_pool: Dataset,
    split: GroupSplit,
}

fn phase<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_phase(name))
}

fn load_data(config: &ExperimentConfig, root: &RngStream) -> Result<LoadedData> {
    let (mut id_train, mut id_test, ood_pool) = if config.data.uses_files() {
        let train = load_embeddings(config.data.id_train_path.as_ref().unwrap())?;
        let test = load_embeddings(config.data.id_test_path.as_ref().unwrap())?;
        let pool = load_embeddings(config.data.ood_pool_path.as_ref().unwrap())?;
        if train.class_counts.is_empty() || test.class_counts.is_empty() {
            return Err(ColtError::Parameter(
                "ID embedding files must be labeled".to_string(),
            ));
        }
        if train.dim != test.dim || train.dim != pool.dim {
            return Err(ColtError::Parameter(format!(
                "embedding dims differ: train {}, test {}, pool {}",
                train.dim, test.dim, pool.dim
            )));
        }
        (train, test, pool)
    } else {
        let spec = config.data.synthetic_spec();
        let data_rng = root.substream("datagen");
        (
            gen_longtail_id(&spec, &data_rng)?,
            gen_balanced_eval(&spec, config.data.test_per_class, &data_rng)?,
            gen_ood_pool(&spec, config.data.ood_pool_size, &data_rng)?,
        )
    };
    let split = group_split(&id_train.class_counts)?;
    id_train.apply_groups(&split);
    id_test.apply_groups(&split);
    Ok(LoadedData {
        id_train,
        id_test,
        ood_pool,
        split,
    })
}

fn embed(params: &MlpParams, features: &Matrix) -> Result<Matrix> {
    Ok(forward(params, features)?.0)
}

/// Raw (pre-encoder) feature lookup for a train entry.
fn entry_features<'a>(data: &'a LoadedData, entry: &TrainEntry) -> &'a [f64] {
    match entry.domain {
        Domain::Id => &data.id_train.samples[entry.index].features,
        Domain::Ood => &data.ood_pool.samples[entry.index].features,
    }
}

/// Builds the two-view raw batch and per-image domain flags.
fn assemble_batch(
    data: &LoadedData,
    entries: &[TrainEntry],
    strength: f64,
    noise_sigma: f64,
    aug_rng: &mut RngStream,
) -> (Matrix, Vec<Domain>) {
    let dim = data.id_train.dim;
    let mut raw = Matrix::zeros(2 * entries.len(), dim);
    let mut domains = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let x = entry_features(data, entry);
        let (v1, v2) = make_views(x, strength, noise_sigma, aug_rng);
        raw.row_mut(2 * i).copy_from_slice(&v1);
        raw.row_mut(2 * i + 1).copy_from_slice(&v2);
        domains.push(entry.domain);
    }
    (raw, domains)
}

/// Generates one augmented view pair per sample and embeds them, interleaved.
fn embedded_view_pairs(
    params: &MlpParams,
    features: &Matrix,
    strength: f64,
    noise_sigma: f64,
    rng: &mut RngStream,
) -> Result<Matrix> {
    let mut raw = Matrix::zeros(2 * features.rows(), features.cols());
    for i in 0..features.rows() {
        let (v1, v2) = make_views(features.row(i), strength, noise_sigma, rng);
        raw.row_mut(2 * i).copy_from_slice(&v1);
        raw.row_mut(2 * i + 1).copy_from_slice(&v2);
    }
    embed(params, &raw)
}

struct EvalContext<'a> {
    data: &'a LoadedData,
    train_labels: Vec<usize>,
    test_labels: Vec<usize>,
    train_features: Matrix,
    test_features: Matrix,
}

impl<'a> EvalContext<'a> {
    fn new(data: &'a LoadedData) -> Self {
        let train_labels = data
            .id_train
            .samples
            .iter()
            .map(|s| s.label.expect("labeled"))
            .collect();
        let test_labels = data
            .id_test
            .samples
            .iter()
            .map(|s| s.label.expect("labeled"))
            .collect();
        Self {
            data,
            train_labels,
            test_labels,
            train_features: data.id_train.features_matrix(),
            test_features: data.id_test.features_matrix(),
        }
    }

    fn probe_config(config: &ExperimentConfig) -> ProbeConfig {
        ProbeConfig {
            iters: config.eval.probe_iters,
            l2: config.eval.probe_l2,
            lr: config.eval.probe_lr,
        }
    }

    /// In-training evaluation: a probe on the first configured fraction plus
    /// alignment/uniformity on the test set.
    fn epoch_eval(
        &self,
        params: &MlpParams,
        config: &ExperimentConfig,
        root: &RngStream,
        epoch: usize,
    ) -> Result<EpochEval> {
        let train_emb = embed(params, &self.train_features)?;
        let test_emb = embed(params, &self.test_features)?;
        let fraction = config.eval.fractions[0];
        let probe = linear_probe(
            &train_emb,
            &self.train_labels,
            &test_emb,
            &self.test_labels,
            &self.data.split,
            fraction,
            &Self::probe_config(config),
            &root.substream_indexed("probe-epoch", epoch as u64),
        )?;
        let mut view_rng = root.substream_indexed("eval-views", epoch as u64);
        let views = embedded_view_pairs(
            params,
            &self.test_features,
            config.data.aug_strength,
            config.data.noise_sigma,
            &mut view_rng,
        )?;
        let (alignment, uniformity) = alignment_uniformity(&views, &test_emb)?;
        Ok(EpochEval {
            probe_all: probe.overall_acc,
            probe_many: probe.groups.many,
            probe_median: probe.groups.median,
            probe_few: probe.groups.few,
            probe_std: probe.groups.std,
            alignment,
            uniformity,
        })
    }
}

/// Runs the full training pipeline and writes all artifacts into `out_dir`:
/// `config.txt`, `metrics.csv`, `summary.json`, `tailness.csv`, `roster.csv`
/// and `checkpoint.txt`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    phase("setup", config.validate())?;
    let resolved = config.resolved();
    let mode = config.train.mode;
    let warmup = config.warmup_epochs();
    let epochs = config.train.epochs;
    let root = RngStream::new(config.train.seed);

    let data = phase("setup", load_data(config, &root))?;
    let sizes: Vec<usize> = std::iter::once(data.id_train.dim)
        .chain(config.encoder.hidden.iter().copied())
        .chain(std::iter::once(config.encoder.embed_dim))
        .collect();
    let mut params = phase(
        "setup",
        MlpParams::init(&sizes, &root.substream("encoder")),
    )?;
    let mut state = phase(
        "setup",
        TailnessState::new(config.tailness.momentum, config.tailness.k_percent),
    )?;

    let id_len = data.id_train.len();
    let pool_features = data.ood_pool.features_matrix();
    let mut train_entries = rebuild_train_set(
        id_len,
        &SampleRoster {
            round: 0,
            entries: vec![],
            warnings: vec![],
        },
    );
    let eval_ctx = EvalContext::new(&data);

    let mut metrics: Vec<MetricsRow> = Vec::with_capacity(epochs);
    let mut rosters: Vec<SampleRoster> = Vec::new();
    let mut resamples: Vec<ResampleReport> = Vec::new();
    let mut resample_epochs: Vec<usize> = Vec::new();
    let mut seen_warnings: std::collections::BTreeSet<String> = Default::default();
    let mut warn = |w: &str| {
        if seen_warnings.insert(w.to_string()) {
            eprintln!("warning: {}", w);
        }
    };

    for epoch in 0..epochs {
        // Resampling runs before the epoch's training, on the schedule.
        if mode != Mode::Baseline && should_resample(epoch, warmup, config.sampler.resample_interval)
        {
            let round = rosters.len();
            let phase_name = format!("resample epoch {epoch}");
            let roster = match mode {
                Mode::Colt => {
                    let id_emb = phase(&phase_name, embed(&params, &eval_ctx.train_features))?;
                    let pool_emb = phase(&phase_name, embed(&params, &pool_features))?;
                    let mut km_rng = root.substream_indexed("kmeans", round as u64);
                    let mut model = phase(
                        &phase_name,
                        kmeans(&id_emb, config.sampler.clusters.min(id_len), &mut km_rng),
                    )?;
                    let scores = phase(&phase_name, cluster_tailness(&model, &state))?;
                    model.cluster_tailness = scores.clone();
                    let allocation = phase(
                        &phase_name,
                        allocate_budget(&scores, config.sampler.budget_k, config.sampler.tau_c),
                    )?;
                    resamples.push(resample_report(
                        epoch,
                        round,
                        &model,
                        &allocation.budgets,
                        &data,
                    ));
                    phase(
                        &phase_name,
                        select_ood(&model.prototypes, &allocation, &pool_emb, round),
                    )?
                }
                Mode::RandomSample => {
                    let mut ids: Vec<usize> = (0..data.ood_pool.len()).collect();
                    let mut rng = root.substream_indexed("random-sample", round as u64);
                    rng.shuffle(&mut ids);
                    let take = config.sampler.budget_k.min(ids.len());
                    if take < config.sampler.budget_k {
                        warn(&format!(
                            "random-sample budget {} exceeds pool size {}",
                            config.sampler.budget_k,
                            ids.len()
                        ));
                    }
                    SampleRoster {
                        round,
                        entries: ids[..take]
                            .iter()
                            .map(|&id| RosterEntry {
                                cluster: 0,
                                ood_id: id,
                                similarity: 0.0,
                            })
                            .collect(),
                        warnings: vec![],
                    }
                }
                Mode::Baseline => unreachable!(),
            };
            for w in &roster.warnings {
                warn(w);
            }
            train_entries = rebuild_train_set(id_len, &roster);
            rosters.push(roster);
            resample_epochs.push(epoch);
        }

        // One training epoch over the shuffled current train set.
        let phase_name = format!("train epoch {epoch}");
        let mut order: Vec<usize> = (0..train_entries.len()).collect();
        root.substream_indexed("shuffle", epoch as u64)
            .shuffle(&mut order);
        let mut aug_rng = root.substream_indexed("augment", epoch as u64);

        let use_scl = mode != Mode::Baseline && epoch >= warmup;
        let mut fresh_scores: BTreeMap<usize, f64> = BTreeMap::new();
        let mut sum_cl = 0.0;
        let mut sum_scl = 0.0;
        let mut sum_total = 0.0;
        let mut anchors = 0usize;

        for chunk in order.chunks(config.train.batch_size) {
            let batch_entries: Vec<TrainEntry> =
                chunk.iter().map(|&i| train_entries[i]).collect();
            let (raw, domains) = assemble_batch(
                &data,
                &batch_entries,
                config.data.aug_strength,
                config.data.noise_sigma,
                &mut aug_rng,
            );
            let (embeddings, trace) = phase(&phase_name, forward(&params, &raw))?;
            let batch = phase(
                &phase_name,
                ContrastiveBatch::new(embeddings, &domains, config.train.tau),
            )?;
            let (out, loss_cl, loss_scl) = if use_scl {
                phase(&phase_name, colt_loss(&batch, config.train.alpha))?
            } else {
                let out = phase(&phase_name, info_nce(&batch))?;
                let loss = out.loss;
                (out, loss, 0.0)
            };
            for w in &out.warnings {
                warn(w);
            }

            let grads = phase(&phase_name, backward(&params, &trace, &out.grad))?;
            let lr = if config.train.lr_warmup_epochs > 0 {
                config.train.lr
                    * ((epoch + 1) as f64 / config.train.lr_warmup_epochs as f64).min(1.0)
            } else {
                config.train.lr
            };
            params = sgd_step(params, &grads, lr, config.train.weight_decay);

            // Fresh tailness of each ID image: mean of its two anchor scores.
            for (img, entry) in batch_entries.iter().enumerate() {
                if entry.domain != Domain::Id {
                    continue;
                }
                let a = &out.neg_logits[2 * img];
                let b = &out.neg_logits[2 * img + 1];
                if a.is_empty() || b.is_empty() {
                    warn("singleton batch has no negatives; tailness not updated");
                    continue;
                }
                let s1 = phase(
                    &phase_name,
                    tailness_from_logits(a, config.tailness.k_percent),
                )?;
                let s2 = phase(
                    &phase_name,
                    tailness_from_logits(b, config.tailness.k_percent),
                )?;
                fresh_scores.insert(entry.index, 0.5 * (s1 + s2));
            }

            let batch_anchors = batch.num_views();
            sum_cl += loss_cl * batch_anchors as f64;
            sum_scl += loss_scl * batch_anchors as f64;
            sum_total += out.loss * batch_anchors as f64;
            anchors += batch_anchors;
        }

        state.momentum_update(&fresh_scores);

        let inv = 1.0 / anchors as f64;
        let eval = if epoch % config.eval.eval_every == 0 || epoch + 1 == epochs {
            Some(phase(
                &format!("eval epoch {epoch}"),
                eval_ctx.epoch_eval(&params, config, &root, epoch),
            )?)
        } else {
            None
        };
        metrics.push(MetricsRow {
            epoch,
            loss_cl: sum_cl * inv,
            loss_scl: sum_scl * inv,
            loss_total: sum_total * inv,
            eval,
        });
    }

    // Final evaluation suite.
    let summary = phase(
        "eval",
        final_eval(
            config,
            &resolved,
            &data,
            &eval_ctx,
            &params,
            &state,
            &root,
            &metrics,
            resample_epochs,
        ),
    )?;

    phase(
        "write",
        write_artifacts(out_dir, &resolved, &metrics, &summary, &state, &rosters, &params, &data),
    )?;

    Ok(RunOutcome {
        summary,
        metrics,
        config: resolved,
        resamples,
    })
}

fn resample_report(
    epoch: usize,
    round: usize,
    model: &crate::sampler::ClusterModel,
    budgets: &[usize],
    data: &LoadedData,
) -> ResampleReport {
    let c = model.num_clusters();
    let mut sizes = vec![0usize; c];
    let mut few = vec![0usize; c];
    let mut many = vec![0usize; c];
    for (sample, &cluster) in model.assignments.iter().enumerate() {
        sizes[cluster] += 1;
        match data.id_train.samples[sample].group {
            Some(Group::Few) => few[cluster] += 1,
            Some(Group::Many) => many[cluster] += 1,
            _ => {}
        }
    }
    let frac = |counts: &[usize]| -> Vec<f64> {
        counts
            .iter()
            .zip(&sizes)
            .map(|(&n, &s)| if s == 0 { 0.0 } else { n as f64 / s as f64 })
            .collect()
    };
    ResampleReport {
        epoch,
        round,
        budgets: budgets.to_vec(),
        cluster_tailness: model.cluster_tailness.clone(),
        cluster_few_fraction: frac(&few),
        cluster_many_fraction: frac(&many),
        cluster_sizes: sizes,
    }
}

#[allow(clippy::too_many_arguments)]
fn final_eval(
    config: &ExperimentConfig,
    resolved: &ExperimentConfig,
    data: &LoadedData,
    eval_ctx: &EvalContext,
    params: &MlpParams,
    state: &TailnessState,
    root: &RngStream,
    metrics: &[MetricsRow],
    resample_epochs: Vec<usize>,
) -> Result<RunSummary> {
    let train_emb = embed(params, &eval_ctx.train_features)?;
    let test_emb = embed(params, &eval_ctx.test_features)?;
    let probe_cfg = EvalContext::probe_config(config);

    let mut probes = Vec::new();
    let mut first_predictions: Option<Vec<usize>> = None;
    for (fi, &fraction) in config.eval.fractions.iter().enumerate() {
        let result = linear_probe(
            &train_emb,
            &eval_ctx.train_labels,
            &test_emb,
            &eval_ctx.test_labels,
            &data.split,
            fraction,
            &probe_cfg,
            &root.substream_indexed("probe-final", fi as u64),
        )?;
        if fi == 0 {
            first_predictions = Some(result.test_predictions.clone());
        }
        probes.push(ProbeSummary {
            fraction,
            all: result.overall_acc,
            many: result.groups.many,
            median: result.groups.median,
            few: result.groups.few,
            std: result.groups.std,
            warnings: result.warnings,
        });
    }

    let nmm_matrix = nmm(
        first_predictions.as_ref().expect("at least one fraction"),
        &eval_ctx.test_labels,
        &data.split,
    )?;

    let mut view_rng = root.substream("final-eval-views");
    let views = embedded_view_pairs(
        params,
        &eval_ctx.test_features,
        config.data.aug_strength,
        config.data.noise_sigma,
        &mut view_rng,
    )?;
    let (alignment, uniformity) = alignment_uniformity(&views, &test_emb)?;

    // Connectivity on a balanced test subset with several views per sample.
    let mut subset_rows: Vec<usize> = Vec::new();
    let mut per_class_taken = vec![0usize; data.split.num_classes()];
    for (i, &label) in eval_ctx.test_labels.iter().enumerate() {
        if per_class_taken[label] < config.eval.connectivity_samples_per_class {
            per_class_taken[label] += 1;
            subset_rows.push(i);
        }
    }
    let mut conn_rng = root.substream("connectivity-views");
    let mut views_per_sample = Vec::with_capacity(subset_rows.len());
    let mut subset_labels = Vec::with_capacity(subset_rows.len());
    for &i in &subset_rows {
        let x = eval_ctx.test_features.row(i);
        let mut raw = Matrix::zeros(config.eval.connectivity_views, eval_ctx.test_features.cols());
        for v in 0..config.eval.connectivity_views {
            let (view, _) = make_views(
                x,
                config.data.aug_strength,
                config.data.noise_sigma,
                &mut conn_rng,
            );
            raw.row_mut(v).copy_from_slice(&view);
        }
        views_per_sample.push(embed(params, &raw)?);
        subset_labels.push(eval_ctx.test_labels[i]);
    }
    let threshold =
        connectivity_threshold(&views_per_sample, config.eval.connectivity_percentile)?;
    let connectivity = aug_graph_connectivity(&views_per_sample, &subset_labels, threshold)?;
    let connectivity_many_mean = group_connectivity_mean(&connectivity, &data.split, Group::Many);
    let connectivity_few_mean = group_connectivity_mean(&connectivity, &data.split, Group::Few);

    let (phi_major, phi_minor) = tail_discovery_ratio(
        state,
        &data.id_train.labels(),
        &data.split,
        config.eval.gamma_percent,
    )?;

    let mut group_score_sums: BTreeMap<Group, (f64, usize)> = BTreeMap::new();
    for (&id, &score) in state.scores() {
        if let Some(group) = data.id_train.samples[id].group {
            let entry = group_score_sums.entry(group).or_insert((0.0, 0));
            entry.0 += score;
            entry.1 += 1;
        }
    }
    let group_score_mean = |g: Group| {
        group_score_sums
            .get(&g)
            .map_or(f64::NAN, |(sum, n)| sum / *n as f64)
    };

    let last = metrics.last().expect("at least one epoch");
    Ok(RunSummary {
        mode: config.train.mode.to_string(),
        seed: config.train.seed,
        epochs: config.train.epochs,
        warmup_epochs: resolved.sampler.warmup_epochs.unwrap_or(0),
        resample_epochs,
        final_loss_cl: last.loss_cl,
        final_loss_scl: last.loss_scl,
        class_counts: data.id_train.class_counts.clone(),
        group_split: data.split.clone(),
        probes,
        nmm: nmm_matrix,
        alignment,
        uniformity,
        connectivity,
        connectivity_threshold: threshold,
        connectivity_many_mean,
        connectivity_few_mean,
        phi_major,
        phi_minor,
        tailness_mean_many: group_score_mean(Group::Many),
        tailness_mean_median: group_score_mean(Group::Median),
        tailness_mean_few: group_score_mean(Group::Few),
        protocol: Protocol {
            num_classes: data.split.num_classes(),
            test_size: eval_ctx.test_labels.len(),
            fractions: config.eval.fractions.clone(),
            probe_iters: config.eval.probe_iters,
            probe_l2: config.eval.probe_l2,
        },
    })
}

fn group_connectivity_mean(connectivity: &[f64], split: &GroupSplit, group: Group) -> f64 {
    let classes = split.classes_in(group);
    classes.iter().map(|&c| connectivity[c]).sum::<f64>() / classes.len() as f64
}

#[allow(clippy::too_many_arguments)]
fn write_artifacts(
    out_dir: &Path,
    resolved: &ExperimentConfig,
    metrics: &[MetricsRow],
    summary: &RunSummary,
    state: &TailnessState,
    rosters: &[SampleRoster],
    params: &MlpParams,
    data: &LoadedData,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    resolved.save(out_dir.join("config.txt"))?;

    let mut metrics_file = std::io::BufWriter::new(std::fs::File::create(
        out_dir.join("metrics.csv"),
    )?);
    writeln!(
        metrics_file,
        "epoch,loss_cl,loss_scl,loss_total,probe_all,probe_many,probe_median,probe_few,probe_std,alignment,uniformity"
    )?;
    for row in metrics {
        match &row.eval {
            Some(e) => writeln!(
                metrics_file,
                "{},{},{},{},{},{},{},{},{},{},{}",
                row.epoch,
                row.loss_cl,
                row.loss_scl,
                row.loss_total,
                e.probe_all,
                e.probe_many,
                e.probe_median,
                e.probe_few,
                e.probe_std,
                e.alignment,
                e.uniformity
            )?,
            None => writeln!(
                metrics_file,
                "{},{},{},{},,,,,,,",
                row.epoch, row.loss_cl, row.loss_scl, row.loss_total
            )?,
        }
    }
    drop(metrics_file);

    let summary_json = serde_json::to_string_pretty(summary)
        .map_err(|e| ColtError::Contract(format!("summary serialization failed: {e}")))?;
    std::fs::write(out_dir.join("summary.json"), summary_json + "\n")?;

    state.dump_csv(&data.id_train.labels(), out_dir.join("tailness.csv"))?;

    let mut roster_file =
        std::io::BufWriter::new(std::fs::File::create(out_dir.join("roster.csv"))?);
    writeln!(roster_file, "round,cluster_id,ood_sample_id,similarity")?;
    for roster in rosters {
        roster.write_csv(&mut roster_file)?;
    }
    drop(roster_file);

    save_checkpoint(params, out_dir.join("checkpoint.txt"))?;
    Ok(())
}

/// One loaded run for comparison.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub name: String,
    pub summary: RunSummary,
}

/// Loads `summary.json` from a run directory.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    let text = std::fs::read_to_string(dir.join("summary.json"))?;
    let summary: RunSummary = serde_json::from_str(&text)
        .map_err(|e| ColtError::Parse {
            line: 0,
            message: format!("summary.json: {e}"),
        })?;
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(LoadedRun { name, summary })
}

/// Comparison table over runs sharing an eval protocol. Deltas are against the
/// first run.
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub mode: String,
    pub seed: u64,
    pub fraction: f64,
    pub many: f64,
    pub median: f64,
    pub few: f64,
    pub std: f64,
    pub all: f64,
    pub delta_many: f64,
    pub delta_median: f64,
    pub delta_few: f64,
    pub delta_std: f64,
    pub delta_all: f64,
}

/// Builds the comparison table; refuses runs with mismatched protocols.
pub fn compare_runs(runs: &[LoadedRun]) -> Result<Comparison> {
    let first = runs.first().ok_or_else(|| {
        ColtError::Parameter("comparison needs at least one run".to_string())
    })?;
    for run in runs.iter().skip(1) {
        if run.summary.protocol != first.summary.protocol {
            return Err(ColtError::Contract(format!(
                "run '{}' uses a different eval protocol than '{}': {:?} vs {:?}",
                run.name, first.name, run.summary.protocol, first.summary.protocol
            )));
        }
    }
    let mut rows = Vec::new();
    for run in runs {
        for probe in &run.summary.probes {
            let base = first
                .summary
                .probes
                .iter()
                .find(|p| p.fraction == probe.fraction)
                .ok_or_else(|| {
                    ColtError::Contract(format!(
                        "fraction {} missing from baseline run",
                        probe.fraction
                    ))
                })?;
            rows.push(ComparisonRow {
                name: run.name.clone(),
                mode: run.summary.mode.clone(),
                seed: run.summary.seed,
                fraction: probe.fraction,
                many: probe.many,
                median: probe.median,
                few: probe.few,
                std: probe.std,
                all: probe.all,
                delta_many: probe.many - base.many,
                delta_median: probe.median - base.median,
                delta_few: probe.few - base.few,
                delta_std: probe.std - base.std,
                delta_all: probe.all - base.all,
            });
        }
    }
    Ok(Comparison { rows })
}

impl Comparison {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:<13} {:>5} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>8} {:>8}\n",
            "run", "mode", "seed", "frac", "many", "median", "few", "std", "all", "d_std", "d_all"
        ));
        for r in &self.rows {
            out.push_str(&format!(
                "{:<24} {:<13} {:>5} {:>6.2} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>+8.4} {:>+8.4}\n",
                r.name,
                r.mode,
                r.seed,
                r.fraction,
                r.many,
                r.median,
                r.few,
                r.std,
                r.all,
                r.delta_std,
                r.delta_all
            ));
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from(
            "run,mode,seed,fraction,many,median,few,std,all,delta_many,delta_median,delta_few,delta_std,delta_all\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                r.name,
                r.mode,
                r.seed,
                r.fraction,
                r.many,
                r.median,
                r.few,
                r.std,
                r.all,
                r.delta_many,
                r.delta_median,
                r.delta_few,
                r.delta_std,
                r.delta_all
            ));
        }
        out
    }
}
