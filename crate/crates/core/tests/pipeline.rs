//! End-to-end pipeline tests on small, fast configurations.

use colt_core::config::{ExperimentConfig, Mode};
use colt_core::datagen::{gen_balanced_eval, gen_longtail_id, gen_ood_pool, save_embeddings};
use colt_core::experiment::{compare_runs, load_run, run_experiment};
use colt_core::numkit::RngStream;

/// Small config that exercises warm-up, two resampling rounds and both losses
/// in a few seconds.
fn small_config(mode: Mode, seed: u64) -> ExperimentConfig {
    let mut config = ExperimentConfig::default();
    config.data.num_classes = 6;
    config.data.max_class_size = 60;
    config.data.imbalance_ratio = 20.0;
    config.data.dim = 8;
    config.data.noise_sigma = 0.8;
    config.data.ood_pool_size = 600;
    config.data.test_per_class = 20;
    config.encoder.hidden = vec![16];
    config.encoder.embed_dim = 8;
    config.train.epochs = 14;
    config.train.batch_size = 64;
    config.train.mode = mode;
    config.train.seed = seed;
    config.sampler.budget_k = 80;
    config.sampler.clusters = 4;
    config.sampler.resample_interval = 5;
    config.sampler.warmup_epochs = Some(4);
    config.eval.fractions = vec![1.0];
    config.eval.probe_iters = 120;
    config.eval.eval_every = 7;
    config.eval.connectivity_samples_per_class = 5;
    config.eval.connectivity_views = 3;
    config
}

#[test]
fn run_is_deterministic_byte_for_byte() {
    let config = small_config(Mode::Colt, 11);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_experiment(&config, dir_a.path()).unwrap();
    run_experiment(&config, dir_b.path()).unwrap();
    for file in [
        "metrics.csv",
        "summary.json",
        "tailness.csv",
        "roster.csv",
        "config.txt",
        "checkpoint.txt",
    ] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between identical runs");
    }
}

#[test]
fn different_seeds_differ() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = run_experiment(&small_config(Mode::Colt, 1), dir_a.path()).unwrap();
    let b = run_experiment(&small_config(Mode::Colt, 2), dir_b.path()).unwrap();
    assert_ne!(
        a.metrics[0].loss_cl.to_bits(),
        b.metrics[0].loss_cl.to_bits()
    );
}

#[test]
fn degenerate_colt_matches_baseline_bitwise() {
    // K = 0 and alpha = 0 must reproduce the baseline loss trajectory exactly
    let mut colt = small_config(Mode::Colt, 3);
    colt.sampler.budget_k = 0;
    colt.train.alpha = 0.0;
    let baseline = {
        let mut c = small_config(Mode::Baseline, 3);
        c.sampler.budget_k = 0;
        c.train.alpha = 0.0;
        c
    };
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let colt_out = run_experiment(&colt, dir_a.path()).unwrap();
    let base_out = run_experiment(&baseline, dir_b.path()).unwrap();
    assert_eq!(colt_out.metrics.len(), base_out.metrics.len());
    for (c, b) in colt_out.metrics.iter().zip(&base_out.metrics) {
        assert_eq!(c.loss_cl.to_bits(), b.loss_cl.to_bits(), "epoch {}", c.epoch);
        assert_eq!(c.loss_scl.to_bits(), b.loss_scl.to_bits());
        assert_eq!(c.loss_total.to_bits(), b.loss_total.to_bits());
    }
}

#[test]
fn resample_epochs_follow_schedule() {
    let config = small_config(Mode::Colt, 5);
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config, dir.path()).unwrap();
    // w = 4, r = 5, epochs = 14 -> rounds at 4, 9, 14 is out of range, so 4, 9
    assert_eq!(out.summary.resample_epochs, vec![4, 9]);
    // baseline never resamples
    let dir_b = tempfile::tempdir().unwrap();
    let base = run_experiment(&small_config(Mode::Baseline, 5), dir_b.path()).unwrap();
    assert!(base.summary.resample_epochs.is_empty());
}

#[test]
fn run_directory_is_self_describing() {
    let config = small_config(Mode::Colt, 7);
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&config, dir.path()).unwrap();

    // the stored config reproduces the run
    let stored = ExperimentConfig::load(dir.path().join("config.txt")).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let again = run_experiment(&stored, dir2.path()).unwrap();
    assert_eq!(
        out.metrics.last().unwrap().loss_cl.to_bits(),
        again.metrics.last().unwrap().loss_cl.to_bits()
    );

    // summary loads back and matches
    let loaded = load_run(dir.path()).unwrap();
    assert_eq!(loaded.summary.seed, 7);
    assert_eq!(loaded.summary.mode, "colt");
}

#[test]
fn roster_respects_budget_and_round_structure() {
    let config = small_config(Mode::Colt, 9);
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&config, dir.path()).unwrap();
    let roster = std::fs::read_to_string(dir.path().join("roster.csv")).unwrap();
    let mut per_round: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for line in roster.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        per_round
            .entry(fields[0].parse().unwrap())
            .or_default()
            .push(fields[2].parse().unwrap());
    }
    assert_eq!(per_round.len(), 2);
    for (round, ids) in per_round {
        assert_eq!(ids.len(), 80, "round {round} budget");
        let unique: std::collections::BTreeSet<usize> = ids.iter().copied().collect();
        assert_eq!(unique.len(), ids.len(), "round {round} has duplicate ids");
    }
}

#[test]
fn random_sample_mode_runs_and_differs_from_colt() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let colt = run_experiment(&small_config(Mode::Colt, 13), dir_a.path()).unwrap();
    let random = run_experiment(&small_config(Mode::RandomSample, 13), dir_b.path()).unwrap();
    // identical until the first resample epoch, divergent afterwards
    assert_eq!(
        colt.metrics[3].loss_cl.to_bits(),
        random.metrics[3].loss_cl.to_bits()
    );
    assert_ne!(
        colt.metrics[6].loss_cl.to_bits(),
        random.metrics[6].loss_cl.to_bits()
    );
}

#[test]
fn file_backed_run_matches_synthetic_data_flow() {
    // dump a synthetic dataset to embedding files and run from those
    let config = small_config(Mode::Colt, 21);
    let spec = config.data.synthetic_spec();
    let rng = RngStream::new(33).substream("datagen");
    let train = gen_longtail_id(&spec, &rng).unwrap();
    let test = gen_balanced_eval(&spec, 10, &rng).unwrap();
    let pool = gen_ood_pool(&spec, 300, &rng).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let train_path = dir.path().join("train.txt");
    let test_path = dir.path().join("test.txt");
    let pool_path = dir.path().join("pool.txt");
    save_embeddings(&train, &train_path).unwrap();
    save_embeddings(&test, &test_path).unwrap();
    save_embeddings(&pool, &pool_path).unwrap();

    let mut file_config = config.clone();
    file_config.data.id_train_path = Some(train_path.display().to_string());
    file_config.data.id_test_path = Some(test_path.display().to_string());
    file_config.data.ood_pool_path = Some(pool_path.display().to_string());
    file_config.sampler.budget_k = 40;

    let out_dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&file_config, out_dir.path()).unwrap();
    assert_eq!(out.summary.class_counts, train.class_counts);
}

#[test]
fn comparison_of_identical_runs_has_zero_deltas() {
    let config = small_config(Mode::Colt, 17);
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_experiment(&config, dir_a.path()).unwrap();
    run_experiment(&config, dir_b.path()).unwrap();
    let runs = vec![
        load_run(dir_a.path()).unwrap(),
        load_run(dir_b.path()).unwrap(),
    ];
    let comparison = compare_runs(&runs).unwrap();
    assert_eq!(comparison.rows.len(), 2);
    for row in &comparison.rows {
        assert_eq!(row.delta_std, 0.0);
        assert_eq!(row.delta_all, 0.0);
    }
    // single-run comparison equals its own summary
    let single = compare_runs(&runs[..1]).unwrap();
    assert_eq!(single.rows.len(), 1);
    assert_eq!(single.rows[0].all, comparison.rows[0].all);
}

#[test]
fn comparison_deltas_match_hand_subtraction() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_experiment(&small_config(Mode::Baseline, 25), dir_a.path()).unwrap();
    run_experiment(&small_config(Mode::Colt, 25), dir_b.path()).unwrap();
    let runs = vec![
        load_run(dir_a.path()).unwrap(),
        load_run(dir_b.path()).unwrap(),
    ];
    let comparison = compare_runs(&runs).unwrap();
    let base = &runs[0].summary.probes[0];
    let colt = &runs[1].summary.probes[0];
    let row = &comparison.rows[1];
    assert_eq!(row.delta_all, colt.all - base.all);
    assert_eq!(row.delta_few, colt.few - base.few);
    assert_eq!(row.delta_std, colt.std - base.std);
}

#[test]
fn mismatched_protocols_refused() {
    let config = small_config(Mode::Colt, 19);
    let mut other = config.clone();
    other.eval.probe_iters = 99;
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_experiment(&config, dir_a.path()).unwrap();
    run_experiment(&other, dir_b.path()).unwrap();
    let runs = vec![
        load_run(dir_a.path()).unwrap(),
        load_run(dir_b.path()).unwrap(),
    ];
    assert!(compare_runs(&runs).is_err());
}

#[test]
fn structured_error_names_phase() {
    let mut config = small_config(Mode::Colt, 23);
    config.data.id_train_path = Some("/nonexistent/file.txt".to_string());
    config.data.id_test_path = Some("/nonexistent/file.txt".to_string());
    config.data.ood_pool_path = Some("/nonexistent/file.txt".to_string());
    let dir = tempfile::tempdir().unwrap();
    let err = run_experiment(&config, dir.path()).unwrap_err();
    assert!(err.to_string().contains("[setup]"), "{err}");
}
