//! Experiment runner CLI.
//!
//! Verbs: `run <config>`, `compare <dir>...`, `dump-scores <dir>`,
//! `eval-embeddings <file>`. Exit code 0 on success, nonzero with a
//! structured message on stderr otherwise.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use colt_core::config::{ExperimentConfig, Mode};
use colt_core::datagen::{group_split, load_embeddings};
use colt_core::eval::{alignment_uniformity, linear_probe, nmm, ProbeConfig};
use colt_core::experiment::{compare_runs, load_run, run_experiment, LoadedRun};
use colt_core::numkit::{row_normalize, RngStream};

#[derive(Parser)]
#[command(name = "colt", about = "Contrastive long-tail training with OOD sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a config file.
    Run {
        /// Path to the TOML config.
        config: PathBuf,
        /// Run directory (default: runs/<config-stem>-<mode>-s<seed>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's mode (baseline | colt | random-sample).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Compare finished runs; the first directory is the baseline for deltas.
    Compare {
        /// Run directories containing summary.json.
        dirs: Vec<PathBuf>,
        /// Where to write the CSV table.
        #[arg(long, default_value = "comparison.csv")]
        out: PathBuf,
    },
    /// Print a run's tailness scores as CSV (group means go to stderr).
    DumpScores {
        /// Run directory.
        dir: PathBuf,
    },
    /// Evaluate an embedding file without training.
    EvalEmbeddings {
        /// Embedding file (header `dim=<d> domain=<ID|OOD> labeled=<0|1>`).
        file: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<Mode> {
    match s {
        "baseline" => Ok(Mode::Baseline),
        "colt" => Ok(Mode::Colt),
        "random-sample" => Ok(Mode::RandomSample),
        other => bail!("unknown mode '{other}' (expected baseline, colt or random-sample)"),
    }
}

fn cmd_run(
    config_path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    mode: Option<String>,
) -> Result<()> {
    let mut config = ExperimentConfig::load(config_path)
        .with_context(|| format!("loading {}", config_path.display()))?;
    if let Some(seed) = seed {
        config.train.seed = seed;
    }
    if let Some(mode) = mode {
        config.train.mode = parse_mode(&mode)?;
    }
    let out_dir = out.unwrap_or_else(|| {
        let stem = config_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".to_string());
        PathBuf::from("runs").join(format!(
            "{}-{}-s{}",
            stem, config.train.mode, config.train.seed
        ))
    });
    let outcome = run_experiment(&config, &out_dir)?;
    println!("run written to {}", out_dir.display());
    for probe in &outcome.summary.probes {
        println!(
            "fraction {:>5.2}: all {:.4}  many {:.4}  median {:.4}  few {:.4}  std {:.4}",
            probe.fraction, probe.all, probe.many, probe.median, probe.few, probe.std
        );
    }
    println!(
        "phi_major {:.3}  phi_minor {:.3}  alignment {:.4}  uniformity {:.4}",
        outcome.summary.phi_major,
        outcome.summary.phi_minor,
        outcome.summary.alignment,
        outcome.summary.uniformity
    );
    Ok(())
}

fn cmd_compare(dirs: &[PathBuf], out: &Path) -> Result<()> {
    if dirs.is_empty() {
        bail!("compare needs at least one run directory");
    }
    let runs: Vec<LoadedRun> = dirs
        .iter()
        .map(|d| load_run(d).with_context(|| format!("loading run {}", d.display())))
        .collect::<Result<_>>()?;
    let comparison = compare_runs(&runs)?;
    print!("{}", comparison.render_text());
    std::fs::write(out, comparison.render_csv())
        .with_context(|| format!("writing {}", out.display()))?;
    eprintln!("csv written to {}", out.display());
    Ok(())
}

fn cmd_dump_scores(dir: &Path) -> Result<()> {
    let csv_path = dir.join("tailness.csv");
    let text = std::fs::read_to_string(&csv_path)
        .with_context(|| format!("reading {}", csv_path.display()))?;
    print!("{text}");

    // group means as a side channel when the summary is available
    if let Ok(run) = load_run(dir) {
        let mut sums = std::collections::BTreeMap::new();
        for line in text.lines().skip(1) {
            let mut fields = line.split(',');
            let (Some(_), Some(class), Some(score)) =
                (fields.next(), fields.next(), fields.next())
            else {
                continue;
            };
            let (Ok(class), Ok(score)) = (class.parse::<usize>(), score.parse::<f64>()) else {
                continue;
            };
            let group = run.summary.group_split.group_of(class);
            let entry = sums.entry(format!("{group}")).or_insert((0.0, 0usize));
            entry.0 += score;
            entry.1 += 1;
        }
        for (group, (sum, count)) in sums {
            eprintln!(
                "{group}: mean score {:.6} over {count} samples",
                sum / count as f64
            );
        }
    }
    Ok(())
}

fn cmd_eval_embeddings(file: &Path) -> Result<()> {
    let dataset = load_embeddings(file)?;
    let emb = row_normalize(&dataset.features_matrix())?;
    let mut report = serde_json::Map::new();
    report.insert("file".into(), file.display().to_string().into());
    report.insert("samples".into(), dataset.len().into());
    report.insert("dim".into(), dataset.dim.into());
    report.insert("domain".into(), dataset.domain.to_string().into());

    // uniformity is label-free
    let (_, uniformity) = alignment_uniformity(&emb, &emb)?;
    report.insert("uniformity".into(), uniformity.into());

    if !dataset.class_counts.is_empty() {
        if dataset.class_counts.len() < 3 {
            bail!("labeled evaluation needs at least 3 classes for the group split");
        }
        let split = group_split(&dataset.class_counts)?;
        let labels: Vec<usize> = dataset.samples.iter().map(|s| s.label.unwrap()).collect();
        let probe = linear_probe(
            &emb,
            &labels,
            &emb,
            &labels,
            &split,
            1.0,
            &ProbeConfig::default(),
            &RngStream::new(0),
        )?;
        let matrix = nmm(&probe.test_predictions, &labels, &split)?;
        report.insert("overall_acc".into(), probe.overall_acc.into());
        report.insert("many_acc".into(), probe.groups.many.into());
        report.insert("median_acc".into(), probe.groups.median.into());
        report.insert("few_acc".into(), probe.groups.few.into());
        report.insert("std".into(), probe.groups.std.into());
        report.insert(
            "nmm".into(),
            serde_json::to_value(&matrix).context("nmm serialization")?,
        );
    }

    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            mode,
        } => cmd_run(&config, out, seed, mode),
        Command::Compare { dirs, out } => cmd_compare(&dirs, &out),
        Command::DumpScores { dir } => cmd_dump_scores(&dir),
        Command::EvalEmbeddings { file } => cmd_eval_embeddings(&file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
