//! The train subcommand: run every configured seed in parallel, write one
//! JSONL trace per seed, and summarize final metrics as mean(std) across
//! seeds.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use proxlab_core::model::MlpObjective;
use proxlab_core::optim::{run, RunConfig, RunOutput, Schedule, StepOptions, TraceRecord};

use crate::config::{self, Experiment};
use crate::{Ctx, EXIT_CONFIG, EXIT_DIVERGED};

/// Mean and sample standard deviation across seeds (std 0 for one seed).
#[derive(Debug, Serialize)]
struct MeanStd {
    mean: f64,
    std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            var.sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, std })
    }
}

/// Final metrics across seeds; `null` statistics mean every seed diverged.
#[derive(Debug, Serialize)]
struct Summary {
    algorithm: String,
    epochs: usize,
    seeds: Vec<u64>,
    diverged_seeds: Vec<u64>,
    final_loss: Option<MeanStd>,
    final_quantized_error: Option<MeanStd>,
    final_sign_change: Option<MeanStd>,
}

struct SeedOutcome {
    seed: u64,
    diverged: bool,
    final_record: Option<TraceRecord>,
    trace_path: PathBuf,
}

pub fn cmd_train(ctx: &Ctx) -> Result<ExitCode> {
    let Some(config_path) = &ctx.config else {
        eprintln!("error: train requires --config PATH");
        return Ok(ExitCode::from(EXIT_CONFIG));
    };
    let experiment =
        match config::load_experiment(config_path, ctx.out.as_deref(), ctx.seed_override) {
            Ok(experiment) => experiment,
            Err(err) => {
                eprintln!("error: {err:#}");
                return Ok(ExitCode::from(EXIT_CONFIG));
            }
        };
    let Experiment { config, dataset, mlp, out_dir } = &experiment;
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let objective = MlpObjective::new(
        mlp.clone(),
        dataset.features(),
        dataset.labels(),
        dataset.train_indices().to_vec(),
    )?;
    let eval_rows: Vec<usize> = if dataset.test_indices().is_empty() {
        dataset.train_indices().to_vec()
    } else {
        dataset.test_indices().to_vec()
    };
    let eval = |quantized: &[f64]| -> f64 {
        objective.error_rate(quantized, &eval_rows).unwrap_or(f64::NAN)
    };

    let steps_per_epoch = dataset.train_indices().len().div_ceil(config.batch_size) as u64;
    let schedule = Schedule {
        eta: config.schedule.eta.clone(),
        lam: config.schedule.lam.clone(),
        freeze_step: config.schedule.freeze_epoch.map(|e| e as u64 * steps_per_epoch),
    };
    let opts = StepOptions {
        inner: config.optimizer.clone(),
        mask: Some(mlp.quantizable_mask()),
        prox_rounds: config.prox_rounds,
        adaptive_prox: config.adaptive_prox,
    };

    let outcomes: Vec<SeedOutcome> = thread_pool()?.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&seed| -> Result<SeedOutcome> {
                let run_config = RunConfig {
                    algorithm: config.algorithm,
                    spec: config.regularizer.clone(),
                    schedule: schedule.clone(),
                    opts: opts.clone(),
                    epochs: config.epochs,
                    batch_size: config.batch_size,
                    shuffle_seed: seed,
                    log_every: config.log_every,
                };
                let setup = proxlab_core::optim::RunSetup {
                    objective: &objective,
                    theta0: mlp.init_params(seed),
                    eval_quantized: Some(&eval),
                };
                let output = run(&setup, &run_config)
                    .with_context(|| format!("training seed {seed}"))?;
                let trace_path = out_dir.join(format!("trace-seed-{seed}.jsonl"));
                write_trace(&trace_path, &output)?;
                Ok(SeedOutcome {
                    seed,
                    diverged: output.diverged,
                    final_record: output.records.last().cloned(),
                    trace_path,
                })
            })
            .collect::<Result<Vec<SeedOutcome>>>()
    })?;

    let finished: Vec<&SeedOutcome> = outcomes.iter().filter(|o| !o.diverged).collect();
    let finals = |field: &dyn Fn(&TraceRecord) -> Option<f64>| -> Vec<f64> {
        finished.iter().filter_map(|o| o.final_record.as_ref().and_then(field)).collect()
    };
    let summary = Summary {
        algorithm: algorithm_tag(config.algorithm),
        epochs: config.epochs,
        seeds: config.seeds.clone(),
        diverged_seeds: outcomes.iter().filter(|o| o.diverged).map(|o| o.seed).collect(),
        final_loss: MeanStd::of(&finals(&|r| Some(r.loss))),
        final_quantized_error: MeanStd::of(&finals(&|r| r.quantized_error)),
        final_sign_change: MeanStd::of(&finals(&|r| Some(r.sign_change))),
    };
    let summary_path = out_dir.join("summary.json");
    let mut body = serde_json::to_string_pretty(&summary)?;
    body.push('\n');
    fs::write(&summary_path, body)
        .with_context(|| format!("writing {}", summary_path.display()))?;

    if !ctx.quiet {
        for outcome in &outcomes {
            if outcome.diverged {
                println!(
                    "seed {}: DIVERGED, partial trace -> {}",
                    outcome.seed,
                    outcome.trace_path.display()
                );
            } else if let Some(record) = &outcome.final_record {
                println!(
                    "seed {}: {} epochs, final loss {:.6}, quantized error {} -> {}",
                    outcome.seed,
                    config.epochs,
                    record.loss,
                    record
                        .quantized_error
                        .map_or_else(|| "n/a".to_string(), |e| format!("{e:.4}")),
                    outcome.trace_path.display()
                );
            }
        }
        println!("summary -> {}", summary_path.display());
    }

    if outcomes.iter().any(|o| o.diverged) {
        Ok(ExitCode::from(EXIT_DIVERGED))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

/// Seeds run on a pool sized by PROXLAB_THREADS when set (default: one
/// worker per core).
fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("PROXLAB_THREADS") {
        match raw.trim().parse::<usize>() {
            Ok(n) if n >= 1 => builder = builder.num_threads(n),
            _ => eprintln!("warning: ignoring PROXLAB_THREADS={raw:?}; expected a positive integer"),
        }
    }
    builder.build().context("building the seed worker pool")
}

/// One JSON record per line, terminal newline included.
fn write_trace(path: &PathBuf, output: &RunOutput) -> Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut writer = std::io::BufWriter::new(file);
    for record in &output.records {
        let line = serde_json::to_string(record)?;
        writeln!(writer, "{line}")?;
    }
    writer.flush()?;
    Ok(())
}

fn algorithm_tag(algorithm: proxlab_core::optim::Algorithm) -> String {
    match algorithm {
        proxlab_core::optim::Algorithm::ProxQuant => "proxquant",
        proxlab_core::optim::Algorithm::BinaryConnect => "binaryconnect",
        proxlab_core::optim::Algorithm::LazyProx => "lazyprox",
    }
    .to_string()
}
