//! The theory, signchange, and gradcheck subcommands: run scripted
//! verifications and write each report as JSON.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use serde::Deserialize;

use proxlab_core::theorylab::{
    sign_change_report, verify_gradcheck, verify_theorem1, verify_theorem2,
    verify_theorem3_default, verify_toy_failure, SignChangeConfig, VerificationReport,
};

use crate::{Ctx, EXIT_CONFIG};

/// Every named verification, in the order "all" runs them.
const REGISTRY: [&str; 6] =
    ["toy-failure", "theorem1", "theorem2", "theorem3", "sign-change", "gradcheck"];

pub fn cmd_theory(ctx: &Ctx, name: &str) -> Result<ExitCode> {
    let names: Vec<&str> = if name == "all" {
        REGISTRY.to_vec()
    } else if REGISTRY.contains(&name) {
        vec![name]
    } else {
        eprintln!(
            "error: unknown verification {name:?}; known names: all, {}",
            REGISTRY.join(", ")
        );
        return Ok(ExitCode::from(EXIT_CONFIG));
    };

    let out_dir = ctx.out_dir();
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;

    let mut all_pass = true;
    for name in names {
        let report = match run_verification(ctx, name) {
            Ok(report) => report,
            Err(err) => {
                eprintln!("error: {err:#}");
                return Ok(ExitCode::from(EXIT_CONFIG));
            }
        };
        let path = out_dir.join(format!("theory-{name}.json"));
        write_json(&path, &report)?;
        if !ctx.quiet {
            let verdict = if report.pass { "PASS" } else { "FAIL" };
            println!(
                "theory {name}: {verdict} ({} warnings) -> {}",
                report.warnings.len(),
                path.display()
            );
            for warning in &report.warnings {
                println!("  warning: {warning}");
            }
        }
        all_pass &= report.pass;
    }
    Ok(if all_pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

pub fn cmd_signchange(ctx: &Ctx) -> Result<ExitCode> {
    let report = match run_verification(ctx, "sign-change") {
        Ok(report) => report,
        Err(err) => {
            eprintln!("error: {err:#}");
            return Ok(ExitCode::from(EXIT_CONFIG));
        }
    };
    finish_single(ctx, "signchange.json", &report)
}

pub fn cmd_gradcheck(ctx: &Ctx) -> Result<ExitCode> {
    let report = verify_gradcheck(ctx.seed_override.unwrap_or(11))?;
    finish_single(ctx, "gradcheck.json", &report)
}

fn run_verification(ctx: &Ctx, name: &str) -> Result<VerificationReport> {
    let seed = ctx.seed_override;
    let report = match name {
        "toy-failure" => verify_toy_failure()?,
        "theorem1" => verify_theorem1(&[10, 100, 1000], seed.unwrap_or(7))?,
        "theorem2" => verify_theorem2()?,
        "theorem3" => verify_theorem3_default(seed.unwrap_or(5))?,
        "sign-change" => {
            let mut cfg = sign_change_config(ctx.config.as_deref())?;
            if let Some(seed) = seed {
                cfg.data_seed = seed;
            }
            cfg.validate().context("invalid sign-change configuration")?;
            sign_change_report(&cfg)?
        }
        "gradcheck" => verify_gradcheck(seed.unwrap_or(11))?,
        other => anyhow::bail!("unknown verification {other:?}"),
    };
    Ok(report)
}

fn finish_single(ctx: &Ctx, file_name: &str, report: &VerificationReport) -> Result<ExitCode> {
    let out_dir = ctx.out_dir();
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let path = out_dir.join(file_name);
    write_json(&path, report)?;
    if !ctx.quiet {
        let verdict = if report.pass { "PASS" } else { "FAIL" };
        println!(
            "{}: {verdict} ({} warnings) -> {}",
            report.name,
            report.warnings.len(),
            path.display()
        );
        for warning in &report.warnings {
            println!("  warning: {warning}");
        }
    }
    Ok(if report.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

/// Optional experiment knobs for the sign-change study; anything omitted
/// keeps the stock value.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignChangeOverrides {
    data_seed: Option<u64>,
    n: Option<usize>,
    classes: Option<usize>,
    dim: Option<usize>,
    spread: Option<f64>,
    hidden: Option<Vec<usize>>,
    warm_epochs: Option<usize>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    eta: Option<f64>,
    homotopy_rate: Option<f64>,
    freeze_fraction: Option<f64>,
    seeds: Option<Vec<u64>>,
}

fn sign_change_config(config_path: Option<&Path>) -> Result<SignChangeConfig> {
    let mut cfg = SignChangeConfig::default();
    let Some(path) = config_path else {
        return Ok(cfg);
    };
    let raw = fs::read_to_string(path)
        .with_context(|| format!("reading config file {}", path.display()))?;
    let overrides: SignChangeOverrides = toml::from_str(&raw)
        .with_context(|| format!("parsing sign-change config {}", path.display()))?;
    macro_rules! merge {
        ($($field:ident),*) => {
            $(if let Some(value) = overrides.$field { cfg.$field = value; })*
        };
    }
    merge!(
        data_seed, n, classes, dim, spread, hidden, warm_epochs, epochs, batch_size, eta,
        homotopy_rate, freeze_fraction, seeds
    );
    Ok(cfg)
}

fn write_json(path: &PathBuf, report: &VerificationReport) -> Result<()> {
    let mut body = serde_json::to_string_pretty(report)?;
    body.push('\n');
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}
