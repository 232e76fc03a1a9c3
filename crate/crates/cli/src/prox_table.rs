//! The prox-table subcommand: tabulate a regularizer and its proximal map
//! over a scalar grid as CSV.

use std::fs;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;

use proxlab_core::prox::{
    prox_binary_l1, prox_binary_l2, prox_kbit, prox_smoothed_w, prox_ternary, DEFAULT_PROX_ROUNDS,
};
use proxlab_core::regularize::{reg_value, RegSpec};

use crate::{Ctx, EXIT_CONFIG};

#[derive(Debug, Args)]
pub struct ProxTableArgs {
    /// Regularizer kind: binary-l1, binary-l2, kbit-l2, ternary-l2, or
    /// smoothed-w.
    #[arg(long, default_value = "binary-l1")]
    pub kind: String,
    /// Bits per coordinate for kbit-l2.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Junction half-width for smoothed-w.
    #[arg(long, default_value_t = 0.2)]
    pub epsilon: f64,
    /// Comma-separated regularization strengths; one table row per (theta,
    /// lambda) pair.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub lambdas: Vec<f64>,
    /// Grid start.
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub lo: f64,
    /// Grid end (inclusive).
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub hi: f64,
    /// Grid spacing.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
}

pub fn cmd_prox_table(ctx: &Ctx, args: &ProxTableArgs) -> Result<ExitCode> {
    let spec = match parse_kind(args) {
        Ok(spec) => spec,
        Err(message) => {
            eprintln!("error: {message}");
            return Ok(ExitCode::from(EXIT_CONFIG));
        }
    };
    if args.step <= 0.0 || !args.step.is_finite() {
        eprintln!("error: --step must be a positive number");
        return Ok(ExitCode::from(EXIT_CONFIG));
    }
    if !args.hi.is_finite() || !args.lo.is_finite() || args.hi < args.lo {
        eprintln!("error: the grid needs finite bounds with --hi >= --lo");
        return Ok(ExitCode::from(EXIT_CONFIG));
    }
    if args.lambdas.is_empty() || args.lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
        eprintln!("error: --lambdas must be nonempty, finite, and nonnegative");
        return Ok(ExitCode::from(EXIT_CONFIG));
    }

    let out_dir = ctx.out_dir();
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let path = out_dir.join("prox-table.csv");
    let mut writer = csv::Writer::from_path(&path)
        .with_context(|| format!("creating {}", path.display()))?;
    writer.write_record(["theta", "lambda", "reg_value", "prox", "error"])?;

    // Point count chosen so an exactly representable span like [-2, 2] with
    // step 0.01 lands on the last endpoint despite rounding.
    let points = ((args.hi - args.lo) / args.step + 1e-9).floor() as usize + 1;
    let mut rows = 0usize;
    let mut marked = 0usize;
    for &lam in &args.lambdas {
        for i in 0..points {
            let theta = args.lo + i as f64 * args.step;
            let reg = match reg_value(&spec, &[theta]) {
                Ok(value) => value.to_string(),
                Err(_) => String::new(),
            };
            let (prox, error) = match prox_point(&spec, theta, lam) {
                Ok(point) => (point.to_string(), String::new()),
                Err(err) => {
                    marked += 1;
                    (String::new(), err.to_string())
                }
            };
            writer.write_record([theta.to_string(), lam.to_string(), reg, prox, error])?;
            rows += 1;
        }
    }
    writer.flush()?;
    if !ctx.quiet {
        println!(
            "prox-table: {rows} rows ({marked} with domain errors) -> {}",
            path.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn parse_kind(args: &ProxTableArgs) -> std::result::Result<RegSpec, String> {
    let spec = match args.kind.as_str() {
        "binary-l1" => RegSpec::BinaryL1,
        "binary-l2" => RegSpec::BinaryL2,
        "kbit-l2" => RegSpec::KBitL2 { k: args.k },
        "ternary-l2" => RegSpec::TernaryL2,
        "smoothed-w" => RegSpec::SmoothedW { epsilon: args.epsilon },
        other => {
            return Err(format!(
                "unknown --kind {other:?}; expected binary-l1, binary-l2, kbit-l2, ternary-l2, \
                 or smoothed-w"
            ))
        }
    };
    spec.validate().map_err(|err| err.to_string())?;
    Ok(spec)
}

/// Scalar prox at strength `lam`. Zero strength is the identity for every
/// kind; smoothed-w uses the restricted operator, so grid points outside its
/// domain report a row-level error instead of a value.
fn prox_point(spec: &RegSpec, theta: f64, lam: f64) -> Result<f64> {
    if lam == 0.0 {
        return Ok(theta);
    }
    let input = [theta];
    let result = match spec {
        RegSpec::BinaryL1 => prox_binary_l1(&input, lam)?,
        RegSpec::BinaryL2 => prox_binary_l2(&input, lam)?,
        RegSpec::KBitL2 { k } => prox_kbit(&input, lam, *k, DEFAULT_PROX_ROUNDS)?,
        RegSpec::TernaryL2 => prox_ternary(&input, lam, DEFAULT_PROX_ROUNDS)?,
        RegSpec::SmoothedW { epsilon } => prox_smoothed_w(&input, lam, *epsilon)?,
    };
    Ok(result.point[0])
}
