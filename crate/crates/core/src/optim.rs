//! Training loops for quantized models: proximal-gradient steps against a
//! quantization regularizer, the straight-through baseline that samples
//! gradients at the sign of the parameters, and the lazy variant that
//! samples gradients at a prox point while accumulating full-precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Objective;
use crate::prox::apply_prox;
use crate::quantize::{alt_quantize, sign, sign_quantize, ternary_quantize, SignPattern, DEFAULT_ALT_ROUNDS};
use crate::regularize::{reg_grad, reg_value, RegSpec};
use crate::ParamVec;

/// Which update rule drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Gradient step on the full-precision parameters, then a prox step
    /// against the regularizer at strength `eta_t * lam_t`.
    ProxQuant,
    /// Gradient sampled at the sign of the parameters, accumulated on the
    /// full-precision parameters.
    BinaryConnect,
    /// Gradient sampled at `prox_{lam R}(theta)`, accumulated on the
    /// full-precision parameters; `lam` is used as given (no `eta` factor).
    LazyProx,
}

/// Learning-rate schedule: constant, or decaying by a fixed factor at step
/// milestones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EtaSchedule {
    Constant { eta: f64 },
    StepDecay { initial: f64, factor: f64, milestones: Vec<u64> },
}

/// Regularization-strength schedule: constant, or the linear homotopy
/// `lam_t = rate * t` that anneals soft quantization into hard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LamSchedule {
    Constant { lam: f64 },
    Homotopy { rate: f64 },
}

/// Step-indexed schedule for the learning rate and regularization strength,
/// with an optional hard freeze.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub eta: EtaSchedule,
    pub lam: LamSchedule,
    /// Step at which parameters are hard-quantized and pinned.
    pub freeze_step: Option<u64>,
}

impl Schedule {
    /// Constant learning rate and strength, no freeze.
    pub fn constant(eta: f64, lam: f64) -> Schedule {
        Schedule {
            eta: EtaSchedule::Constant { eta },
            lam: LamSchedule::Constant { lam },
            freeze_step: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_eta = match &self.eta {
            EtaSchedule::Constant { eta } => eta.is_finite() && *eta > 0.0,
            EtaSchedule::StepDecay { initial, factor, .. } => {
                initial.is_finite() && *initial > 0.0 && factor.is_finite() && *factor > 0.0
            }
        };
        if !ok_eta {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        let ok_lam = match &self.lam {
            LamSchedule::Constant { lam } => lam.is_finite() && *lam >= 0.0,
            LamSchedule::Homotopy { rate } => rate.is_finite() && *rate >= 0.0,
        };
        if !ok_lam {
            return Err(Error::NegativeStrength(f64::NAN));
        }
        Ok(())
    }

    /// Learning rate at step `t`.
    pub fn eta_at(&self, t: u64) -> f64 {
        match &self.eta {
            EtaSchedule::Constant { eta } => *eta,
            EtaSchedule::StepDecay { initial, factor, milestones } => {
                let passed = milestones.iter().filter(|&&m| m <= t).count() as i32;
                initial * factor.powi(passed)
            }
        }
    }

    /// Regularization strength at step `t`; the homotopy grows without
    /// bound until the freeze pins the quantized coordinates.
    pub fn lam_at(&self, t: u64) -> f64 {
        match &self.lam {
            LamSchedule::Constant { lam } => *lam,
            LamSchedule::Homotopy { rate } => rate * t as f64,
        }
    }
}

/// Inner optimizer applied to the full-precision parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InnerOptimizer {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl InnerOptimizer {
    /// The conventional Adam hyperparameters (0.9, 0.999, 1e-8).
    pub fn adam_default() -> InnerOptimizer {
        InnerOptimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-run options shared by every step rule.
#[derive(Debug, Clone)]
pub struct StepOptions {
    pub inner: InnerOptimizer,
    /// Which coordinates are quantized (`None` = all). Unmasked
    /// coordinates — biases, typically — train at full precision and are
    /// never touched by prox, sign, or freeze operations.
    pub mask: Option<Vec<bool>>,
    /// Rounds for the alternating prox kinds.
    pub prox_rounds: usize,
    /// Scale the prox strength per-coordinate by Adam's adaptive rate
    /// instead of the base rate (separable binary kinds only).
    pub adaptive_prox: bool,
}

impl Default for StepOptions {
    fn default() -> StepOptions {
        StepOptions {
            inner: InnerOptimizer::Sgd,
            mask: None,
            prox_rounds: crate::prox::DEFAULT_PROX_ROUNDS,
            adaptive_prox: false,
        }
    }
}

/// Mutable state of one training run.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    /// Full-precision parameters.
    pub theta: ParamVec,
    /// Number of steps taken.
    pub step: u64,
    m: ParamVec,
    v: ParamVec,
    adam_steps: u64,
    frozen: Option<ParamVec>,
}

impl OptimizerState {
    pub fn new(theta0: ParamVec) -> Result<OptimizerState> {
        if theta0.is_empty() {
            return Err(Error::EmptyInput);
        }
        let d = theta0.len();
        Ok(OptimizerState {
            theta: theta0,
            step: 0,
            m: vec![0.0; d],
            v: vec![0.0; d],
            adam_steps: 0,
            frozen: None,
        })
    }

    /// Whether the freeze has fired.
    pub fn is_frozen(&self) -> bool {
        self.frozen.is_some()
    }
}

fn check_mask(mask: Option<&[bool]>, d: usize) -> Result<()> {
    if let Some(m) = mask {
        if m.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: m.len() });
        }
    }
    Ok(())
}

fn masked_indices(mask: Option<&[bool]>, d: usize) -> Vec<usize> {
    match mask {
        Some(m) => (0..d).filter(|&i| m[i]).collect(),
        None => (0..d).collect(),
    }
}

/// Replace the masked coordinates of `theta` with the hard quantization
/// matching `spec` (sign for the binary and smoothed kinds and for
/// `None`, the ternary quantizer, or the `k`-bit codebook reconstruction).
pub fn hard_quantize(spec: Option<&RegSpec>, theta: &[f64], mask: Option<&[bool]>) -> Result<ParamVec> {
    check_mask(mask, theta.len())?;
    let idx = masked_indices(mask, theta.len());
    if idx.is_empty() {
        return Ok(theta.to_vec());
    }
    let sub: ParamVec = idx.iter().map(|&i| theta[i]).collect();
    let quantized = match spec {
        None | Some(RegSpec::BinaryL1) | Some(RegSpec::BinaryL2) | Some(RegSpec::SmoothedW { .. }) => {
            sign_quantize(&sub)?
        }
        Some(RegSpec::TernaryL2) => ternary_quantize(&sub)?.0,
        Some(RegSpec::KBitL2 { k }) => alt_quantize(&sub, *k, DEFAULT_ALT_ROUNDS)?.reconstruct(),
    };
    let mut out = theta.to_vec();
    for (slot, q) in idx.into_iter().zip(quantized) {
        out[slot] = q;
    }
    Ok(out)
}

/// Apply the inner optimizer update `theta -= eta * direction(grad)`.
fn inner_update(state: &mut OptimizerState, inner: &InnerOptimizer, eta: f64, grad: &[f64]) {
    match inner {
        InnerOptimizer::Sgd => {
            for (t, g) in state.theta.iter_mut().zip(grad) {
                *t -= eta * g;
            }
        }
        InnerOptimizer::Momentum { beta } => {
            for ((t, m), g) in state.theta.iter_mut().zip(&mut state.m).zip(grad) {
                *m = beta * *m + g;
                *t -= eta * *m;
            }
        }
        InnerOptimizer::Adam { beta1, beta2, eps } => {
            state.adam_steps += 1;
            let t_corr = state.adam_steps as i32;
            let bc1 = 1.0 - beta1.powi(t_corr);
            let bc2 = 1.0 - beta2.powi(t_corr);
            for ((t, (m, v)), g) in state
                .theta
                .iter_mut()
                .zip(state.m.iter_mut().zip(&mut state.v))
                .zip(grad)
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *t -= eta * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// At `freeze_step`, hard-quantize the masked coordinates and pin them;
/// afterwards they are bitwise constant while the rest keep training.
fn maybe_freeze(
    state: &mut OptimizerState,
    schedule: &Schedule,
    spec: Option<&RegSpec>,
    opts: &StepOptions,
) -> Result<()> {
    if state.frozen.is_none() && schedule.freeze_step == Some(state.step) {
        state.theta = hard_quantize(spec, &state.theta, opts.mask.as_deref())?;
        state.frozen = Some(state.theta.clone());
    }
    Ok(())
}

fn restore_frozen(state: &mut OptimizerState, mask: Option<&[bool]>) {
    if let Some(pins) = &state.frozen {
        for i in masked_indices(mask, state.theta.len()) {
            state.theta[i] = pins[i];
        }
    }
}

/// The point a baseline samples its gradient at: masked coordinates are
/// replaced by their sign (straight-through) or their prox point (lazy).
pub fn gradient_eval_point(
    algorithm: Algorithm,
    theta: &[f64],
    spec: Option<&RegSpec>,
    lam: f64,
    opts: &StepOptions,
) -> Result<ParamVec> {
    check_mask(opts.mask.as_deref(), theta.len())?;
    let idx = masked_indices(opts.mask.as_deref(), theta.len());
    let mut point = theta.to_vec();
    if idx.is_empty() {
        return Ok(point);
    }
    let sub: ParamVec = idx.iter().map(|&i| theta[i]).collect();
    let replaced = match algorithm {
        Algorithm::ProxQuant => sub, // prox-gradient samples at theta itself
        Algorithm::BinaryConnect => sign_quantize(&sub)?,
        Algorithm::LazyProx => {
            let spec = spec.ok_or_else(|| {
                Error::InvalidArgument("lazy prox requires a regularizer spec".into())
            })?;
            apply_prox(spec, &sub, lam, opts.prox_rounds)?.point
        }
    };
    for (slot, value) in idx.into_iter().zip(replaced) {
        point[slot] = value;
    }
    Ok(point)
}

/// One prox-gradient step: inner-optimizer update at `theta`, then a prox
/// step on the masked coordinates at strength `eta_t * lam_t` (the base
/// learning rate, regardless of the inner optimizer's per-coordinate
/// scaling, unless `adaptive_prox` asks otherwise).
pub fn step_proxquant(
    state: &mut OptimizerState,
    objective: &dyn Objective,
    spec: &RegSpec,
    schedule: &Schedule,
    opts: &StepOptions,
    batch: Option<&[usize]>,
) -> Result<()> {
    spec.validate()?;
    schedule.validate()?;
    check_mask(opts.mask.as_deref(), state.theta.len())?;
    maybe_freeze(state, schedule, Some(spec), opts)?;
    let t = state.step;
    let eta = schedule.eta_at(t);
    let lam = schedule.lam_at(t);

    let grad = objective.grad(&state.theta, batch)?;
    if grad.len() != state.theta.len() {
        return Err(Error::DimensionMismatch { expected: state.theta.len(), got: grad.len() });
    }
    inner_update(state, &opts.inner, eta, &grad);

    if state.is_frozen() {
        restore_frozen(state, opts.mask.as_deref());
    } else {
        let idx = masked_indices(opts.mask.as_deref(), state.theta.len());
        if !idx.is_empty() && lam > 0.0 {
            let sub: ParamVec = idx.iter().map(|&i| state.theta[i]).collect();
            let proxed = if opts.adaptive_prox {
                adaptive_prox_point(state, spec, &idx, &sub, eta, lam, opts)?
            } else {
                apply_prox(spec, &sub, eta * lam, opts.prox_rounds)?.point
            };
            for (slot, value) in idx.into_iter().zip(proxed) {
                state.theta[slot] = value;
            }
        }
    }
    state.step += 1;
    Ok(())
}

/// Per-coordinate prox strengths from Adam's adaptive rate. Only the
/// separable binary kinds support this; the coupled kinds reject it.
fn adaptive_prox_point(
    state: &OptimizerState,
    spec: &RegSpec,
    idx: &[usize],
    sub: &[f64],
    eta: f64,
    lam: f64,
    opts: &StepOptions,
) -> Result<ParamVec> {
    let InnerOptimizer::Adam { beta2, eps, .. } = opts.inner else {
        return Err(Error::InvalidArgument(
            "adaptive_prox requires the adam inner optimizer".into(),
        ));
    };
    let bc2 = 1.0 - beta2.powi(state.adam_steps as i32);
    let strengths: Vec<f64> = idx
        .iter()
        .map(|&i| {
            let v_hat = if bc2 > 0.0 { state.v[i] / bc2 } else { 0.0 };
            eta * lam / (v_hat.sqrt() + eps)
        })
        .collect();
    match spec {
        RegSpec::BinaryL1 => Ok(sub
            .iter()
            .zip(&strengths)
            .map(|(&x, &s)| {
                let sgn = sign(x);
                let gap = x - sgn;
                sgn + sign(gap) * (gap.abs() - s).max(0.0)
            })
            .collect()),
        RegSpec::BinaryL2 => Ok(sub
            .iter()
            .zip(&strengths)
            .map(|(&x, &s)| (x + s * sign(x)) / (1.0 + s))
            .collect()),
        _ => Err(Error::Unsupported(
            "adaptive_prox is defined only for the separable binary kinds".into(),
        )),
    }
}

/// One straight-through step: gradient at the sign of the masked
/// coordinates, accumulated on the full-precision parameters.
pub fn step_binaryconnect(
    state: &mut OptimizerState,
    objective: &dyn Objective,
    schedule: &Schedule,
    opts: &StepOptions,
    batch: Option<&[usize]>,
) -> Result<()> {
    schedule.validate()?;
    check_mask(opts.mask.as_deref(), state.theta.len())?;
    maybe_freeze(state, schedule, None, opts)?;
    let eta = schedule.eta_at(state.step);
    let point = gradient_eval_point(Algorithm::BinaryConnect, &state.theta, None, 0.0, opts)?;
    let grad = objective.grad(&point, batch)?;
    if grad.len() != state.theta.len() {
        return Err(Error::DimensionMismatch { expected: state.theta.len(), got: grad.len() });
    }
    inner_update(state, &opts.inner, eta, &grad);
    restore_frozen(state, opts.mask.as_deref());
    state.step += 1;
    Ok(())
}

/// One lazy prox-gradient step: gradient at `prox_{lam_t R}(theta)`,
/// accumulated on the full-precision parameters. The strength is `lam_t`
/// alone — this is the rule whose fixed `lam` oscillates where the
/// prox-gradient rule converges.
pub fn step_lazyprox(
    state: &mut OptimizerState,
    objective: &dyn Objective,
    spec: &RegSpec,
    schedule: &Schedule,
    opts: &StepOptions,
    batch: Option<&[usize]>,
) -> Result<()> {
    spec.validate()?;
    schedule.validate()?;
    check_mask(opts.mask.as_deref(), state.theta.len())?;
    maybe_freeze(state, schedule, Some(spec), opts)?;
    let eta = schedule.eta_at(state.step);
    let lam = schedule.lam_at(state.step);
    let point = gradient_eval_point(Algorithm::LazyProx, &state.theta, Some(spec), lam, opts)?;
    let grad = objective.grad(&point, batch)?;
    if grad.len() != state.theta.len() {
        return Err(Error::DimensionMismatch { expected: state.theta.len(), got: grad.len() });
    }
    inner_update(state, &opts.inner, eta, &grad);
    restore_frozen(state, opts.mask.as_deref());
    state.step += 1;
    Ok(())
}

/// One logged point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub epoch: u64,
    /// Full-batch loss.
    pub loss: f64,
    /// Loss plus `lam_t` times the regularizer over the masked coordinates
    /// (absent when the run has no regularizer).
    pub f_lambda: Option<f64>,
    /// Norm of the full-batch gradient — of the composite when the
    /// regularizer is differentiable, of the loss otherwise.
    pub grad_norm: f64,
    /// Distance moved by the most recent step.
    pub step_proximity: f64,
    /// Fraction of masked coordinates whose sign differs from the start.
    pub sign_change: f64,
    /// Evaluation metric at the hard-quantized parameters, when the run
    /// has an evaluator.
    pub quantized_error: Option<f64>,
}

/// Configuration of [`run`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Required for the prox methods, forbidden for the straight-through
    /// baseline.
    pub spec: Option<RegSpec>,
    pub schedule: Schedule,
    pub opts: StepOptions,
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed for the per-epoch batch shuffles.
    pub shuffle_seed: u64,
    /// Record every this many epochs (epoch ends; the last epoch always
    /// records).
    pub log_every: usize,
}

/// The objective, start point, and evaluator of one run.
pub struct RunSetup<'a> {
    pub objective: &'a dyn Objective,
    pub theta0: ParamVec,
    /// Evaluation metric (e.g. held-out error) applied to hard-quantized
    /// parameters at every logged step.
    pub eval_quantized: Option<&'a (dyn Fn(&[f64]) -> f64 + Sync)>,
}

/// A finished (or aborted) run: the trace, the divergence flag, and the
/// final full-precision parameters.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    /// True when training aborted on a non-finite loss or parameter; the
    /// trace then holds everything logged up to the failure.
    pub diverged: bool,
    pub final_theta: ParamVec,
}

/// Drive a full training run, logging per `log_every` epochs.
///
/// Batch-free objectives take one full-batch step per epoch. The epoch-0
/// record is always present, so zero epochs yield exactly the initial
/// record. Identical configurations and seeds produce bitwise-identical
/// traces.
pub fn run(setup: &RunSetup, cfg: &RunConfig) -> Result<RunOutput> {
    cfg.schedule.validate()?;
    if let Some(spec) = &cfg.spec {
        spec.validate()?;
    }
    match cfg.algorithm {
        Algorithm::ProxQuant | Algorithm::LazyProx => {
            if cfg.spec.is_none() {
                return Err(Error::InvalidArgument(
                    "prox algorithms require a regularizer spec".into(),
                ));
            }
        }
        Algorithm::BinaryConnect => {
            if cfg.spec.is_some() {
                return Err(Error::InvalidArgument(
                    "the straight-through baseline takes no regularizer".into(),
                ));
            }
        }
    }
    if setup.theta0.len() != setup.objective.dim() {
        return Err(Error::DimensionMismatch {
            expected: setup.objective.dim(),
            got: setup.theta0.len(),
        });
    }
    check_mask(cfg.opts.mask.as_deref(), setup.theta0.len())?;
    if cfg.log_every == 0 {
        return Err(Error::InvalidArgument("log_every must be >= 1".into()));
    }
    let n = setup.objective.num_examples();
    if n > 0 && cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }

    let mut state = OptimizerState::new(setup.theta0.clone())?;
    let start_signs = masked_sign_pattern(&state.theta, cfg.opts.mask.as_deref());
    let mut last_move = 0.0;
    let mut records = Vec::new();
    let mut diverged = false;

    match record(setup, cfg, &state, 0, last_move, &start_signs) {
        Ok(rec) => records.push(rec),
        Err(Error::NonFinite { .. }) => diverged = true,
        Err(e) => return Err(e),
    }

    'epochs: for epoch in 1..=cfg.epochs {
        if diverged {
            break;
        }
        let batches: Vec<Option<Vec<usize>>> = if n > 0 {
            crate::data::batch_positions(n, cfg.batch_size, cfg.shuffle_seed, epoch as u64)?
                .into_iter()
                .map(Some)
                .collect()
        } else {
            vec![None]
        };
        for batch in batches {
            let before = state.theta.clone();
            let stepped = match cfg.algorithm {
                Algorithm::ProxQuant => step_proxquant(
                    &mut state,
                    setup.objective,
                    cfg.spec.as_ref().expect("checked"),
                    &cfg.schedule,
                    &cfg.opts,
                    batch.as_deref(),
                ),
                Algorithm::BinaryConnect => step_binaryconnect(
                    &mut state,
                    setup.objective,
                    &cfg.schedule,
                    &cfg.opts,
                    batch.as_deref(),
                ),
                Algorithm::LazyProx => step_lazyprox(
                    &mut state,
                    setup.objective,
                    cfg.spec.as_ref().expect("checked"),
                    &cfg.schedule,
                    &cfg.opts,
                    batch.as_deref(),
                ),
            };
            match stepped {
                Ok(()) => {}
                Err(Error::NonFinite { .. }) => {
                    diverged = true;
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            if state.theta.iter().any(|t| !t.is_finite()) {
                diverged = true;
                break 'epochs;
            }
            last_move = state
                .theta
                .iter()
                .zip(&before)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
        if epoch % cfg.log_every == 0 || epoch == cfg.epochs {
            match record(setup, cfg, &state, epoch as u64, last_move, &start_signs) {
                Ok(rec) => records.push(rec),
                Err(Error::NonFinite { .. }) => {
                    diverged = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
    }

    Ok(RunOutput { records, diverged, final_theta: state.theta })
}

fn masked_sign_pattern(theta: &[f64], mask: Option<&[bool]>) -> SignPattern {
    let idx = masked_indices(mask, theta.len());
    let sub: ParamVec = idx.iter().map(|&i| theta[i]).collect();
    SignPattern::of(&sub)
}

fn record(
    setup: &RunSetup,
    cfg: &RunConfig,
    state: &OptimizerState,
    epoch: u64,
    last_move: f64,
    start_signs: &SignPattern,
) -> Result<TraceRecord> {
    let theta = &state.theta;
    let loss = setup.objective.eval(theta, None)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite { context: "loss at logging point".into() });
    }
    let lam = cfg.schedule.lam_at(state.step);
    let mask = cfg.opts.mask.as_deref();
    let idx = masked_indices(mask, theta.len());
    let sub: ParamVec = idx.iter().map(|&i| theta[i]).collect();

    let f_lambda = match &cfg.spec {
        Some(spec) if !sub.is_empty() => Some(loss + lam * reg_value(spec, &sub)?),
        _ => None,
    };

    let mut grad = setup.objective.grad(theta, None)?;
    if let Some(spec @ RegSpec::SmoothedW { .. }) = &cfg.spec {
        if !sub.is_empty() {
            let rg = reg_grad(spec, &sub)?;
            for (slot, g) in idx.iter().zip(rg) {
                grad[*slot] += lam * g;
            }
        }
    }
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();

    let sign_change = if sub.is_empty() {
        0.0
    } else {
        SignPattern::of(&sub).hamming_fraction(start_signs)?
    };

    let quantized_error = match setup.eval_quantized {
        Some(eval) => {
            let q = hard_quantize(cfg.spec.as_ref(), theta, mask)?;
            Some(eval(&q))
        }
        None => None,
    };

    Ok(TraceRecord {
        step: state.step,
        epoch,
        loss,
        f_lambda,
        grad_norm,
        step_proximity: last_move,
        sign_change,
        quantized_error,
    })
}
