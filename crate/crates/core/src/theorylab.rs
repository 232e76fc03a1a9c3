//! Numerical verification of the method's theory: the toy failure case for
//! the straight-through baseline, the prox-gradient convergence bound, the
//! lazy-rule oscillation construction, the sign fixed-point census, and the
//! sign-change training experiment.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data;
use crate::error::{Error, Result};
use crate::model::{
    quadratic_shift, scalar_quadratic, smoothed_composite, toy_pair, Activation, LossKind,
    MlpObjective, MlpSpec, Objective,
};
use crate::optim::{
    hard_quantize, step_binaryconnect, step_lazyprox, step_proxquant, Algorithm, EtaSchedule,
    InnerOptimizer, LamSchedule, OptimizerState, Schedule, StepOptions,
};
use crate::quantize::{sign, SignPattern};
use crate::regularize::{smoothed_w_deriv, smoothed_w_value, RegSpec};
use crate::ParamVec;

/// Outcome of one scripted verification: what was measured, against what
/// tolerance, and whether it passed. Deterministic given the seed; the pass
/// flag is a pure function of the measured quantities and the tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub name: String,
    pub pass: bool,
    /// Named scalar measurements (bounds, residuals, counts as floats).
    pub measured: BTreeMap<String, f64>,
    pub tolerance: f64,
    pub seed: u64,
    /// Non-fatal observations, e.g. inconclusive simulations.
    pub warnings: Vec<String>,
}

impl VerificationReport {
    fn new(name: &str, tolerance: f64, seed: u64) -> VerificationReport {
        VerificationReport {
            name: name.to_string(),
            pass: true,
            measured: BTreeMap::new(),
            tolerance,
            seed,
            warnings: Vec::new(),
        }
    }

    fn insert(&mut self, key: &str, value: f64) {
        self.measured.insert(key.to_string(), value);
    }

    fn require(&mut self, ok: bool, warning: &str) {
        if !ok {
            self.pass = false;
            self.warnings.push(warning.to_string());
        }
    }
}

/// Fraction of coordinates whose signs differ, `‖sign(a) − sign(b)‖₁ / (2d)`
/// with `sign(0) = +1`. A metric on sign patterns, invariant to positive
/// coordinate-wise scaling.
pub fn sign_change(theta1: &[f64], theta2: &[f64]) -> Result<f64> {
    if theta1.is_empty() || theta2.is_empty() {
        return Err(Error::EmptyInput);
    }
    SignPattern::of(theta1).hamming_fraction(&SignPattern::of(theta2))
}

/// Sign patterns visited by the straight-through baseline: the pattern of
/// `theta_0`, then the pattern after each of `steps` constant-rate steps.
pub fn bc_sign_trace(
    objective: &dyn Objective,
    theta0: &[f64],
    eta: f64,
    steps: usize,
) -> Result<Vec<SignPattern>> {
    let mut state = OptimizerState::new(theta0.to_vec())?;
    let schedule = Schedule::constant(eta, 0.0);
    let opts = StepOptions::default();
    let mut trace = Vec::with_capacity(steps + 1);
    trace.push(SignPattern::of(&state.theta));
    for _ in 0..steps {
        step_binaryconnect(&mut state, objective, &schedule, &opts, None)?;
        trace.push(SignPattern::of(&state.theta));
    }
    Ok(trace)
}

/// Length of the longest run of consecutive equal patterns.
pub fn longest_constant_run(patterns: &[SignPattern]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for i in 0..patterns.len() {
        if i == 0 || patterns[i] != patterns[i - 1] {
            run = 1;
        } else {
            run += 1;
        }
        best = best.max(run);
    }
    best
}

/// The pair of piecewise-linear functions the straight-through baseline
/// cannot tell apart: identical sign trajectories on both, hence the wrong
/// binary answer on one, while the prox-gradient method with a strength
/// homotopy recovers each minimizer.
pub fn verify_toy_failure() -> Result<VerificationReport> {
    let mut report = VerificationReport::new("toy-failure", 1e-9, 0);
    let f_plus = toy_pair(1)?;
    let f_minus = toy_pair(-1)?;
    let theta0 = 0.3;
    let eta = 0.1;

    let trace_plus = bc_sign_trace(&f_plus, &[theta0], eta, 200)?;
    let trace_minus = bc_sign_trace(&f_minus, &[theta0], eta, 200)?;
    let identical = trace_plus == trace_minus;
    report.insert("bc_trajectories_identical", if identical { 1.0 } else { 0.0 });
    report.require(identical, "straight-through sign trajectories differ across the pair");

    // The shared final answer must be suboptimal for at least one function.
    let s_final = trace_plus.last().expect("nonempty trace").to_param_vec();
    let gap = |f: &dyn Objective| -> Result<f64> {
        let best = f.eval(&[1.0], None)?.min(f.eval(&[-1.0], None)?);
        Ok(f.eval(&s_final, None)? - best)
    };
    let suboptimal_gap = gap(&f_plus)?.max(gap(&f_minus)?);
    report.insert("bc_suboptimal_gap", suboptimal_gap);
    report.require(suboptimal_gap > 0.5, "shared answer not suboptimal on either function");

    // Prox-gradient with a linear strength homotopy lands on each correct
    // binary minimizer exactly (soft-thresholding saturates).
    let pq_final = |objective: &dyn Objective| -> Result<f64> {
        let mut state = OptimizerState::new(vec![theta0])?;
        let schedule = Schedule {
            eta: EtaSchedule::Constant { eta },
            lam: LamSchedule::Homotopy { rate: 0.01 },
            freeze_step: None,
        };
        let opts = StepOptions::default();
        for _ in 0..2000 {
            step_proxquant(&mut state, objective, &RegSpec::BinaryL1, &schedule, &opts, None)?;
        }
        Ok(state.theta[0])
    };
    let pq_plus = pq_final(&f_plus)?;
    let pq_minus = pq_final(&f_minus)?;
    report.insert("pq_final_on_plus", pq_plus);
    report.insert("pq_final_on_minus", pq_minus);
    report.require(
        (pq_plus - f_plus.binary_minimizer()).abs() <= report.tolerance,
        "prox-gradient missed the first minimizer",
    );
    report.require(
        (pq_minus - f_minus.binary_minimizer()).abs() <= report.tolerance,
        "prox-gradient missed the second minimizer",
    );
    Ok(report)
}

/// Locate the minimum of a 1-D function by a fixed-width grid scan refined
/// with golden-section search around the best cell.
fn locate_minimum(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, step: f64) -> (f64, f64) {
    let n = ((hi - lo) / step).ceil() as usize;
    let mut best_x = lo;
    let mut best_f = f(lo);
    for i in 1..=n {
        let x = lo + step * i as f64;
        let fx = f(x);
        if fx < best_f {
            best_f = fx;
            best_x = x;
        }
    }
    let (gx, gf) = golden_section(f, (best_x - step).max(lo), (best_x + step).min(hi));
    if gf < best_f {
        (gx, gf)
    } else {
        (best_x, best_f)
    }
}

fn golden_section(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        if (b - a).abs() < 1e-15 {
            break;
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Convergence bound for the prox-gradient method on the quadratic plus
/// smoothed-W composite: over random starts in [−1, 1] and each horizon
/// `T`, the squared composite gradient at the step of least displacement
/// stays within `18 β (F(θ_0) − F*) / T`, and the least squared
/// displacement stays within `2 (F(θ_0) − F*) / (β T)`.
pub fn verify_theorem1(t_values: &[usize], seed: u64) -> Result<VerificationReport> {
    if t_values.is_empty() || t_values.contains(&0) {
        return Err(Error::InvalidArgument("horizons must be nonempty and >= 1".into()));
    }
    let mut report = VerificationReport::new("theorem1", 1.0, seed);
    let epsilon = 0.2;
    let lam = 1.0;
    let loss = scalar_quadratic();
    let composite = smoothed_composite(&loss, lam, epsilon)?;
    let beta = composite
        .smoothness_bound()
        .ok_or_else(|| Error::InvalidSpec("composite must expose a smoothness bound".into()))?;
    let eta = 1.0 / (2.0 * beta);

    let objective_1d = |x: f64| {
        0.5 * x * x + lam * smoothed_w_value(x, epsilon)
    };
    let (x_star, f_star) = locate_minimum(&objective_1d, -1.5, 1.5, 1e-6);
    report.insert("f_star", f_star);
    report.insert("x_star", x_star);
    report.insert("beta", beta);
    report.insert("eta", eta);

    let spec = RegSpec::SmoothedW { epsilon };
    let schedule = Schedule::constant(eta, lam);
    let opts = StepOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inits: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut max_ratio = 0.0f64;
    let mut max_prox_ratio = 0.0f64;
    for &t_total in t_values {
        for &x0 in &inits {
            let gap = composite.eval(&[x0], None)? - f_star;
            let mut state = OptimizerState::new(vec![x0])?;
            let mut best_disp2 = f64::INFINITY;
            let mut theta_after_best = x0;
            for _ in 0..t_total {
                let before = state.theta[0];
                step_proxquant(&mut state, &loss, &spec, &schedule, &opts, None)?;
                let disp2 = (state.theta[0] - before).powi(2);
                if disp2 < best_disp2 {
                    best_disp2 = disp2;
                    theta_after_best = state.theta[0];
                }
            }
            let lhs = composite.grad(&[theta_after_best], None)?[0].powi(2);
            let rhs = 18.0 * beta * gap / t_total as f64;
            let prox_rhs = 2.0 * gap / (beta * t_total as f64);
            if rhs > 1e-12 {
                max_ratio = max_ratio.max(lhs / rhs);
                max_prox_ratio = max_prox_ratio.max(best_disp2 / prox_rhs);
            } else {
                // Started at the optimum: the gradient must vanish too.
                report.require(lhs <= 1e-9, "zero-gap start with nonzero gradient");
            }
        }
    }
    report.insert("max_bound_ratio", max_ratio);
    report.insert("max_proximity_ratio", max_prox_ratio);
    report.insert("num_runs", (t_values.len() * inits.len()) as f64);
    report.require(max_ratio <= 1.0, "gradient bound ratio exceeded 1");
    report.require(max_prox_ratio <= 1.0, "proximity bound ratio exceeded 1");
    Ok(report)
}

/// Non-convergence of the lazy rule: on the quadratic plus smoothed-W
/// instance (ε = 0.2, λ = 1) with `θ_0 = ηλ/(2λ + (2−η)ε)`, the lazy
/// iterates oscillate as `(−1)^t θ_0` to within 1e−10 for 1000 steps at
/// each η ∈ {0.1, 0.25, 0.5}, with ±θ_0 well clear of every stationary
/// point — while the prox-gradient rule on the same instance drives the
/// composite gradient below 1e−6.
pub fn verify_theorem2() -> Result<VerificationReport> {
    let mut report = VerificationReport::new("theorem2", 1e-10, 0);
    let epsilon = 0.2;
    let lam = 1.0;
    let spec = RegSpec::SmoothedW { epsilon };
    let objective = scalar_quadratic();
    let opts = StepOptions::default();

    for &eta in &[0.1, 0.25, 0.5] {
        let theta0 = eta * lam / (2.0 * lam + (2.0 - eta) * epsilon);
        let schedule = Schedule::constant(eta, lam);
        let mut state = OptimizerState::new(vec![theta0])?;
        let mut max_residual = 0.0f64;
        for t in 1..=1000u64 {
            step_lazyprox(&mut state, &objective, &spec, &schedule, &opts, None)?;
            let expected = if t % 2 == 0 { theta0 } else { -theta0 };
            max_residual = max_residual.max((state.theta[0] - expected).abs());
        }
        report.insert(&format!("theta0_eta_{eta}"), theta0);
        report.insert(&format!("oscillation_residual_eta_{eta}"), max_residual);
        report.require(
            max_residual <= report.tolerance,
            &format!("lazy iterates left the period-2 orbit at eta = {eta}"),
        );

        // The orbit is not an artifact of sitting on a stationary point.
        let stationary = lam / (epsilon + lam);
        let margin = theta0
            .abs()
            .min((theta0 - stationary).abs())
            .min((theta0 + stationary).abs());
        report.insert(&format!("stationary_margin_eta_{eta}"), margin);
        report.require(margin > 1e-3, "oscillation point too close to a stationary point");
    }

    // The non-lazy rule converges on the identical instance.
    let eta = 0.5;
    let theta0 = eta * lam / (2.0 * lam + (2.0 - eta) * epsilon);
    let schedule = Schedule::constant(eta, lam);
    let mut state = OptimizerState::new(vec![theta0])?;
    for _ in 0..2000 {
        step_proxquant(&mut state, &objective, &spec, &schedule, &opts, None)?;
    }
    let theta = state.theta[0];
    let grad_norm = (theta + lam * smoothed_w_deriv(theta, epsilon)).abs();
    report.insert("proxquant_final_theta", theta);
    report.insert("proxquant_grad_norm", grad_norm);
    report.require(grad_norm <= 1e-6, "prox-gradient did not reach a stationary point");
    Ok(report)
}

/// Simulation horizon for fixed-point stability claims.
const FIXED_POINT_HORIZON: u64 = 10_000;
/// Gradient coordinates smaller than this are exempt from the sign
/// condition (the "nonzero gradient" qualifier).
const FIXED_POINT_MARGIN: f64 = 1e-8;

/// Census of the straight-through baseline's sign fixed points: a pattern
/// `s` is fixed iff every coordinate with `|∇L(s)_i| ≥` margin satisfies
/// `sign(∇L(s)_i) = −s_i`. Each candidate's analytic verdict is
/// cross-checked by simulation from a start with matching signs: a
/// predicted-fixed pattern must never flip; a predicted-unstable pattern
/// should flip within the horizon, and is reported inconclusive (never
/// failed) if it does not.
pub fn verify_theorem3(
    objective: &dyn Objective,
    candidates: Option<&[SignPattern]>,
    seed: u64,
) -> Result<VerificationReport> {
    let d = objective.dim();
    let owned;
    let candidates: &[SignPattern] = match candidates {
        Some(c) => {
            if let Some(bad) = c.iter().find(|p| p.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
            }
            c
        }
        None => {
            if d > 16 {
                return Err(Error::InvalidArgument(
                    "enumerating sign patterns needs dim <= 16; pass an explicit candidate list"
                        .into(),
                ));
            }
            owned = SignPattern::enumerate(d);
            &owned
        }
    };

    let mut report = VerificationReport::new("theorem3", FIXED_POINT_MARGIN, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = Schedule::constant(0.05, 0.0);
    let opts = StepOptions::default();
    let mut fixed_points = 0usize;
    let mut confirmed_flips = 0usize;
    let mut inconclusive = 0usize;

    for s in candidates {
        let grad = objective.grad(&s.to_param_vec(), None)?;
        let predicted_fixed = grad
            .iter()
            .zip(s.signs())
            .all(|(&g, &si)| g.abs() < FIXED_POINT_MARGIN || sign(g) == -f64::from(si));

        // Start with the candidate's signs and random magnitudes in [0.5, 1.5).
        let theta0: ParamVec =
            s.signs().iter().map(|&si| f64::from(si) * (0.5 + rng.gen::<f64>())).collect();
        let mut state = OptimizerState::new(theta0)?;
        let mut flipped = false;
        for _ in 0..FIXED_POINT_HORIZON {
            step_binaryconnect(&mut state, objective, &schedule, &opts, None)?;
            if SignPattern::of(&state.theta) != *s {
                flipped = true;
                break;
            }
        }

        match (predicted_fixed, flipped) {
            (true, false) => fixed_points += 1,
            (false, true) => confirmed_flips += 1,
            (true, true) => {
                report.require(false, &format!("predicted-fixed pattern {:?} flipped", s.signs()));
            }
            (false, false) => {
                inconclusive += 1;
                report.warnings.push(format!(
                    "pattern {:?} predicted unstable but did not flip within the horizon",
                    s.signs()
                ));
            }
        }
    }

    report.insert("candidates", candidates.len() as f64);
    report.insert("fixed_points", fixed_points as f64);
    report.insert("confirmed_flips", confirmed_flips as f64);
    report.insert("inconclusive", inconclusive as f64);
    Ok(report)
}

/// The default fixed-point census: a shifted quadratic with every target
/// magnitude in (1.1, 3) — whose unique fixed point is the target's sign
/// pattern — plus the toy pair, which has none, and on which the
/// straight-through baseline's sign pattern never stays constant for a
/// thousand steps.
pub fn verify_theorem3_default(seed: u64) -> Result<VerificationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 6;
    let center: ParamVec = (0..dim)
        .map(|_| {
            let magnitude = 1.1 + 1.9 * rng.gen::<f64>();
            let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            s * magnitude
        })
        .collect();
    let quad = quadratic_shift(center)?;
    let quad_report = verify_theorem3(&quad, None, seed)?;

    let mut report = VerificationReport::new("theorem3", FIXED_POINT_MARGIN, seed);
    report.pass = quad_report.pass;
    report.warnings = quad_report.warnings;
    for (key, value) in &quad_report.measured {
        report.insert(&format!("quad_{key}"), *value);
    }
    report.require(
        quad_report.measured["fixed_points"] == 1.0,
        "shifted quadratic should have exactly one sign fixed point",
    );
    report.require(
        quad_report.measured["inconclusive"] == 0.0,
        "shifted quadratic census should be fully conclusive",
    );

    for (tag, which) in [("plus", 1i8), ("minus", -1i8)] {
        let objective = toy_pair(which)?;
        let toy_report = verify_theorem3(&objective, None, seed)?;
        report.pass &= toy_report.pass;
        report.insert(&format!("toy_{tag}_fixed_points"), toy_report.measured["fixed_points"]);
        report.require(
            toy_report.measured["fixed_points"] == 0.0,
            "toy objectives should have no sign fixed points",
        );
    }

    // With no fixed point, the baseline's sign pattern cannot hold for any
    // thousand-step window.
    let trace = bc_sign_trace(&toy_pair(1)?, &[0.3], 0.1, FIXED_POINT_HORIZON as usize)?;
    let longest = longest_constant_run(&trace) as f64;
    report.insert("bc_longest_constant_run", longest);
    report.require(longest < 1000.0, "baseline sign pattern stayed constant for 1000 steps");
    Ok(report)
}

/// Gradient checks: network backpropagation against central finite
/// differences on random coordinates of random networks, and the smoothed-W
/// derivative against finite differences away from its junction points.
pub fn verify_gradcheck(seed: u64) -> Result<VerificationReport> {
    let mut report = VerificationReport::new("gradcheck", 1e-4, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let configs: [(Vec<usize>, Activation, LossKind); 5] = [
        (vec![3, 5, 2], Activation::Tanh, LossKind::CrossEntropy),
        (vec![4, 6, 3], Activation::Tanh, LossKind::Squared),
        (vec![2, 4, 4, 2], Activation::Relu, LossKind::CrossEntropy),
        (vec![5, 3, 2], Activation::Relu, LossKind::Squared),
        (vec![3, 8, 2], Activation::Tanh, LossKind::CrossEntropy),
    ];
    let mut max_rel_net = 0.0f64;
    for (net_index, (layers, activation, loss)) in configs.into_iter().enumerate() {
        let classes = *layers.last().expect("nonempty layers");
        let input_dim = layers[0];
        let spec = MlpSpec::new(layers, activation, loss)?;
        let n_examples = 8;
        let features: Vec<Vec<f64>> = (0..n_examples)
            .map(|_| (0..input_dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..n_examples).map(|_| rng.gen_range(0..classes)).collect();
        let objective =
            MlpObjective::new(spec.clone(), &features, &labels, (0..n_examples).collect())?;
        let theta = spec.init_params(seed.wrapping_add(net_index as u64));
        let grad = objective.grad(&theta, None)?;
        for _ in 0..20 {
            let i = rng.gen_range(0..theta.len());
            let h = 1e-5 * theta[i].abs().max(1.0);
            let mut plus = theta.clone();
            plus[i] += h;
            let mut minus = theta.clone();
            minus[i] -= h;
            let numeric = (objective.eval(&plus, None)? - objective.eval(&minus, None)?) / (2.0 * h);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1.0);
            max_rel_net = max_rel_net.max(rel);
        }
    }
    report.insert("max_rel_error_network", max_rel_net);
    report.require(max_rel_net <= report.tolerance, "network gradient check failed");

    let mut max_rel_reg = 0.0f64;
    for &epsilon in &[0.1, 0.2, 0.35, 0.5] {
        let mut drawn = 0;
        while drawn < 20 {
            let x: f64 = rng.gen_range(-1.6..1.6);
            let a = x.abs();
            let near_junction =
                [epsilon, 1.0 - epsilon, 1.0 + epsilon].iter().any(|b| (a - b).abs() < 1e-3);
            if near_junction {
                continue;
            }
            let h = 1e-6;
            let numeric =
                (smoothed_w_value(x + h, epsilon) - smoothed_w_value(x - h, epsilon)) / (2.0 * h);
            let analytic = smoothed_w_deriv(x, epsilon);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0);
            max_rel_reg = max_rel_reg.max(rel);
            drawn += 1;
        }
    }
    report.insert("max_rel_error_regularizer", max_rel_reg);
    report.require(max_rel_reg <= report.tolerance, "regularizer derivative check failed");
    Ok(report)
}

/// Configuration of the sign-change experiment: a blob-classification MLP
/// warm-started at full precision, then trained to binary weights by the
/// prox-gradient method and the straight-through baseline from the same
/// warm start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignChangeConfig {
    pub data_seed: u64,
    pub n: usize,
    pub classes: usize,
    pub dim: usize,
    pub spread: f64,
    /// Hidden layer widths (the input/output widths come from the data).
    pub hidden: Vec<usize>,
    pub warm_epochs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam learning rate for every phase.
    pub eta: f64,
    /// Linear strength-growth rate for the prox-gradient runs.
    pub homotopy_rate: f64,
    /// Fraction of the quantization phase after which weights freeze.
    pub freeze_fraction: f64,
    pub seeds: Vec<u64>,
}

impl Default for SignChangeConfig {
    fn default() -> SignChangeConfig {
        SignChangeConfig {
            data_seed: 2024,
            n: 600,
            classes: 2,
            dim: 8,
            spread: 1.0,
            hidden: vec![16],
            warm_epochs: 30,
            epochs: 50,
            batch_size: 32,
            eta: 0.01,
            homotopy_rate: 0.02,
            freeze_fraction: 0.8,
            seeds: vec![11, 12, 13, 14],
        }
    }
}

impl SignChangeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.hidden.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one hidden layer is required (two quantizable layers)".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.freeze_fraction) {
            return Err(Error::InvalidArgument("freeze_fraction must lie in [0, 1]".into()));
        }
        if !(self.eta > 0.0) || !(self.homotopy_rate >= 0.0) {
            return Err(Error::InvalidArgument("eta > 0 and homotopy_rate >= 0 required".into()));
        }
        Ok(())
    }
}

/// Per-layer sign-change fractions against the warm start at one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSignTrace {
    pub epoch: u64,
    pub per_layer: Vec<f64>,
}

/// One algorithm's run within the sign-change experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignChangeRun {
    pub seed: u64,
    pub algorithm: Algorithm,
    pub trace: Vec<LayerSignTrace>,
    /// Sign-change fraction of all quantizable weights, warm start vs final.
    pub final_sign_change: f64,
    /// Held-out error of the hard-quantized final parameters.
    pub final_quantized_error: f64,
    /// Held-out error of the full-precision reference trained for the same
    /// total budget.
    pub full_precision_error: f64,
    /// Whether any weight sign flipped during the last tenth of the
    /// pre-freeze epochs.
    pub pre_freeze_flip: bool,
}

fn train_epochs(
    state: &mut OptimizerState,
    objective: &dyn Objective,
    algorithm: Algorithm,
    spec: Option<&RegSpec>,
    schedule: &Schedule,
    opts: &StepOptions,
    epochs: usize,
    batch_size: usize,
    shuffle_seed: u64,
    mut on_epoch_end: impl FnMut(u64, &OptimizerState) -> Result<()>,
) -> Result<()> {
    let n = objective.num_examples();
    for epoch in 1..=epochs as u64 {
        let batches: Vec<Option<Vec<usize>>> = if n > 0 {
            data::batch_positions(n, batch_size, shuffle_seed, epoch)?
                .into_iter()
                .map(Some)
                .collect()
        } else {
            vec![None]
        };
        for batch in batches {
            match algorithm {
                Algorithm::ProxQuant => step_proxquant(
                    state,
                    objective,
                    spec.expect("prox algorithms carry a spec"),
                    schedule,
                    opts,
                    batch.as_deref(),
                )?,
                Algorithm::BinaryConnect => {
                    step_binaryconnect(state, objective, schedule, opts, batch.as_deref())?
                }
                Algorithm::LazyProx => step_lazyprox(
                    state,
                    objective,
                    spec.expect("prox algorithms carry a spec"),
                    schedule,
                    opts,
                    batch.as_deref(),
                )?,
            }
        }
        on_epoch_end(epoch, state)?;
    }
    Ok(())
}

/// Run the sign-change experiment: for every seed, warm-start a
/// full-precision network, then train the prox-gradient method and the
/// straight-through baseline from that warm start with a shared freeze
/// step, recording per-layer sign changes per epoch and final quantized
/// held-out error. Returns two runs per seed.
pub fn sign_change_experiment(cfg: &SignChangeConfig) -> Result<Vec<SignChangeRun>> {
    cfg.validate()?;
    let ds = data::gen_blobs(cfg.data_seed, cfg.n, cfg.classes, cfg.dim, cfg.spread)?;
    let mut layers = vec![ds.dim()];
    layers.extend_from_slice(&cfg.hidden);
    layers.push(ds.num_classes());
    let spec = MlpSpec::new(layers, Activation::Tanh, LossKind::CrossEntropy)?;
    let objective = MlpObjective::new(
        spec.clone(),
        ds.features(),
        ds.labels(),
        ds.train_indices().to_vec(),
    )?;
    let mask = spec.quantizable_mask();
    let weight_ranges: Vec<Range<usize>> =
        spec.layer_param_ranges().into_iter().map(|(weights, _)| weights).collect();
    let steps_per_epoch = ds.train_indices().len().div_ceil(cfg.batch_size) as u64;
    let freeze_step =
        (cfg.freeze_fraction * cfg.epochs as f64 * steps_per_epoch as f64).round() as u64;
    let freeze_epoch = (freeze_step / steps_per_epoch.max(1)) as usize;
    let test_rows: Vec<usize> = if ds.test_indices().is_empty() {
        ds.train_indices().to_vec()
    } else {
        ds.test_indices().to_vec()
    };

    let opts = StepOptions {
        inner: InnerOptimizer::adam_default(),
        mask: Some(mask.clone()),
        ..StepOptions::default()
    };
    let reg = RegSpec::BinaryL1;
    let warm_schedule = Schedule::constant(cfg.eta, 0.0);

    let mut runs = Vec::new();
    for &seed in &cfg.seeds {
        // Phase 1: full-precision warm start.
        let mut warm_state = OptimizerState::new(spec.init_params(seed))?;
        train_epochs(
            &mut warm_state,
            &objective,
            Algorithm::ProxQuant,
            Some(&reg),
            &warm_schedule,
            &opts,
            cfg.warm_epochs,
            cfg.batch_size,
            seed,
            |_, _| Ok(()),
        )?;
        let theta_warm = warm_state.theta.clone();

        // Full-precision reference trained for the same extra budget.
        let mut fp_state = OptimizerState::new(theta_warm.clone())?;
        train_epochs(
            &mut fp_state,
            &objective,
            Algorithm::ProxQuant,
            Some(&reg),
            &warm_schedule,
            &opts,
            cfg.epochs,
            cfg.batch_size,
            seed.wrapping_add(1),
            |_, _| Ok(()),
        )?;
        let full_precision_error = objective.error_rate(&fp_state.theta, &test_rows)?;

        let masked = |theta: &[f64]| -> ParamVec {
            theta.iter().zip(&mask).filter(|(_, &m)| m).map(|(&t, _)| t).collect()
        };
        let warm_masked = masked(&theta_warm);

        for algorithm in [Algorithm::ProxQuant, Algorithm::BinaryConnect] {
            let schedule = match algorithm {
                Algorithm::ProxQuant => Schedule {
                    eta: EtaSchedule::Constant { eta: cfg.eta },
                    lam: LamSchedule::Homotopy { rate: cfg.homotopy_rate },
                    freeze_step: Some(freeze_step),
                },
                _ => Schedule {
                    eta: EtaSchedule::Constant { eta: cfg.eta },
                    lam: LamSchedule::Constant { lam: 0.0 },
                    freeze_step: Some(freeze_step),
                },
            };
            let run_spec = match algorithm {
                Algorithm::ProxQuant => Some(&reg),
                _ => None,
            };
            let mut state = OptimizerState::new(theta_warm.clone())?;
            let mut trace =
                vec![LayerSignTrace { epoch: 0, per_layer: vec![0.0; weight_ranges.len()] }];
            let mut patterns = vec![SignPattern::of(&warm_masked)];
            train_epochs(
                &mut state,
                &objective,
                algorithm,
                run_spec,
                &schedule,
                &opts,
                cfg.epochs,
                cfg.batch_size,
                seed.wrapping_add(1),
                |epoch, s| {
                    let per_layer = weight_ranges
                        .iter()
                        .map(|r| sign_change(&theta_warm[r.clone()], &s.theta[r.clone()]))
                        .collect::<Result<Vec<f64>>>()?;
                    trace.push(LayerSignTrace { epoch, per_layer });
                    patterns.push(SignPattern::of(&masked(&s.theta)));
                    Ok(())
                },
            )?;

            let final_sign_change =
                patterns.last().expect("trace nonempty").hamming_fraction(&patterns[0])?;
            let quantized = hard_quantize(run_spec, &state.theta, Some(&mask))?;
            let final_quantized_error = objective.error_rate(&quantized, &test_rows)?;

            let window = ((0.1 * freeze_epoch as f64).ceil() as usize).max(1);
            let last = freeze_epoch.min(patterns.len() - 1);
            let start = last.saturating_sub(window);
            let pre_freeze_flip =
                (start..last).any(|e| patterns[e] != patterns[e + 1]);

            runs.push(SignChangeRun {
                seed,
                algorithm,
                trace,
                final_sign_change,
                final_quantized_error,
                full_precision_error,
                pre_freeze_flip,
            });
        }
    }
    Ok(runs)
}

/// Summarize the sign-change experiment as a verification report: the
/// prox-gradient runs must end with a strictly lower mean sign-change
/// fraction than the straight-through runs, from identical warm starts.
pub fn sign_change_report(cfg: &SignChangeConfig) -> Result<VerificationReport> {
    let runs = sign_change_experiment(cfg)?;
    let mut report = VerificationReport::new("sign-change", 0.0, cfg.data_seed);

    let mean = |alg: Algorithm, f: &dyn Fn(&SignChangeRun) -> f64| -> f64 {
        let values: Vec<f64> =
            runs.iter().filter(|r| r.algorithm == alg).map(f).collect();
        values.iter().sum::<f64>() / values.len() as f64
    };
    let pq_sign = mean(Algorithm::ProxQuant, &|r| r.final_sign_change);
    let bc_sign = mean(Algorithm::BinaryConnect, &|r| r.final_sign_change);
    let pq_error = mean(Algorithm::ProxQuant, &|r| r.final_quantized_error);
    let bc_error = mean(Algorithm::BinaryConnect, &|r| r.final_quantized_error);
    let fp_error = mean(Algorithm::ProxQuant, &|r| r.full_precision_error);

    report.insert("mean_sign_change_proxquant", pq_sign);
    report.insert("mean_sign_change_binaryconnect", bc_sign);
    report.insert("mean_quantized_error_proxquant", pq_error);
    report.insert("mean_quantized_error_binaryconnect", bc_error);
    report.insert("mean_full_precision_error", fp_error);
    report.insert("seeds", cfg.seeds.len() as f64);

    report.require(pq_sign < bc_sign, "prox-gradient sign change not below baseline");
    let epoch0_zero = runs
        .iter()
        .all(|r| r.trace[0].per_layer.iter().all(|&v| v == 0.0));
    report.require(epoch0_zero, "warm start shows nonzero sign change at epoch 0");

    let bc_flips = runs
        .iter()
        .filter(|r| r.algorithm == Algorithm::BinaryConnect && r.pre_freeze_flip)
        .count();
    report.insert("bc_pre_freeze_flips", bc_flips as f64);
    if bc_flips < cfg.seeds.len() {
        report
            .warnings
            .push("some baseline run held a constant sign pattern before the freeze".into());
    }
    Ok(report)
}
