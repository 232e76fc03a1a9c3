//! Optimizer-level checks: the straight-through/lazy equivalence at
//! saturating strength, hand-verifiable single steps, the oscillation and
//! convergence behavior on the smoothed scalar instance, freezing, and the
//! argument contracts of the step functions and the run driver.

mod common;

use proxlab_core::model::{quadratic_shift, scalar_quadratic, Activation, LossKind, MlpObjective, MlpSpec, Objective};
use proxlab_core::optim::{
    gradient_eval_point, hard_quantize, run, step_binaryconnect, step_lazyprox, step_proxquant,
    Algorithm, EtaSchedule, InnerOptimizer, LamSchedule, OptimizerState, RunConfig, RunSetup,
    Schedule, StepOptions,
};
use proxlab_core::quantize::sign;
use proxlab_core::regularize::{reg_value, smoothed_w_deriv, RegSpec};
use proxlab_core::{data, Error};

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn straight_through_equals_lazy_prox_at_saturating_strength() {
    let objective = quadratic_shift(vec![2.0, -3.0]).unwrap();
    let schedule_bc = Schedule::constant(0.05, 0.0);
    let schedule_lazy = Schedule::constant(0.05, 1e9);
    let opts = StepOptions::default();
    let spec = RegSpec::BinaryL2;
    let mut bc = OptimizerState::new(vec![0.6, -0.2]).unwrap();
    let mut lazy = OptimizerState::new(vec![0.6, -0.2]).unwrap();
    for step in 0..100 {
        let bc_point =
            gradient_eval_point(Algorithm::BinaryConnect, &bc.theta, None, 0.0, &opts).unwrap();
        let lazy_point =
            gradient_eval_point(Algorithm::LazyProx, &lazy.theta, Some(&spec), 1e9, &opts).unwrap();
        assert!(
            max_gap(&bc_point, &lazy_point) <= 1e-6,
            "eval points differ at step {step}"
        );
        step_binaryconnect(&mut bc, &objective, &schedule_bc, &opts, None).unwrap();
        step_lazyprox(&mut lazy, &objective, &spec, &schedule_lazy, &opts, None).unwrap();
        assert!(
            max_gap(&bc.theta, &lazy.theta) <= 1e-5,
            "trajectories diverged at step {step}"
        );
    }
}

#[test]
fn straight_through_single_step_hand_value() {
    // sign(0.4) = 1, the quadratic's gradient there is 1, so one step at
    // rate 0.5 moves 0.4 to -0.1.
    let objective = scalar_quadratic();
    let mut state = OptimizerState::new(vec![0.4]).unwrap();
    let schedule = Schedule::constant(0.5, 0.0);
    step_binaryconnect(&mut state, &objective, &schedule, &StepOptions::default(), None).unwrap();
    assert!((state.theta[0] - (-0.1)).abs() <= 1e-15);
}

#[test]
fn lazy_prox_at_zero_strength_is_plain_gradient_descent() {
    let objective = quadratic_shift(vec![1.2, -0.7]).unwrap();
    let schedule = Schedule::constant(0.1, 0.0);
    let opts = StepOptions::default();
    let mut state = OptimizerState::new(vec![0.3, 0.9]).unwrap();
    let mut reference = vec![0.3, 0.9];
    for _ in 0..50 {
        step_lazyprox(&mut state, &objective, &RegSpec::BinaryL1, &schedule, &opts, None).unwrap();
        let grad = objective.grad(&reference, None).unwrap();
        for (r, g) in reference.iter_mut().zip(grad) {
            *r -= 0.1 * g;
        }
        assert_eq!(state.theta, reference);
    }
}

/// The period-2 orbit point of the lazy rule on the quadratic plus
/// smoothed-W instance (lambda = 1, epsilon = 0.2).
fn orbit_point(eta: f64) -> f64 {
    eta / (2.0 + (2.0 - eta) * 0.2)
}

#[test]
fn lazy_prox_is_attracted_to_the_oscillating_orbit() {
    // Started away from the orbit, the lazy iterates still end up hopping
    // between the two orbit points, which sit at a fixed distance from
    // every stationary point of the composite objective.
    let objective = scalar_quadratic();
    let spec = RegSpec::SmoothedW { epsilon: 0.2 };
    let opts = StepOptions::default();
    for (eta, theta0) in [(0.5, 0.5), (0.25, -0.31), (0.1, 0.17)] {
        let schedule = Schedule::constant(eta, 1.0);
        let mut state = OptimizerState::new(vec![theta0]).unwrap();
        // The orbit attracts at rate (1 - eta*eps/(eps+lam)) per step, so
        // 3000 steps of burn-in leave far less than the tail tolerance.
        for _ in 0..3000 {
            step_lazyprox(&mut state, &objective, &spec, &schedule, &opts, None).unwrap();
        }
        let target = orbit_point(eta);
        let mut prev = state.theta[0];
        for step in 0..2000 {
            step_lazyprox(&mut state, &objective, &spec, &schedule, &opts, None).unwrap();
            let current = state.theta[0];
            assert!(
                (current.abs() - target).abs() <= 1e-9,
                "eta {eta}: |theta| left the orbit at tail step {step}: {current}"
            );
            assert!(current * prev < 0.0, "eta {eta}: sign failed to alternate");
            prev = current;
        }
        // The orbit never settles: the composite gradient stays bounded
        // away from zero at both orbit points.
        let floor = if target < 0.2 { 4.0 * target } else { 1.0 - target };
        for point in [target, -target] {
            let grad = (point + smoothed_w_deriv(point, 0.2)).abs();
            assert!((grad - floor).abs() <= 1e-12);
        }
        assert!(floor > 0.1);
    }
}

#[test]
fn prox_gradient_converges_on_the_instance_where_lazy_oscillates() {
    let objective = scalar_quadratic();
    let spec = RegSpec::SmoothedW { epsilon: 0.2 };
    let opts = StepOptions::default();
    let schedule = Schedule::constant(0.5, 1.0);
    for theta0 in [0.5, 2.3] {
        let mut state = OptimizerState::new(vec![theta0]).unwrap();
        for _ in 0..2000 {
            step_proxquant(&mut state, &objective, &spec, &schedule, &opts, None).unwrap();
        }
        let theta = state.theta[0];
        let grad = (theta + smoothed_w_deriv(theta, 0.2)).abs();
        assert!(grad <= 1e-6, "start {theta0}: composite gradient {grad} at {theta}");
    }
}

fn blob_setup() -> (data::Dataset, MlpSpec) {
    let dataset = data::gen_blobs(7, 60, 2, 4, 0.6).unwrap();
    let spec = MlpSpec::new(vec![4, 8, 2], Activation::Tanh, LossKind::CrossEntropy).unwrap();
    (dataset, spec)
}

fn blob_objective<'a>(dataset: &'a data::Dataset, spec: &MlpSpec) -> MlpObjective<'a> {
    MlpObjective::new(
        spec.clone(),
        dataset.features(),
        dataset.labels(),
        (0..dataset.len()).collect(),
    )
    .unwrap()
}

#[test]
fn freeze_pins_masked_coordinates_and_keeps_training_the_rest() {
    let (dataset, spec) = blob_setup();
    let objective = blob_objective(&dataset, &spec);
    let mask = spec.quantizable_mask();
    let opts = StepOptions { mask: Some(mask.clone()), ..StepOptions::default() };
    let schedule = Schedule {
        eta: EtaSchedule::Constant { eta: 0.05 },
        lam: LamSchedule::Homotopy { rate: 0.01 },
        freeze_step: Some(150),
    };
    let reg = RegSpec::BinaryL1;
    let mut state = OptimizerState::new(spec.init_params(3)).unwrap();

    let masked_distance = |theta: &[f64]| -> f64 {
        theta
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&t, _)| (t - sign(t)) * (t - sign(t)))
            .sum::<f64>()
            .sqrt()
    };

    let mut distance_at_freeze = f64::NAN;
    let mut pinned: Option<Vec<f64>> = None;
    let mut bias_at_freeze: Option<Vec<f64>> = None;
    for _ in 0..250 {
        if state.step == 150 {
            assert!(!state.is_frozen());
            distance_at_freeze = masked_distance(&state.theta);
        }
        step_proxquant(&mut state, &objective, &reg, &schedule, &opts, None).unwrap();
        if state.step == 151 {
            assert!(state.is_frozen());
            let masked: Vec<f64> = state
                .theta
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(&t, _)| t)
                .collect();
            assert!(masked.iter().all(|&t| t == 1.0 || t == -1.0));
            pinned = Some(masked);
            bias_at_freeze = Some(
                state
                    .theta
                    .iter()
                    .zip(&mask)
                    .filter(|(_, &m)| !m)
                    .map(|(&t, _)| t)
                    .collect(),
            );
        }
        if state.step > 151 {
            let masked: Vec<f64> = state
                .theta
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(&t, _)| t)
                .collect();
            assert_eq!(&masked, pinned.as_ref().unwrap(), "pins moved after the freeze");
        }
    }
    let distance_at_end = masked_distance(&state.theta);
    assert!(distance_at_end <= distance_at_freeze);
    assert_eq!(distance_at_end, 0.0);

    let bias_now: Vec<f64> = state
        .theta
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| !m)
        .map(|(&t, _)| t)
        .collect();
    assert_ne!(bias_now, bias_at_freeze.unwrap(), "unmasked coordinates stopped training");
}

#[test]
fn zero_epoch_runs_log_exactly_the_initial_record() {
    let objective = quadratic_shift(vec![1.0, -2.0, 0.5]).unwrap();
    let theta0 = vec![0.4, 0.8, -0.9];
    let spec = RegSpec::BinaryL1;
    let eval = |q: &[f64]| objective.eval(q, None).unwrap();
    let setup = RunSetup { objective: &objective, theta0: theta0.clone(), eval_quantized: Some(&eval) };
    let cfg = RunConfig {
        algorithm: Algorithm::ProxQuant,
        spec: Some(spec.clone()),
        schedule: Schedule::constant(0.1, 0.7),
        opts: StepOptions::default(),
        epochs: 0,
        batch_size: 4,
        shuffle_seed: 1,
        log_every: 1,
    };
    let out = run(&setup, &cfg).unwrap();
    assert!(!out.diverged);
    assert_eq!(out.final_theta, theta0);
    assert_eq!(out.records.len(), 1);
    let rec = &out.records[0];
    assert_eq!(rec.step, 0);
    assert_eq!(rec.epoch, 0);

    let loss = objective.eval(&theta0, None).unwrap();
    assert_eq!(rec.loss, loss);
    let expected_f = loss + 0.7 * reg_value(&spec, &theta0).unwrap();
    assert_eq!(rec.f_lambda, Some(expected_f));
    let grad = objective.grad(&theta0, None).unwrap();
    assert_eq!(rec.grad_norm, grad.iter().map(|g| g * g).sum::<f64>().sqrt());
    assert_eq!(rec.step_proximity, 0.0);
    assert_eq!(rec.sign_change, 0.0);
    let quantized = hard_quantize(Some(&spec), &theta0, None).unwrap();
    assert_eq!(rec.quantized_error, Some(objective.eval(&quantized, None).unwrap()));
}

#[test]
fn run_rejects_mismatched_algorithm_and_regularizer() {
    let objective = scalar_quadratic();
    let base = RunConfig {
        algorithm: Algorithm::ProxQuant,
        spec: None,
        schedule: Schedule::constant(0.1, 0.5),
        opts: StepOptions::default(),
        epochs: 1,
        batch_size: 1,
        shuffle_seed: 0,
        log_every: 1,
    };
    let setup = RunSetup { objective: &objective, theta0: vec![0.5], eval_quantized: None };

    let err = run(&setup, &base).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");

    let mut bc = base.clone();
    bc.algorithm = Algorithm::BinaryConnect;
    bc.spec = Some(RegSpec::BinaryL2);
    let err = run(&setup, &bc).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");

    let mut lazy = base;
    lazy.algorithm = Algorithm::LazyProx;
    let err = run(&setup, &lazy).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");
}

#[test]
fn adaptive_prox_requires_adam_and_a_separable_binary_kind() {
    let objective = scalar_quadratic();
    let schedule = Schedule::constant(0.1, 1.0);
    let adaptive = |inner: InnerOptimizer| StepOptions {
        inner,
        adaptive_prox: true,
        ..StepOptions::default()
    };

    let mut state = OptimizerState::new(vec![0.5]).unwrap();
    let opts = adaptive(InnerOptimizer::Sgd);
    let err = step_proxquant(&mut state, &objective, &RegSpec::BinaryL2, &schedule, &opts, None)
        .unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err}");

    let mut state = OptimizerState::new(vec![0.5]).unwrap();
    let opts = adaptive(InnerOptimizer::adam_default());
    let err = step_proxquant(&mut state, &objective, &RegSpec::TernaryL2, &schedule, &opts, None)
        .unwrap_err();
    assert!(matches!(err, Error::Unsupported(_)), "{err}");

    let mut state = OptimizerState::new(vec![0.5]).unwrap();
    let opts = adaptive(InnerOptimizer::adam_default());
    step_proxquant(&mut state, &objective, &RegSpec::BinaryL2, &schedule, &opts, None).unwrap();
    assert!(state.theta[0].is_finite());
    assert_eq!(state.step, 1);
}

#[test]
fn identical_configurations_reproduce_traces_bitwise() {
    let (dataset, spec) = blob_setup();
    let objective = blob_objective(&dataset, &spec);
    let theta0 = spec.init_params(11);
    let cfg = RunConfig {
        algorithm: Algorithm::ProxQuant,
        spec: Some(RegSpec::BinaryL2),
        schedule: Schedule::constant(0.05, 0.1),
        opts: StepOptions::default(),
        epochs: 5,
        batch_size: 16,
        shuffle_seed: 42,
        log_every: 2,
    };
    let setup = RunSetup { objective: &objective, theta0: theta0.clone(), eval_quantized: None };
    let first = run(&setup, &cfg).unwrap();
    let setup2 = RunSetup { objective: &objective, theta0, eval_quantized: None };
    let second = run(&setup2, &cfg).unwrap();
    assert_eq!(first.records, second.records);
    assert_eq!(first.final_theta, second.final_theta);
    // Epochs 0, 2, 4, and the forced final epoch 5.
    assert_eq!(
        first.records.iter().map(|r| r.epoch).collect::<Vec<_>>(),
        vec![0, 2, 4, 5]
    );
}
