//! Differentiable objectives: scalar test problems with known minimizers and
//! a small multilayer perceptron with hand-written reverse-mode gradients.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantize::sign;
use crate::regularize::{reg_grad, reg_value, RegSpec};
use crate::ParamVec;

/// A differentiable (or subdifferentiable) training objective.
///
/// Batch arguments are positions into the objective's own example list;
/// `None` means the full batch. Objectives without examples ignore the
/// argument and report `num_examples() == 0`.
pub trait Objective: Sync {
    /// Parameter dimension.
    fn dim(&self) -> usize;

    /// Number of examples available for minibatching (0 = batch-free).
    fn num_examples(&self) -> usize {
        0
    }

    /// Loss at `theta`, averaged over the batch.
    fn eval(&self, theta: &[f64], batch: Option<&[usize]>) -> Result<f64>;

    /// Gradient at `theta`, averaged over the batch.
    fn grad(&self, theta: &[f64], batch: Option<&[usize]>) -> Result<ParamVec>;

    /// An upper bound on the gradient's Lipschitz constant, when known.
    fn smoothness_bound(&self) -> Option<f64> {
        None
    }
}

fn check_dim(expected: usize, theta: &[f64]) -> Result<()> {
    if theta.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: theta.len() });
    }
    Ok(())
}

/// The scalar test problem `L(theta) = theta^2 / 2` (1-smooth, minimum 0).
#[derive(Debug, Clone, Copy)]
pub struct ScalarQuadratic;

/// Constructor matching the other objective factories.
pub fn scalar_quadratic() -> ScalarQuadratic {
    ScalarQuadratic
}

impl Objective for ScalarQuadratic {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, theta: &[f64], _batch: Option<&[usize]>) -> Result<f64> {
        check_dim(1, theta)?;
        Ok(0.5 * theta[0] * theta[0])
    }
    fn grad(&self, theta: &[f64], _batch: Option<&[usize]>) -> Result<ParamVec> {
        check_dim(1, theta)?;
        Ok(vec![theta[0]])
    }
    fn smoothness_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// One of a pair of piecewise-linear scalar losses that agree at ±1 (where
/// the straight-through estimator samples gradients) but have opposite
/// minimizers over {±1}: `f_+1(x) = |x + 1/2| - 1/2` prefers -1, and
/// `f_-1(x) = |x - 1/2| - 1/2` prefers +1.
#[derive(Debug, Clone, Copy)]
pub struct ToyPair {
    which: i8,
}

/// Build one member of the pair; `which` must be +1 or -1.
pub fn toy_pair(which: i8) -> Result<ToyPair> {
    if which != 1 && which != -1 {
        return Err(Error::InvalidArgument("toy_pair takes which in {+1, -1}".into()));
    }
    Ok(ToyPair { which })
}

impl ToyPair {
    /// The minimizer of this member over {-1, +1}.
    pub fn binary_minimizer(&self) -> f64 {
        -f64::from(self.which)
    }
}

impl Objective for ToyPair {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, theta: &[f64], _batch: Option<&[usize]>) -> Result<f64> {
        check_dim(1, theta)?;
        Ok((theta[0] + 0.5 * f64::from(self.which)).abs() - 0.5)
    }
    fn grad(&self, theta: &[f64], _batch: Option<&[usize]>) -> Result<ParamVec> {
        check_dim(1, theta)?;
        // Subgradient at the kink follows the sign(0) = +1 convention.
        Ok(vec![sign(theta[0] + 0.5 * f64::from(self.which))])
    }
}

/// The shifted quadratic `L(theta) = ||theta - c||^2 / 2`.
#[derive(Debug, Clone)]
pub struct QuadraticShift {
    center: ParamVec,
}

/// Build a shifted quadratic around `center`.
pub fn quadratic_shift(center: ParamVec) -> Result<QuadraticShift> {
    if center.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(QuadraticShift { center })
}

impl QuadraticShift {
    pub fn center(&self) -> &[f64] {
        &self.center
    }
}

impl Objective for QuadraticShift {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn eval(&self, theta: &[f64], _batch: Option<&[usize]>) -> Result<f64> {
        check_dim(self.center.len(), theta)?;
        Ok(0.5
            * theta
                .iter()
                .zip(&self.center)
                .map(|(t, c)| (t - c) * (t - c))
                .sum::<f64>())
    }
    fn grad(&self, theta: &[f64], _batch: Option<&[usize]>) -> Result<ParamVec> {
        check_dim(self.center.len(), theta)?;
        Ok(theta.iter().zip(&self.center).map(|(t, c)| t - c).collect())
    }
    fn smoothness_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// A loss plus `lam` times the smoothed-W regularizer, with the combined
/// smoothness bound `beta_loss + lam / epsilon`.
pub struct SmoothedComposite<'a> {
    loss: &'a dyn Objective,
    lam: f64,
    epsilon: f64,
}

/// Build the composite; the regularizer must be valid and `lam >= 0`.
pub fn smoothed_composite(loss: &dyn Objective, lam: f64, epsilon: f64) -> Result<SmoothedComposite<'_>> {
    RegSpec::SmoothedW { epsilon }.validate()?;
    if !(lam >= 0.0) {
        return Err(Error::NegativeStrength(lam));
    }
    Ok(SmoothedComposite { loss, lam, epsilon })
}

impl Objective for SmoothedComposite<'_> {
    fn dim(&self) -> usize {
        self.loss.dim()
    }
    fn num_examples(&self) -> usize {
        self.loss.num_examples()
    }
    fn eval(&self, theta: &[f64], batch: Option<&[usize]>) -> Result<f64> {
        let spec = RegSpec::SmoothedW { epsilon: self.epsilon };
        Ok(self.loss.eval(theta, batch)? + self.lam * reg_value(&spec, theta)?)
    }
    fn grad(&self, theta: &[f64], batch: Option<&[usize]>) -> Result<ParamVec> {
        let spec = RegSpec::SmoothedW { epsilon: self.epsilon };
        let mut g = self.loss.grad(theta, batch)?;
        let rg = reg_grad(&spec, theta)?;
        for (gi, ri) in g.iter_mut().zip(&rg) {
            *gi += self.lam * ri;
        }
        Ok(g)
    }
    fn smoothness_bound(&self) -> Option<f64> {
        self.loss
            .smoothness_bound()
            .map(|b| b + self.lam / self.epsilon)
    }
}

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Relu,
}

/// Output loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    Squared,
}

/// Architecture of a fully-connected network: layer widths from input to
/// output (so `[4, 16, 2]` is one hidden layer), activation, and loss.
/// The final layer is always linear; cross-entropy applies softmax itself
/// and the squared loss compares logits to one-hot targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layers: Vec<usize>,
    pub activation: Activation,
    pub loss: LossKind,
}

impl MlpSpec {
    pub fn new(layers: Vec<usize>, activation: Activation, loss: LossKind) -> Result<MlpSpec> {
        let spec = MlpSpec { layers, activation, loss };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() < 2 {
            return Err(Error::InvalidModel("need at least input and output widths".into()));
        }
        if self.layers.iter().any(|&w| w == 0) {
            return Err(Error::InvalidModel("layer widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Total parameter count over all weights and biases.
    pub fn param_count(&self) -> usize {
        self.layers
            .windows(2)
            .map(|w| w[1] * w[0] + w[1])
            .sum()
    }

    /// Per-layer (weight range, bias range) into the flat parameter vector.
    pub fn layer_param_ranges(&self) -> Vec<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let mut ranges = Vec::with_capacity(self.layers.len() - 1);
        let mut off = 0;
        for w in self.layers.windows(2) {
            let n_w = w[1] * w[0];
            let n_b = w[1];
            ranges.push((off..off + n_w, off + n_w..off + n_w + n_b));
            off += n_w + n_b;
        }
        ranges
    }

    /// Which parameters are quantized: weights yes, biases no.
    pub fn quantizable_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.param_count()];
        for (w_range, _) in self.layer_param_ranges() {
            for j in w_range {
                mask[j] = true;
            }
        }
        mask
    }

    /// Seeded uniform init: weights in ±1/sqrt(fan_in), biases zero.
    pub fn init_params(&self, seed: u64) -> ParamVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; self.param_count()];
        for (l, (w_range, _)) in self.layer_param_ranges().into_iter().enumerate() {
            let bound = 1.0 / (self.layers[l] as f64).sqrt();
            for j in w_range {
                params[j] = rng.gen_range(-bound..bound);
            }
        }
        params
    }
}

fn activate(act: Activation, z: f64) -> f64 {
    match act {
        Activation::Tanh => z.tanh(),
        Activation::Relu => z.max(0.0),
    }
}

fn activate_deriv(act: Activation, z: f64, a: f64) -> f64 {
    match act {
        Activation::Tanh => 1.0 - a * a,
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// Mean loss and gradient of the network over a batch of examples.
///
/// `targets` are class indices for both losses (the squared loss compares
/// logits to the one-hot encoding). Non-finite activations abort with the
/// offending layer in the error.
pub fn mlp_forward_backward(
    spec: &MlpSpec,
    params: &[f64],
    inputs: &[&[f64]],
    targets: &[usize],
) -> Result<(f64, ParamVec)> {
    spec.validate()?;
    check_dim(spec.param_count(), params)?;
    if inputs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if inputs.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: inputs.len(), got: targets.len() });
    }
    let n_layers = spec.layers.len() - 1;
    let out_width = *spec.layers.last().expect("validated");
    let ranges = spec.layer_param_ranges();

    let mut grad = vec![0.0; params.len()];
    let mut loss_sum = 0.0;
    for (x, &y) in inputs.iter().zip(targets) {
        check_dim(spec.layers[0], x)?;
        if y >= out_width {
            return Err(Error::InvalidArgument(format!(
                "class index {y} out of range for {out_width} outputs"
            )));
        }

        // Forward, keeping pre- and post-activations for the backward pass.
        let mut acts: Vec<Vec<f64>> = vec![x.to_vec()];
        let mut pre: Vec<Vec<f64>> = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (w_range, b_range) = &ranges[l];
            let w = &params[w_range.clone()];
            let b = &params[b_range.clone()];
            let input = &acts[l];
            let (fan_in, fan_out) = (spec.layers[l], spec.layers[l + 1]);
            let mut z = vec![0.0; fan_out];
            for j in 0..fan_out {
                let row = &w[j * fan_in..(j + 1) * fan_in];
                z[j] = b[j] + row.iter().zip(input).map(|(wi, ai)| wi * ai).sum::<f64>();
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: format!("mlp layer {l}") });
            }
            let a = if l + 1 < n_layers {
                z.iter().map(|&v| activate(spec.activation, v)).collect()
            } else {
                z.clone() // final layer stays linear
            };
            pre.push(z);
            acts.push(a);
        }

        // Output loss and its derivative in the logits.
        let logits = &acts[n_layers];
        let mut delta = vec![0.0; out_width];
        match spec.loss {
            LossKind::CrossEntropy => {
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum_exp: f64 = logits.iter().map(|&v| (v - max).exp()).sum();
                let log_norm = max + sum_exp.ln();
                loss_sum += log_norm - logits[y];
                for j in 0..out_width {
                    delta[j] = (logits[j] - log_norm).exp();
                }
                delta[y] -= 1.0;
            }
            LossKind::Squared => {
                for j in 0..out_width {
                    let target = if j == y { 1.0 } else { 0.0 };
                    delta[j] = logits[j] - target;
                    loss_sum += 0.5 * delta[j] * delta[j];
                }
            }
        }
        if !loss_sum.is_finite() {
            return Err(Error::NonFinite { context: "mlp loss".into() });
        }

        // Backward.
        for l in (0..n_layers).rev() {
            let (w_range, b_range) = &ranges[l];
            let (fan_in, fan_out) = (spec.layers[l], spec.layers[l + 1]);
            let input = &acts[l];
            for j in 0..fan_out {
                grad[b_range.start + j] += delta[j];
                let g_row = &mut grad[w_range.start + j * fan_in..w_range.start + (j + 1) * fan_in];
                for (gi, ai) in g_row.iter_mut().zip(input) {
                    *gi += delta[j] * ai;
                }
            }
            if l > 0 {
                let w = &params[w_range.clone()];
                let mut prev = vec![0.0; fan_in];
                for (i, p) in prev.iter_mut().enumerate() {
                    let upstream: f64 = (0..fan_out).map(|j| w[j * fan_in + i] * delta[j]).sum();
                    *p = upstream * activate_deriv(spec.activation, pre[l - 1][i], acts[l][i]);
                }
                delta = prev;
            }
        }
    }

    let m = inputs.len() as f64;
    for g in &mut grad {
        *g /= m;
    }
    Ok((loss_sum / m, grad))
}

/// Class predictions: argmax of the logits (first maximum wins).
pub fn mlp_predict(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Result<usize> {
    spec.validate()?;
    check_dim(spec.param_count(), params)?;
    check_dim(spec.layers[0], x)?;
    let n_layers = spec.layers.len() - 1;
    let ranges = spec.layer_param_ranges();
    let mut a = x.to_vec();
    for l in 0..n_layers {
        let (w_range, b_range) = &ranges[l];
        let w = &params[w_range.clone()];
        let b = &params[b_range.clone()];
        let (fan_in, fan_out) = (spec.layers[l], spec.layers[l + 1]);
        let mut z = vec![0.0; fan_out];
        for j in 0..fan_out {
            let row = &w[j * fan_in..(j + 1) * fan_in];
            z[j] = b[j] + row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>();
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { context: format!("mlp layer {l}") });
        }
        a = if l + 1 < n_layers {
            z.iter().map(|&v| activate(spec.activation, v)).collect()
        } else {
            z
        };
    }
    let mut best = 0;
    for (j, &v) in a.iter().enumerate() {
        if v > a[best] {
            best = j;
        }
    }
    Ok(best)
}

/// An [`MlpSpec`] bound to a dataset slice, exposing the [`Objective`]
/// interface over a fixed list of training examples.
pub struct MlpObjective<'a> {
    spec: MlpSpec,
    features: &'a [Vec<f64>],
    labels: &'a [usize],
    examples: Vec<usize>,
}

impl<'a> MlpObjective<'a> {
    /// Bind a network to feature/label storage and a training example list.
    pub fn new(
        spec: MlpSpec,
        features: &'a [Vec<f64>],
        labels: &'a [usize],
        examples: Vec<usize>,
    ) -> Result<MlpObjective<'a>> {
        spec.validate()?;
        if features.len() != labels.len() {
            return Err(Error::DimensionMismatch { expected: features.len(), got: labels.len() });
        }
        if examples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(&bad) = examples.iter().find(|&&i| i >= features.len()) {
            return Err(Error::InvalidArgument(format!("example index {bad} out of range")));
        }
        Ok(MlpObjective { spec, features, labels, examples })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// Resolve batch positions (into the example list) to rows, or take all.
    fn gather(&self, batch: Option<&[usize]>) -> Result<(Vec<&'a [f64]>, Vec<usize>)> {
        let positions: Vec<usize> = match batch {
            Some(b) => b.to_vec(),
            None => (0..self.examples.len()).collect(),
        };
        let mut xs = Vec::with_capacity(positions.len());
        let mut ys = Vec::with_capacity(positions.len());
        for p in positions {
            let row = *self
                .examples
                .get(p)
                .ok_or_else(|| Error::InvalidArgument(format!("batch position {p} out of range")))?;
            xs.push(self.features[row].as_slice());
            ys.push(self.labels[row]);
        }
        Ok((xs, ys))
    }

    /// Misclassification rate over explicit dataset rows.
    pub fn error_rate(&self, params: &[f64], rows: &[usize]) -> Result<f64> {
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut wrong = 0usize;
        for &r in rows {
            if r >= self.features.len() {
                return Err(Error::InvalidArgument(format!("row {r} out of range")));
            }
            if mlp_predict(&self.spec, params, &self.features[r])? != self.labels[r] {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / rows.len() as f64)
    }
}

impl Objective for MlpObjective<'_> {
    fn dim(&self) -> usize {
        self.spec.param_count()
    }
    fn num_examples(&self) -> usize {
        self.examples.len()
    }
    fn eval(&self, theta: &[f64], batch: Option<&[usize]>) -> Result<f64> {
        let (xs, ys) = self.gather(batch)?;
        mlp_forward_backward(&self.spec, theta, &xs, &ys).map(|(loss, _)| loss)
    }
    fn grad(&self, theta: &[f64], batch: Option<&[usize]>) -> Result<ParamVec> {
        let (xs, ys) = self.gather(batch)?;
        mlp_forward_backward(&self.spec, theta, &xs, &ys).map(|(_, grad)| grad)
    }
}
