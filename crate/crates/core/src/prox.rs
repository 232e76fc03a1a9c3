//! Proximal operators `argmin_x 1/2 ||x - theta||^2 + lam * R(x)` for each
//! regularizer kind: closed forms for the binary and smoothed-W kinds,
//! alternating interpolation for the combinatorial ternary and multi-bit
//! kinds.

use crate::error::{Error, Result};
use crate::quantize::{alt_quantize, sign, ternary_quantize};
use crate::regularize::{reg_value, smoothed_w_value, RegSpec};
use crate::ParamVec;

/// Rounds of quantize-and-interpolate used by the alternating proxes when
/// callers do not choose their own.
pub const DEFAULT_PROX_ROUNDS: usize = 2;

/// Output of a proximal operator.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxResult {
    /// The prox point.
    pub point: ParamVec,
    /// Prox objective at the point: `1/2 ||x - theta||^2 + lam * R(x)`,
    /// where the alternating kinds measure `R` against their final
    /// quantized anchor.
    pub objective: f64,
    /// Alternating rounds performed (0 for closed forms).
    pub iterations: usize,
}

fn check_common(theta: &[f64], lam: f64) -> Result<()> {
    if theta.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(lam >= 0.0) {
        return Err(Error::NegativeStrength(lam));
    }
    Ok(())
}

fn half_sq_dist(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// Prox of the binary L1 distance: per coordinate, soft-threshold the gap to
/// the nearer of ±1. Shrinks each coordinate toward its sign by up to `lam`
/// and is exactly the sign vector once `lam` dominates.
pub fn prox_binary_l1(theta: &[f64], lam: f64) -> Result<ProxResult> {
    check_common(theta, lam)?;
    let point: ParamVec = theta
        .iter()
        .map(|&x| {
            let s = sign(x);
            let gap = x - s;
            s + sign(gap) * (gap.abs() - lam).max(0.0)
        })
        .collect();
    let objective = half_sq_dist(&point, theta) + lam * reg_value(&RegSpec::BinaryL1, &point)?;
    Ok(ProxResult { point, objective, iterations: 0 })
}

/// Prox of the binary L2 distance: per coordinate, average with the nearer
/// of ±1 at mixing weight `lam`; converges to the sign vector as `lam` grows.
pub fn prox_binary_l2(theta: &[f64], lam: f64) -> Result<ProxResult> {
    check_common(theta, lam)?;
    let point: ParamVec = theta
        .iter()
        .map(|&x| (x + lam * sign(x)) / (1.0 + lam))
        .collect();
    let objective = half_sq_dist(&point, theta) + lam * reg_value(&RegSpec::BinaryL2, &point)?;
    Ok(ProxResult { point, objective, iterations: 0 })
}

/// Prox of the `k`-bit codebook distance by alternating minimization.
///
/// Each round refits a codebook to the current point (keeping the previous
/// codebook when it is closer, so the joint objective never increases), then
/// moves the point to the exact minimizer `(theta + 2 lam Ba) / (1 + 2 lam)`
/// given that codebook. As `lam` grows the point collapses onto the codebook
/// reconstruction.
pub fn prox_kbit(theta: &[f64], lam: f64, k: usize, rounds: usize) -> Result<ProxResult> {
    check_common(theta, lam)?;
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be >= 1".into()));
    }
    let mut point: ParamVec = theta.to_vec();
    let mut anchor: Option<ParamVec> = None;
    for _ in 0..rounds {
        let fresh = alt_quantize(&point, k, crate::quantize::DEFAULT_ALT_ROUNDS)?.reconstruct();
        let better = match &anchor {
            Some(kept) => {
                let kept_err: f64 = point.iter().zip(kept).map(|(p, a)| (p - a) * (p - a)).sum();
                let fresh_err: f64 = point.iter().zip(&fresh).map(|(p, a)| (p - a) * (p - a)).sum();
                if fresh_err <= kept_err { fresh } else { kept.clone() }
            }
            None => fresh,
        };
        point = theta
            .iter()
            .zip(&better)
            .map(|(&t, &a)| (t + 2.0 * lam * a) / (1.0 + 2.0 * lam))
            .collect();
        anchor = Some(better);
    }
    let anchor = anchor.expect("at least one round");
    let reg: f64 = point.iter().zip(&anchor).map(|(p, a)| (p - a) * (p - a)).sum();
    Ok(ProxResult {
        objective: half_sq_dist(&point, theta) + lam * reg,
        point,
        iterations: rounds,
    })
}

/// Prox of the ternary distance: alternate the ternary quantizer with the
/// exact interpolation `(theta + 2 lam q) / (1 + 2 lam)`.
pub fn prox_ternary(theta: &[f64], lam: f64, rounds: usize) -> Result<ProxResult> {
    check_common(theta, lam)?;
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be >= 1".into()));
    }
    let mut point: ParamVec = theta.to_vec();
    let mut anchor: ParamVec = Vec::new();
    for _ in 0..rounds {
        anchor = ternary_quantize(&point)?.0;
        point = theta
            .iter()
            .zip(&anchor)
            .map(|(&t, &q)| (t + 2.0 * lam * q) / (1.0 + 2.0 * lam))
            .collect();
    }
    let reg: f64 = point.iter().zip(&anchor).map(|(p, q)| (p - q) * (p - q)).sum();
    Ok(ProxResult {
        objective: half_sq_dist(&point, theta) + lam * reg,
        point,
        iterations: rounds,
    })
}

/// Closed-form prox of the smoothed W for strengths `lam >= 1` on the
/// domain `|theta_j| <= 1`: each coordinate lands in the quadratic well of
/// its own sign, at `(eps * theta + lam * sign(theta)) / (eps + lam)`.
pub fn prox_smoothed_w(theta: &[f64], lam: f64, eps: f64) -> Result<ProxResult> {
    check_common(theta, lam)?;
    RegSpec::SmoothedW { epsilon: eps }.validate()?;
    if lam < 1.0 {
        return Err(Error::OutOfDomain(format!(
            "closed-form smoothed-w prox requires lam >= 1, got {lam}"
        )));
    }
    if let Some(bad) = theta.iter().find(|x| x.abs() > 1.0) {
        return Err(Error::OutOfDomain(format!(
            "closed-form smoothed-w prox requires |theta_j| <= 1, got {bad}"
        )));
    }
    let point: ParamVec = theta
        .iter()
        .map(|&x| (eps * x + lam * sign(x)) / (eps + lam))
        .collect();
    let objective = half_sq_dist(&point, theta)
        + lam * reg_value(&RegSpec::SmoothedW { epsilon: eps }, &point)?;
    Ok(ProxResult { point, objective, iterations: 0 })
}

/// Exact smoothed-W prox for any strength `lam >= 0` and any input, by
/// minimizing the piecewise-quadratic prox objective branch by branch. Used
/// by training loops whose per-step strength `eta * lam` may be below 1.
pub fn prox_smoothed_w_unrestricted(theta: &[f64], lam: f64, eps: f64) -> Result<ProxResult> {
    check_common(theta, lam)?;
    RegSpec::SmoothedW { epsilon: eps }.validate()?;
    let point: ParamVec = theta
        .iter()
        .map(|&x| smoothed_w_prox_scalar(x, lam, eps))
        .collect();
    let objective = half_sq_dist(&point, theta)
        + lam * reg_value(&RegSpec::SmoothedW { epsilon: eps }, &point)?;
    Ok(ProxResult { point, objective, iterations: 0 })
}

/// One-coordinate exact smoothed-W prox.
///
/// On each branch the regularizer is `a t^2 + b t + c`, so the prox
/// objective restricted to the branch is quadratic with minimizer
/// `(theta - lam b) / (1 + 2 lam a)` (endpoints when that curvature is not
/// positive). The global minimizer is the best branchwise candidate;
/// positive branches are scanned first so exact ties (theta = 0) resolve to
/// the positive well, consistent with `sign(0) = +1`.
fn smoothed_w_prox_scalar(theta: f64, lam: f64, eps: f64) -> f64 {
    if lam == 0.0 {
        return theta;
    }
    // (lo, hi, a, b): R(t) = a t^2 + b t + const on [lo, hi].
    let pieces: [(f64, f64, f64, f64); 8] = [
        (0.0, eps, -0.5 / eps, 0.0),
        (eps, 1.0 - eps, 0.0, -1.0),
        (1.0 - eps, 1.0 + eps, 0.5 / eps, -1.0 / eps),
        (1.0 + eps, f64::INFINITY, 0.0, 1.0),
        (-eps, 0.0, -0.5 / eps, 0.0),
        (-(1.0 - eps), -eps, 0.0, 1.0),
        (-(1.0 + eps), -(1.0 - eps), 0.5 / eps, 1.0 / eps),
        (f64::NEG_INFINITY, -(1.0 + eps), 0.0, -1.0),
    ];
    let objective = |t: f64| 0.5 * (t - theta) * (t - theta) + lam * smoothed_w_value(t, eps);
    let mut best_t = theta;
    let mut best_obj = f64::INFINITY;
    let mut consider = |t: f64| {
        let o = objective(t);
        if o < best_obj {
            best_obj = o;
            best_t = t;
        }
    };
    for &(lo, hi, a, b) in &pieces {
        let curvature = 1.0 + 2.0 * lam * a;
        if curvature > 1e-12 {
            consider(((theta - lam * b) / curvature).clamp(lo, hi));
        } else {
            // Concave or flat on this branch: minimum sits at an endpoint
            // (concave branches are the bounded inner caps).
            if lo.is_finite() {
                consider(lo);
            }
            if hi.is_finite() {
                consider(hi);
            }
        }
    }
    best_t
}

/// Apply the prox operator matching `spec` at the given strength.
///
/// Strength 0 is the identity for every kind. The smoothed W dispatches to
/// the unrestricted exact prox so that training-loop strengths below 1 are
/// legal.
pub fn apply_prox(spec: &RegSpec, theta: &[f64], strength: f64, rounds: usize) -> Result<ProxResult> {
    check_common(theta, strength)?;
    spec.validate()?;
    if strength == 0.0 {
        return Ok(ProxResult { point: theta.to_vec(), objective: 0.0, iterations: 0 });
    }
    match *spec {
        RegSpec::BinaryL1 => prox_binary_l1(theta, strength),
        RegSpec::BinaryL2 => prox_binary_l2(theta, strength),
        RegSpec::KBitL2 { k } => prox_kbit(theta, strength, k, rounds),
        RegSpec::TernaryL2 => prox_ternary(theta, strength, rounds),
        RegSpec::SmoothedW { epsilon } => prox_smoothed_w_unrestricted(theta, strength, epsilon),
    }
}
