//! Quantization-inducing regularizers: distances from the parameters to a
//! quantized set, plus a smoothed W-shaped surrogate with a usable gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantize::{alt_quantize, ternary_quantize, DEFAULT_ALT_ROUNDS};
use crate::ParamVec;

/// Which regularizer to apply, with its kind-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RegSpec {
    /// Sum of per-coordinate L1 distances to the nearer of ±1.
    #[serde(rename = "binary-l1")]
    BinaryL1,
    /// Sum of per-coordinate squared distances to the nearer of ±1.
    #[serde(rename = "binary-l2")]
    BinaryL2,
    /// Squared distance to the best `k`-bit codebook reconstruction.
    #[serde(rename = "kbit-l2")]
    KBitL2 { k: usize },
    /// Squared distance to the ternary quantization of the input.
    #[serde(rename = "ternary-l2")]
    TernaryL2,
    /// Smooth W-shaped well with minima at ±1, curvature width `epsilon`.
    #[serde(rename = "smoothed-w")]
    SmoothedW { epsilon: f64 },
}

impl RegSpec {
    /// Check kind-specific parameter ranges.
    pub fn validate(&self) -> Result<()> {
        match *self {
            RegSpec::KBitL2 { k } if k == 0 => {
                Err(Error::InvalidSpec("kbit-l2 requires k >= 1".into()))
            }
            RegSpec::SmoothedW { epsilon } if !(epsilon > 0.0 && epsilon <= 0.5) => Err(
                Error::InvalidSpec(format!("smoothed-w requires epsilon in (0, 1/2], got {epsilon}")),
            ),
            _ => Ok(()),
        }
    }

    /// Only the smoothed W has a gradient everywhere.
    pub fn is_differentiable(&self) -> bool {
        matches!(self, RegSpec::SmoothedW { .. })
    }
}

/// Value of the regularizer at `theta`.
///
/// The `kbit-l2` value is computed through the alternating quantizer and is
/// therefore an upper bound on the true distance to the codebook set; the
/// `ternary-l2` value is the squared distance to the ternary quantizer's
/// output by the same convention.
pub fn reg_value(spec: &RegSpec, theta: &[f64]) -> Result<f64> {
    spec.validate()?;
    if theta.is_empty() {
        return Err(Error::EmptyInput);
    }
    match *spec {
        RegSpec::BinaryL1 => Ok(theta
            .iter()
            .map(|&x| (x - 1.0).abs().min((x + 1.0).abs()))
            .sum()),
        RegSpec::BinaryL2 => Ok(theta
            .iter()
            .map(|&x| {
                let a = (x - 1.0) * (x - 1.0);
                let b = (x + 1.0) * (x + 1.0);
                a.min(b)
            })
            .sum()),
        RegSpec::KBitL2 { k } => {
            let book = alt_quantize(theta, k, DEFAULT_ALT_ROUNDS)?;
            book.residual_sq(theta)
        }
        RegSpec::TernaryL2 => {
            let (q, _) = ternary_quantize(theta)?;
            Ok(theta.iter().zip(&q).map(|(t, q)| (t - q) * (t - q)).sum())
        }
        RegSpec::SmoothedW { epsilon } => {
            Ok(theta.iter().map(|&x| smoothed_w_value(x, epsilon)).sum())
        }
    }
}

/// Gradient of the regularizer; defined only for the smoothed W.
pub fn reg_grad(spec: &RegSpec, theta: &[f64]) -> Result<ParamVec> {
    spec.validate()?;
    if theta.is_empty() {
        return Err(Error::EmptyInput);
    }
    match *spec {
        RegSpec::SmoothedW { epsilon } => {
            Ok(theta.iter().map(|&x| smoothed_w_deriv(x, epsilon)).collect())
        }
        _ => Err(Error::Unsupported(
            "reg_grad is defined only for the smoothed-w kind".into(),
        )),
    }
}

/// One-coordinate smoothed W value: zero exactly at ±1, locally quadratic
/// around ±1 and around 0, linear in between and beyond, C^1 everywhere.
/// Even in `x`.
pub fn smoothed_w_value(x: f64, eps: f64) -> f64 {
    let a = x.abs();
    if a < eps {
        -a * a / (2.0 * eps) + 1.0 - eps
    } else if a < 1.0 - eps {
        -a + 1.0 - eps / 2.0
    } else if a < 1.0 + eps {
        (a - 1.0) * (a - 1.0) / (2.0 * eps)
    } else {
        a - 1.0 - eps / 2.0
    }
}

/// Derivative of [`smoothed_w_value`] in `x`; odd, with value 0 at 0.
pub fn smoothed_w_deriv(x: f64, eps: f64) -> f64 {
    let s = if x >= 0.0 { 1.0 } else { -1.0 };
    let a = x.abs();
    let da = if a < eps {
        -a / eps
    } else if a < 1.0 - eps {
        -1.0
    } else if a < 1.0 + eps {
        (a - 1.0) / eps
    } else {
        1.0
    };
    s * da
}
