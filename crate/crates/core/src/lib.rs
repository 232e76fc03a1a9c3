//! Training and analysis toolkit for quantized models.
//!
//! The central idea: instead of projecting parameters onto a quantized set
//! after every gradient step (the straight-through estimator), add a
//! quantization-inducing regularizer `R` and take proximal steps against it,
//! annealing its strength over training. Everything here supports that
//! workflow:
//!
//! - [`quantize`] — hard quantizers (sign, ternary, multi-bit codebooks),
//! - [`regularize`] — the regularizers those quantizers induce,
//! - [`prox`] — proximal operators for each regularizer,
//! - [`model`] — differentiable objectives (scalar test problems, a small MLP),
//! - [`optim`] — the prox-gradient trainer plus straight-through and
//!   lazy-prox baselines,
//! - [`theorylab`] — numerical checks of the convergence and
//!   non-convergence behavior of those methods,
//! - [`data`] — synthetic blob datasets, CSV ingestion, minibatching.

pub mod data;
pub mod error;
pub mod model;
pub mod optim;
pub mod prox;
pub mod quantize;
pub mod regularize;
pub mod theorylab;

pub use error::{Error, Result};

/// Flat full-precision parameter vector.
pub type ParamVec = Vec<f64>;
