//! Hard quantizers: sign, ternary with data-driven levels, and multi-bit
//! codebooks fit by alternating least squares.

use crate::error::{Error, Result};
use crate::ParamVec;

/// Rounds of alternating refinement used when callers do not choose their own.
pub const DEFAULT_ALT_ROUNDS: usize = 20;

/// Sign with the convention `sign(0) = +1`.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Componentwise sign of `theta` (`sign(0) = +1`).
///
/// Errors on an empty input; idempotent on its own output.
pub fn sign_quantize(theta: &[f64]) -> Result<ParamVec> {
    if theta.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(theta.iter().map(|&x| sign(x)).collect())
}

/// A vector of {-1, +1} signs, comparable and hashable so trajectories of
/// sign patterns can be censused.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignPattern {
    signs: Vec<i8>,
}

impl SignPattern {
    /// Sign pattern of a real vector (`sign(0) = +1`).
    pub fn of(theta: &[f64]) -> SignPattern {
        SignPattern {
            signs: theta.iter().map(|&x| if x >= 0.0 { 1 } else { -1 }).collect(),
        }
    }

    /// Build directly from ±1 entries.
    pub fn from_signs(signs: Vec<i8>) -> Result<SignPattern> {
        if signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("sign entries must be ±1".into()));
        }
        Ok(SignPattern { signs })
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// The pattern as a ±1.0 parameter vector.
    pub fn to_param_vec(&self) -> ParamVec {
        self.signs.iter().map(|&s| f64::from(s)).collect()
    }

    /// Fraction of coordinates on which two patterns disagree, in [0, 1].
    pub fn hamming_fraction(&self, other: &SignPattern) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        if self.is_empty() {
            return Err(Error::EmptyInput);
        }
        let differing = self
            .signs
            .iter()
            .zip(&other.signs)
            .filter(|(a, b)| a != b)
            .count();
        Ok(differing as f64 / self.len() as f64)
    }

    /// All `2^d` patterns of length `d`, in a fixed order starting from the
    /// all-(+1) pattern. Callers should keep `d` small.
    pub fn enumerate(d: usize) -> Vec<SignPattern> {
        assert!(d <= 20, "sign-pattern census is exponential in d");
        (0u32..1 << d)
            .map(|code| SignPattern {
                signs: (0..d)
                    .map(|i| if code >> i & 1 == 0 { 1 } else { -1 })
                    .collect(),
            })
            .collect()
    }
}

/// Levels chosen by the ternary quantizer: a symmetric threshold and the
/// means of the entries it sends to each side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TernaryLevels {
    /// Threshold `0.7 * mean(|theta|)` below which entries drop to zero.
    pub delta: f64,
    /// Mean of the entries at or above `delta` (0 if there are none).
    pub pos_level: f64,
    /// Mean of the entries at or below `-delta` (0 if there are none).
    pub neg_level: f64,
}

/// Threshold-and-average ternary quantizer.
///
/// Entries with `|theta_j| < delta` map to zero; the rest map to the mean of
/// their side. Returns the quantized vector and the levels used.
pub fn ternary_quantize(theta: &[f64]) -> Result<(ParamVec, TernaryLevels)> {
    if theta.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = theta.len() as f64;
    let delta = 0.7 * theta.iter().map(|x| x.abs()).sum::<f64>() / d;

    let mut pos_sum = 0.0;
    let mut pos_count = 0usize;
    let mut neg_sum = 0.0;
    let mut neg_count = 0usize;
    for &x in theta {
        if x >= delta {
            pos_sum += x;
            pos_count += 1;
        } else if x <= -delta {
            neg_sum += x;
            neg_count += 1;
        }
    }
    let pos_level = if pos_count > 0 { pos_sum / pos_count as f64 } else { 0.0 };
    let neg_level = if neg_count > 0 { neg_sum / neg_count as f64 } else { 0.0 };

    let quantized = theta
        .iter()
        .map(|&x| {
            if x >= delta {
                pos_level
            } else if x <= -delta {
                neg_level
            } else {
                0.0
            }
        })
        .collect();
    Ok((quantized, TernaryLevels { delta, pos_level, neg_level }))
}

/// A `k`-bit codebook: per-coordinate sign codes `B` (d×k) and shared
/// levels `alpha` (length k), representing `B * alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    levels: Vec<f64>,
    /// Row-major d×k matrix of ±1 entries.
    assignment: Vec<i8>,
    dim: usize,
}

impl Codebook {
    /// Number of coordinates the codebook describes.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of bits (codebook columns).
    pub fn bits(&self) -> usize {
        self.levels.len()
    }

    /// Shared levels `alpha`.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Sign codes for one coordinate.
    pub fn assignment_row(&self, row: usize) -> &[i8] {
        let k = self.bits();
        &self.assignment[row * k..(row + 1) * k]
    }

    /// The represented vector `B * alpha`.
    pub fn reconstruct(&self) -> ParamVec {
        let k = self.bits();
        (0..self.dim)
            .map(|row| {
                self.assignment[row * k..(row + 1) * k]
                    .iter()
                    .zip(&self.levels)
                    .map(|(&b, &a)| f64::from(b) * a)
                    .sum()
            })
            .collect()
    }

    /// Squared distance between `theta` and the represented vector.
    pub fn residual_sq(&self, theta: &[f64]) -> Result<f64> {
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: theta.len(),
            });
        }
        let rec = self.reconstruct();
        Ok(theta
            .iter()
            .zip(&rec)
            .map(|(t, r)| (t - r) * (t - r))
            .sum())
    }
}

/// Fit a `k`-bit codebook to `theta` by alternating least squares.
///
/// Initialization peels greedy residuals (each column takes the sign of the
/// current residual with level `mean(|residual|)`). Each refinement round
/// then solves least squares for the levels given the codes and re-picks
/// every code row exhaustively given the levels, so the residual never
/// increases across rounds. For `k = 1` this reproduces the sign quantizer
/// with level `mean(|theta|)` exactly. For `k = 2` each round also measures
/// a closed-form candidate (the best contiguous split of the sorted
/// magnitudes, which is the global optimum of the two-bit fit) and keeps
/// whichever solution fits strictly better, so two-bit books do not stall
/// in the alternation's local minima.
pub fn alt_quantize(theta: &[f64], k: usize, iters: usize) -> Result<Codebook> {
    alt_quantize_traced(theta, k, iters).map(|(cb, _)| cb)
}

/// [`alt_quantize`] that also reports the residual after init and after each
/// refinement round, for audits of monotone convergence.
pub fn alt_quantize_traced(theta: &[f64], k: usize, iters: usize) -> Result<(Codebook, Vec<f64>)> {
    let d = theta.len();
    if d == 0 {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidArgument("bit count k must be >= 1".into()));
    }
    if k > d {
        return Err(Error::InvalidCodebook { k, d });
    }
    if k > 16 {
        return Err(Error::InvalidArgument(
            "bit count k > 16 would enumerate 2^k codes per row".into(),
        ));
    }
    if iters == 0 {
        return Err(Error::InvalidArgument("iters must be >= 1".into()));
    }

    // Greedy init: column i quantizes what the first i columns left over.
    let mut levels = vec![0.0_f64; k];
    let mut assignment = vec![0_i8; d * k];
    let mut residual: Vec<f64> = theta.to_vec();
    for col in 0..k {
        let level = residual.iter().map(|r| r.abs()).sum::<f64>() / d as f64;
        for row in 0..d {
            let s: i8 = if residual[row] >= 0.0 { 1 } else { -1 };
            assignment[row * k + col] = s;
            residual[row] -= level * f64::from(s);
        }
        levels[col] = level;
    }

    let mut book = Codebook { levels, assignment, dim: d };
    let mut trace = vec![book.residual_sq(theta)?];
    let exact_two_bit = if k == 2 { Some(best_split_two_bit(theta)) } else { None };
    for _ in 0..iters {
        book.levels = least_squares_levels(&book.assignment, theta, d, k);
        assign_nearest_codes(&book.levels, theta, &mut book.assignment, d, k);
        let mut round = book.residual_sq(theta)?;
        if let Some((candidate, candidate_res)) = &exact_two_bit {
            if *candidate_res < round {
                book = candidate.clone();
                round = *candidate_res;
            }
        }
        trace.push(round);
    }
    Ok((book, trace))
}

/// Exact two-bit fit via the magnitude-clustering reduction.
///
/// A two-bit codebook places one of `{±(a1+a2), ±(a1-a2)}` on each
/// coordinate, and a coordinate always prefers the value sharing its sign,
/// so the squared residual is the within-cluster variance of a two-way
/// partition of the magnitudes. The optimal scalar 2-means partition is a
/// contiguous split of the sorted magnitudes; scanning all `d + 1` splits
/// finds the global optimum.
fn best_split_two_bit(theta: &[f64]) -> (Codebook, f64) {
    let d = theta.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| theta[i].abs().partial_cmp(&theta[j].abs()).unwrap());
    let mags: Vec<f64> = order.iter().map(|&i| theta[i].abs()).collect();
    let mut prefix = vec![0.0_f64; d + 1];
    for (i, &m) in mags.iter().enumerate() {
        prefix[i + 1] = prefix[i] + m;
    }
    let mut best_split = 0usize;
    let mut best_sse = f64::INFINITY;
    let mut best_pair = (0.0_f64, 0.0_f64);
    for split in 0..=d {
        let small = if split > 0 { prefix[split] / split as f64 } else { 0.0 };
        let rest = d - split;
        let large = if rest > 0 { (prefix[d] - prefix[split]) / rest as f64 } else { 0.0 };
        let sse: f64 = mags
            .iter()
            .enumerate()
            .map(|(i, &m)| {
                let center = if i < split { small } else { large };
                (m - center) * (m - center)
            })
            .sum();
        if sse < best_sse {
            best_split = split;
            best_sse = sse;
            best_pair = (small, large);
        }
    }
    let (small, large) = best_pair;
    let mut assignment = vec![0_i8; d * 2];
    for (pos, &row) in order.iter().enumerate() {
        let s: i8 = if theta[row] >= 0.0 { 1 } else { -1 };
        assignment[row * 2] = s;
        // a1 + a2 = large and a1 - a2 = small, so the small cluster flips
        // the second code.
        assignment[row * 2 + 1] = if pos < best_split { -s } else { s };
    }
    let book = Codebook {
        levels: vec![0.5 * (large + small), 0.5 * (large - small)],
        assignment,
        dim: d,
    };
    let res = book
        .residual_sq(theta)
        .expect("codebook dimension matches theta by construction");
    (book, res)
}

/// Quantize each row of a matrix with its own codebook.
pub fn row_wise(rows: &[ParamVec], k: usize, iters: usize) -> Result<Vec<Codebook>> {
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    rows.iter().map(|row| alt_quantize(row, k, iters)).collect()
}

/// Least-squares levels for fixed codes: solve `(B^T B) a = B^T theta`,
/// taking the minimum-norm solution when columns are dependent.
fn least_squares_levels(assignment: &[i8], theta: &[f64], d: usize, k: usize) -> Vec<f64> {
    let mut gram = vec![0.0_f64; k * k];
    let mut rhs = vec![0.0_f64; k];
    for row in 0..d {
        let codes = &assignment[row * k..(row + 1) * k];
        for i in 0..k {
            let bi = f64::from(codes[i]);
            rhs[i] += bi * theta[row];
            for j in i..k {
                gram[i * k + j] += bi * f64::from(codes[j]);
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            gram[i * k + j] = gram[j * k + i];
        }
    }
    solve_min_norm_spd(&gram, &rhs, k)
}

/// Re-pick each coordinate's sign codes by enumerating all `2^k` candidates;
/// ties go to the earliest candidate (all-(+1) first), so zero coordinates
/// choose +1 codes.
fn assign_nearest_codes(levels: &[f64], theta: &[f64], assignment: &mut [i8], d: usize, k: usize) {
    let candidates: Vec<f64> = (0u32..1 << k)
        .map(|code| {
            (0..k)
                .map(|i| if code >> i & 1 == 0 { levels[i] } else { -levels[i] })
                .sum()
        })
        .collect();
    for row in 0..d {
        let mut best_code = 0u32;
        let mut best_err = f64::INFINITY;
        for (code, &value) in candidates.iter().enumerate() {
            let err = (theta[row] - value) * (theta[row] - value);
            if err < best_err {
                best_err = err;
                best_code = code as u32;
            }
        }
        for i in 0..k {
            assignment[row * k + i] = if best_code >> i & 1 == 0 { 1 } else { -1 };
        }
    }
}

/// Minimum-norm solve of `G x = rhs` for a symmetric PSD `G` (row-major
/// k×k) via cyclic Jacobi eigendecomposition; rank-deficient directions are
/// dropped.
fn solve_min_norm_spd(gram: &[f64], rhs: &[f64], k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![if gram[0].abs() > 0.0 { rhs[0] / gram[0] } else { 0.0 }];
    }
    let mut a = gram.to_vec();
    let mut v = vec![0.0_f64; k * k];
    for i in 0..k {
        v[i * k + i] = 1.0;
    }
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..k {
            for q in (p + 1)..k {
                off += a[p * k + q] * a[p * k + q];
            }
        }
        let scale: f64 = (0..k).map(|i| a[i * k + i].abs()).sum::<f64>().max(1.0);
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = a[p * k + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a[p * k + p];
                let aqq = a[q * k + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..k {
                    let aip = a[i * k + p];
                    let aiq = a[i * k + q];
                    a[i * k + p] = c * aip - s * aiq;
                    a[i * k + q] = s * aip + c * aiq;
                }
                for j in 0..k {
                    let apj = a[p * k + j];
                    let aqj = a[q * k + j];
                    a[p * k + j] = c * apj - s * aqj;
                    a[q * k + j] = s * apj + c * aqj;
                }
                for i in 0..k {
                    let vip = v[i * k + p];
                    let viq = v[i * k + q];
                    v[i * k + p] = c * vip - s * viq;
                    v[i * k + q] = s * vip + c * viq;
                }
            }
        }
    }
    let eigmax = (0..k).map(|i| a[i * k + i]).fold(0.0_f64, f64::max);
    let tol = eigmax.max(1.0) * 1e-12;
    let mut x = vec![0.0_f64; k];
    for e in 0..k {
        let lambda = a[e * k + e];
        if lambda <= tol {
            continue;
        }
        let proj: f64 = (0..k).map(|i| v[i * k + e] * rhs[i]).sum();
        for i in 0..k {
            x[i] += v[i * k + e] * proj / lambda;
        }
    }
    x
}
