//! Shared reference oracles for the integration suites: brute-force scalar
//! prox minimization, exhaustive codebook search, and an independent
//! evaluation of the ternary rule — written against the definitions, not
//! against the library's closed forms.
#![allow(dead_code)] // each test binary uses its own subset

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use proxlab_core::ParamVec;

/// Global minimizer of `u -> (u - theta)^2 / 2 + strength * penalty(u)` over
/// [-3, 3]: a coarse grid finds the basin, then a ternary search inside the
/// bracketing cell pins the minimizer far below the 1e-6 comparisons.
pub fn prox_oracle(penalty: &dyn Fn(f64) -> f64, theta: f64, strength: f64) -> f64 {
    let objective = |u: f64| 0.5 * (u - theta) * (u - theta) + strength * penalty(u);
    let (lo, hi, cells) = (-3.0_f64, 3.0_f64, 3000_usize);
    let width = (hi - lo) / cells as f64;
    let mut best_u = lo;
    let mut best = f64::INFINITY;
    for i in 0..=cells {
        let u = lo + width * i as f64;
        let v = objective(u);
        if v < best {
            best = v;
            best_u = u;
        }
    }
    let (mut a, mut b) = (best_u - width, best_u + width);
    for _ in 0..200 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if objective(m1) <= objective(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let refined = 0.5 * (a + b);
    if objective(refined) <= best {
        refined
    } else {
        best_u
    }
}

/// L1 distance to the nearer of ±1.
pub fn binary_l1_penalty(u: f64) -> f64 {
    (u - 1.0).abs().min((u + 1.0).abs())
}

/// Half the squared distance to the nearer of ±1 — the penalty whose exact
/// prox is the averaging rule `(theta + lam * sign) / (1 + lam)`.
pub fn binary_l2_half_penalty(u: f64) -> f64 {
    let a = u - 1.0;
    let b = u + 1.0;
    0.5 * (a * a).min(b * b)
}

/// The W-shaped surrogate written in Huber form: a Huber well of width `eps`
/// around ±1, capped near the origin by the concave parabola that meets the
/// linear slopes at `(±eps, 1 - 3 eps / 2)`.
pub fn smoothed_w_penalty(u: f64, eps: f64) -> f64 {
    let a = u.abs();
    if a < eps {
        (1.0 - eps) - a * a / (2.0 * eps)
    } else {
        let gap = a - 1.0;
        if gap.abs() <= eps {
            gap * gap / (2.0 * eps)
        } else {
            gap.abs() - eps / 2.0
        }
    }
}

/// `points` evenly spaced values covering [lo, hi] inclusive.
pub fn even_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Worst absolute gap between a scalar prox rule and the brute-force oracle
/// over a grid of inputs and strengths.
pub fn max_prox_gap(
    prox: &dyn Fn(f64, f64) -> f64,
    penalty: &dyn Fn(f64) -> f64,
    grid: &[f64],
    strengths: &[f64],
) -> f64 {
    let mut worst = 0.0_f64;
    for &lam in strengths {
        for &theta in grid {
            let gap = (prox(theta, lam) - prox_oracle(penalty, theta, lam)).abs();
            worst = worst.max(gap);
        }
    }
    worst
}

/// Exhaustive minimum of `||theta - B alpha||^2` over every sign matrix
/// `B in {±1}^{d×k}` with the exact least-squares levels per candidate
/// (closed-form normal equations; parallel columns fall back to a single
/// column). Exponential in `d * k`: intended for d <= 8, k <= 2.
pub fn brute_force_min_residual(theta: &[f64], k: usize) -> f64 {
    let d = theta.len();
    assert!((1..=2).contains(&k) && d * k <= 20, "exhaustive search kept small");
    let dd = d as f64;
    let mut best = f64::INFINITY;
    for combo in 0_u64..1 << (d * k) {
        let sign_bit = |bit: usize| if combo >> bit & 1 == 0 { 1.0 } else { -1.0 };
        let residual = match k {
            1 => {
                let dot: f64 = (0..d).map(|r| sign_bit(r) * theta[r]).sum();
                let alpha = dot / dd;
                (0..d)
                    .map(|r| {
                        let diff = theta[r] - sign_bit(r) * alpha;
                        diff * diff
                    })
                    .sum()
            }
            _ => {
                let mut cross = 0.0;
                let mut rhs0 = 0.0;
                let mut rhs1 = 0.0;
                for r in 0..d {
                    let (b0, b1) = (sign_bit(2 * r), sign_bit(2 * r + 1));
                    cross += b0 * b1;
                    rhs0 += b0 * theta[r];
                    rhs1 += b1 * theta[r];
                }
                let det = dd * dd - cross * cross;
                let (a0, a1) = if det.abs() > 1e-9 {
                    ((dd * rhs0 - cross * rhs1) / det, (dd * rhs1 - cross * rhs0) / det)
                } else {
                    (rhs0 / dd, 0.0)
                };
                (0..d)
                    .map(|r| {
                        let rec = sign_bit(2 * r) * a0 + sign_bit(2 * r + 1) * a1;
                        let diff = theta[r] - rec;
                        diff * diff
                    })
                    .sum()
            }
        };
        best = best.min(residual);
    }
    best
}

/// Independent evaluation of the threshold-and-average ternary rule:
/// `delta = 0.7 * mean |theta|`, entries at or beyond ±delta map to their
/// side's mean, everything else to zero.
pub fn ternary_reference(theta: &[f64]) -> (ParamVec, f64, f64, f64) {
    let delta = 0.7 * theta.iter().map(|x| x.abs()).sum::<f64>() / theta.len() as f64;
    let side = |keep: &dyn Fn(f64) -> bool| -> f64 {
        let members: Vec<f64> = theta.iter().copied().filter(|&x| keep(x)).collect();
        if members.is_empty() {
            0.0
        } else {
            members.iter().sum::<f64>() / members.len() as f64
        }
    };
    let pos = side(&|x| x >= delta);
    let neg = side(&|x| x <= -delta);
    let quantized = theta
        .iter()
        .map(|&x| {
            if x >= delta {
                pos
            } else if x <= -delta {
                neg
            } else {
                0.0
            }
        })
        .collect();
    (quantized, delta, pos, neg)
}

/// Seeded uniform vector in [lo, hi)^d.
pub fn uniform_vec(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> ParamVec {
    (0..d).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Largest componentwise absolute difference.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
