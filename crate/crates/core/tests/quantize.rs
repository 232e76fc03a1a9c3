//! Quantizer oracles: the one-bit codebook against its closed form, the
//! two-bit codebook against exhaustive search, and the ternary rule against
//! an independent evaluation of its formula.

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{brute_force_min_residual, ternary_reference, uniform_vec};
use proxlab_core::quantize::{
    alt_quantize, alt_quantize_traced, row_wise, sign, sign_quantize, ternary_quantize,
};

#[test]
fn one_bit_codebooks_are_exactly_sign_and_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let d = 1 + case % 12;
        let theta = uniform_vec(&mut rng, d, -3.0, 3.0);
        let book = alt_quantize(&theta, 1, 20).unwrap();
        let mean_abs = theta.iter().map(|x| x.abs()).sum::<f64>() / d as f64;
        assert_eq!(book.levels(), &[mean_abs], "case {case}: level is mean |theta|");
        for (row, &t) in theta.iter().enumerate() {
            assert_eq!(
                f64::from(book.assignment_row(row)[0]),
                sign(t),
                "case {case}, row {row}: code is the sign"
            );
        }
    }
}

#[test]
fn two_bit_codebooks_reach_the_exhaustive_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut failures = 0usize;
    for case in 0..200 {
        let d = 2 + case % 7; // dimensions 2..=8
        let theta = uniform_vec(&mut rng, d, -2.0, 2.0);
        let alt = alt_quantize(&theta, 2, 20).unwrap().residual_sq(&theta).unwrap();
        let best = brute_force_min_residual(&theta, 2);
        assert!(
            alt >= best - 1e-9,
            "case {case}: alternating residual {alt} beat the global minimum {best}"
        );
        if alt > best + 1e-9 {
            failures += 1;
            println!(
                "two-bit local minimum on case {case}: d={d}, alt={alt:.12}, best={best:.12}, theta={theta:?}"
            );
        }
    }
    // The alternating scheme may stall in a local minimum on a small
    // fraction of inputs; those cases are printed above.
    assert!(failures <= 10, "{failures}/200 vectors missed the exhaustive residual");
}

#[test]
fn ternary_matches_the_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for case in 0..100 {
        let d = 1 + case % 10;
        let theta = uniform_vec(&mut rng, d, -2.0, 2.0);
        let (quantized, levels) = ternary_quantize(&theta).unwrap();
        let (want_q, want_delta, want_pos, want_neg) = ternary_reference(&theta);
        assert!((levels.delta - want_delta).abs() <= 1e-12, "case {case}: delta");
        assert!((levels.pos_level - want_pos).abs() <= 1e-12, "case {case}: pos level");
        assert!((levels.neg_level - want_neg).abs() <= 1e-12, "case {case}: neg level");
        for (got, want) in quantized.iter().zip(&want_q) {
            assert!((got - want).abs() <= 1e-12, "case {case}: quantized entry");
        }
    }
}

#[test]
fn structured_two_bit_input_is_reconstructed_exactly() {
    let theta = [0.9, 1.1, -0.9, -1.1];
    let book = alt_quantize(&theta, 2, 20).unwrap();
    assert!(book.residual_sq(&theta).unwrap() <= 1e-18);
    let mut magnitudes: Vec<f64> = book.levels().iter().map(|a| a.abs()).collect();
    magnitudes.sort_by(f64::total_cmp);
    assert!((magnitudes[0] - 0.1).abs() <= 1e-9, "small level {:?}", book.levels());
    assert!((magnitudes[1] - 1.0).abs() <= 1e-9, "large level {:?}", book.levels());
}

#[test]
fn row_wise_quantizes_each_row_independently() {
    let rows = vec![vec![1.0, -2.0, 3.0], vec![1.0, 1.0, 1.0]];
    let books = row_wise(&rows, 1, 20).unwrap();
    assert_eq!(books.len(), 2);
    for (book, row) in books.iter().zip(&rows) {
        let alone = alt_quantize(row, 1, 20).unwrap();
        assert_eq!(book.levels(), alone.levels());
        assert_eq!(book.reconstruct(), alone.reconstruct());
    }
    assert_eq!(books[0].levels(), &[2.0]);
    assert_eq!(books[0].reconstruct(), vec![2.0, -2.0, 2.0]);
    assert_eq!(books[1].reconstruct(), vec![1.0, 1.0, 1.0]);

    let zeros = vec![vec![0.0; 3]; 2];
    for book in row_wise(&zeros, 1, 20).unwrap() {
        assert_eq!(book.levels(), &[0.0]);
        assert_eq!(book.residual_sq(&zeros[0]).unwrap(), 0.0);
    }
}

proptest! {
    #[test]
    fn sign_quantization_is_idempotent(
        theta in proptest::collection::vec(-3.0_f64..3.0, 1..16),
    ) {
        let once = sign_quantize(&theta).unwrap();
        let twice = sign_quantize(&once).unwrap();
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn ternary_outputs_use_exactly_three_levels(
        theta in proptest::collection::vec(-3.0_f64..3.0, 1..16),
    ) {
        let (quantized, levels) = ternary_quantize(&theta).unwrap();
        for q in quantized {
            prop_assert!(
                q == 0.0 || q == levels.pos_level || q == levels.neg_level,
                "entry {} outside {{{}, 0, {}}}", q, levels.neg_level, levels.pos_level
            );
        }
    }

    #[test]
    fn alternating_residuals_never_increase(
        theta in proptest::collection::vec(-2.0_f64..2.0, 2..10),
        k in 1_usize..3,
    ) {
        prop_assume!(k <= theta.len());
        let (_, trace) = alt_quantize_traced(&theta, k, 8).unwrap();
        for pair in trace.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12, "residual rose: {:?}", trace);
        }
    }
}
