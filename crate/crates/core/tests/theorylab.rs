//! Verification-harness checks: the sign-change metric's axioms, the sign
//! trace helpers, and report serialization and determinism.

use proptest::prelude::*;

use proxlab_core::model::quadratic_shift;
use proxlab_core::quantize::SignPattern;
use proxlab_core::theorylab::{
    bc_sign_trace, longest_constant_run, sign_change, verify_toy_failure, VerificationReport,
};
use proxlab_core::Error;

proptest! {
    #[test]
    fn sign_change_is_a_metric_on_patterns(
        a in proptest::collection::vec(-2.0f64..2.0, 1..10),
        b in proptest::collection::vec(-2.0f64..2.0, 1..10),
        c in proptest::collection::vec(-2.0f64..2.0, 1..10),
    ) {
        let d = a.len().min(b.len()).min(c.len());
        let (a, b, c) = (&a[..d], &b[..d], &c[..d]);
        let dab = sign_change(a, b).unwrap();
        let dbc = sign_change(b, c).unwrap();
        let dac = sign_change(a, c).unwrap();
        prop_assert!((0.0..=1.0).contains(&dab));
        prop_assert_eq!(dab, sign_change(b, a).unwrap());
        prop_assert!(dac <= dab + dbc + 1e-15);
        prop_assert_eq!(sign_change(a, a).unwrap(), 0.0);
    }

    #[test]
    fn sign_change_ignores_positive_coordinate_scaling(
        a in proptest::collection::vec(-2.0f64..2.0, 1..10),
        b in proptest::collection::vec(-2.0f64..2.0, 1..10),
        scales in proptest::collection::vec(0.01f64..100.0, 10),
    ) {
        let d = a.len().min(b.len());
        let (a, b) = (&a[..d], &b[..d]);
        let scaled_a: Vec<f64> = a.iter().zip(&scales).map(|(x, s)| x * s).collect();
        let scaled_b: Vec<f64> = b.iter().zip(scales.iter().rev()).map(|(x, s)| x * s).collect();
        prop_assert_eq!(
            sign_change(a, b).unwrap(),
            sign_change(&scaled_a, &scaled_b).unwrap()
        );
    }
}

#[test]
fn sign_change_treats_zero_as_positive() {
    assert_eq!(sign_change(&[0.0], &[1.0]).unwrap(), 0.0);
    assert_eq!(sign_change(&[0.0], &[-1.0]).unwrap(), 1.0);
    assert_eq!(sign_change(&[0.0, -2.0], &[3.0, 2.0]).unwrap(), 0.5);
}

#[test]
fn sign_change_rejects_bad_shapes() {
    assert!(matches!(sign_change(&[], &[]), Err(Error::EmptyInput)));
    assert!(matches!(
        sign_change(&[1.0], &[1.0, 2.0]),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn sign_traces_start_at_the_initial_pattern() {
    let objective = quadratic_shift(vec![2.0, -3.0]).unwrap();
    let theta0 = [0.1, -0.1];
    let trace = bc_sign_trace(&objective, &theta0, 0.1, 25).unwrap();
    assert_eq!(trace.len(), 26);
    assert_eq!(trace[0], SignPattern::of(&theta0));
    // (2, -3) makes (+, -) a fixed pattern of the straight-through step.
    assert!(trace.iter().all(|p| *p == trace[0]));
    assert_eq!(longest_constant_run(&trace), 26);
}

#[test]
fn longest_constant_run_counts_maximal_blocks() {
    let p = |signs: &[i8]| SignPattern::from_signs(signs.to_vec()).unwrap();
    assert_eq!(longest_constant_run(&[]), 0);
    assert_eq!(longest_constant_run(&[p(&[1])]), 1);
    let patterns = vec![p(&[1, 1]), p(&[1, 1]), p(&[1, -1]), p(&[1, -1]), p(&[1, -1]), p(&[1, 1])];
    assert_eq!(longest_constant_run(&patterns), 3);
}

#[test]
fn reports_round_trip_through_json_and_rerun_identically() {
    let report = verify_toy_failure().unwrap();
    assert!(report.pass);
    assert_eq!(report.name, "toy-failure");
    assert!(!report.measured.is_empty());

    let json = serde_json::to_string(&report).unwrap();
    let decoded: VerificationReport = serde_json::from_str(&json).unwrap();
    assert_eq!(decoded, report);

    let again = verify_toy_failure().unwrap();
    assert_eq!(again, report);
}
