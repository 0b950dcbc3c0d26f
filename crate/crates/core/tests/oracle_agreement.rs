mod common;

use bbfamily::oracle::{
    homogeneous_residual_min, minimize_scalar, stls_bracket, stls_minimizer, stls_ratio,
    OracleError, ScalarMinProblem,
};
use bbfamily::stepcore::{alpha_family, alpha_tls, bb1, bb2};
use common::{gamma, pair, random_pairs};

#[test]
fn golden_section_matches_the_family_on_random_pairs() {
    for p in random_pairs(200, 5, 11) {
        for g in [0.01, 0.1, 1.0, 10.0, 100.0] {
            let closed = alpha_family(&p, gamma(g)).unwrap();
            let brute = stls_minimizer(&p, gamma(g), 1e-12).unwrap();
            assert!((closed - brute).abs() <= 1e-6, "gamma {g}: {closed} vs {brute}");
        }
    }
}

#[test]
fn bracket_contains_the_minimizer() {
    for p in random_pairs(500, 5, 12) {
        let (lo, hi) = stls_bracket(&p).unwrap();
        assert!(lo < bb2(&p).unwrap() && bb1(&p).unwrap() < hi);
        for g in [1e-4, 1.0, 1e4] {
            let a = alpha_family(&p, gamma(g)).unwrap();
            assert!(lo < a && a < hi);
        }
    }
}

#[test]
fn closed_form_is_a_local_minimum_of_the_ratio() {
    for p in random_pairs(200, 4, 13) {
        let g = gamma(2.5);
        let a = alpha_family(&p, g).unwrap();
        let at = stls_ratio(&p, g, a);
        let h = 1e-3 * a;
        assert!(at <= stls_ratio(&p, g, a + h));
        assert!(at <= stls_ratio(&p, g, a - h));
    }
}

#[test]
fn homogeneous_quotient_matches_tls() {
    for p in random_pairs(50, 5, 14) {
        let q = homogeneous_residual_min(&p).unwrap();
        assert!((q - alpha_tls(&p).unwrap()).abs() <= 1e-6);
    }
    assert!((homogeneous_residual_min(&pair(&[1.0, 1.0], &[1.0, 1.0])).unwrap() - 1.0).abs() < 1e-9);
    assert!((homogeneous_residual_min(&pair(&[2.0, 0.0], &[1.0, 0.0])).unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(
        homogeneous_residual_min(&pair(&[1.0, 0.0], &[0.0, 0.0])),
        Err(OracleError::DegenerateInput("y is zero"))
    );
}

#[test]
fn invalid_brackets_are_rejected() {
    for (lo, hi, tol) in [(1.0, 1.0, 1e-8), (2.0, 1.0, 1e-8), (0.0, 1.0, 0.0), (f64::NAN, 1.0, 1e-8)] {
        assert!(matches!(
            ScalarMinProblem::new(|a: f64| a * a, lo, hi, tol),
            Err(OracleError::BracketInvalid { .. })
        ));
    }
}

#[test]
fn expansion_finds_minima_outside_the_bracket() {
    let left = ScalarMinProblem::new(|a: f64| (a + 40.0).powi(2), 0.0, 1.0, 1e-9).unwrap();
    assert!((minimize_scalar(&left).0 + 40.0).abs() < 1e-8);
}
