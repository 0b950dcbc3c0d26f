use bbfamily::quadratic::{
    generate_instance, solve_bb, InitialStep, QuadraticError, QuadraticInstance, SpectrumSetting,
};
use bbfamily::stepcore::PolicyKind;
use bbfamily::Termination;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

fn householder_matrix(w: &[f64]) -> DMatrix<f64> {
    let w = DVector::from_column_slice(w);
    DMatrix::identity(w.len(), w.len()) - 2.0 * &w * w.transpose()
}

/// `Q diag(v) Q^T` with `Q = H3 H2 H1`, built explicitly.
fn dense(inst: &QuadraticInstance) -> DMatrix<f64> {
    let [w1, w2, w3] = inst.householder();
    let q = householder_matrix(w3) * householder_matrix(w2) * householder_matrix(w1);
    let v = DMatrix::from_diagonal(&DVector::from_column_slice(inst.eigenvalues()));
    &q * v * q.transpose()
}

fn instance(n: usize, setting: u8, kappa: f64, seed: u64) -> QuadraticInstance {
    generate_instance(n, SpectrumSetting::new(setting, kappa).unwrap(), seed).unwrap()
}

fn rel_err(a: &[f64], b: &DVector<f64>) -> f64 {
    let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / b.norm().max(f64::MIN_POSITIVE)
}

#[test]
fn matrix_free_product_matches_dense_reconstruction() {
    for seed in 0..20 {
        let inst = instance(4, 1, 50.0, seed);
        let a = dense(&inst);
        let x = DVector::from_fn(4, |i, _| (i as f64 + 1.0) * if seed % 2 == 0 { 1.0 } else { -0.5 });
        let got = inst.apply_hessian(x.as_slice()).unwrap();
        assert!(rel_err(&got, &(&a * &x)) <= 1e-10);
    }
}

#[test]
fn dense_spectrum_equals_the_eigenvalues() {
    for (setting, n) in [(1, 20), (2, 30), (5, 50), (6, 15), (7, 40)] {
        let inst = instance(n, setting, 1e4, 3);
        let mut got: Vec<f64> = SymmetricEigen::new(dense(&inst)).eigenvalues.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        for (g, v) in got.iter().zip(inst.eigenvalues()) {
            assert!((g - v).abs() <= 1e-8, "setting {setting}: {g} vs {v}");
        }
    }
}

#[test]
fn reflections_are_involutions() {
    let inst = instance(12, 1, 10.0, 5);
    for w in inst.householder() {
        let h = householder_matrix(w);
        let x = DVector::from_fn(12, |i, _| (i as f64).sin());
        let back = &h * (&h * &x);
        assert!((back - &x).norm() <= 1e-12 * x.norm());
    }
}

#[test]
fn gradient_vanishes_at_the_dense_solution() {
    let inst = instance(30, 3, 1e3, 8);
    let b = DVector::from_column_slice(inst.linear());
    let x = dense(&inst).cholesky().unwrap().solve(&b);
    let g = inst.gradient(x.as_slice()).unwrap();
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm <= 1e-10 * b.norm());
}

#[test]
fn identical_reflections_give_a_diagonal_hessian() {
    let w = vec![1.0, 0.0];
    let inst = QuadraticInstance::new([w.clone(), w.clone(), w], vec![1.0, 4.0], vec![1.0, 1.0]).unwrap();
    assert_eq!(inst.apply_hessian(&[1.0, 1.0]).unwrap(), vec![1.0, 4.0]);
    assert_eq!(inst.gradient(&[1.0, 1.0]).unwrap(), vec![0.0, 3.0]);
    assert_eq!(inst.objective(&[1.0, 1.0]).unwrap(), 0.5);
    assert_eq!(inst.objective(&[0.0, 0.0]).unwrap(), 0.0);
}

#[test]
fn generated_spectra_follow_the_layouts() {
    let n = 100;
    let kappa = 1e4;
    for id in 1..=7u8 {
        let setting = SpectrumSetting::new(id, kappa).unwrap();
        let inst = generate_instance(n, setting, 21).unwrap();
        let v = inst.eigenvalues();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[n - 1], kappa);
        for (first, last, lo, hi) in setting.blocks(n) {
            for (j, value) in v.iter().enumerate().take(last).skip(first - 1) {
                assert!(lo < *value && *value < hi, "setting {id}, v_{}: {value}", j + 1);
            }
        }
        assert!(v.windows(2).all(|w| w[0] <= w[1]));
    }
    let six = generate_instance(n, SpectrumSetting::new(6, kappa).unwrap(), 0).unwrap();
    assert!(six.eigenvalues()[1..10].iter().all(|v| *v > 1.0 && *v < 100.0));
    assert!(six.eigenvalues()[10..99].iter().all(|v| *v > 5e3 && *v < 1e4));
}

#[test]
fn generation_is_deterministic_and_seed_sensitive() {
    let a = instance(50, 2, 1e4, 9);
    assert_eq!(a, instance(50, 2, 1e4, 9));
    assert_ne!(a, instance(50, 2, 1e4, 10));
    assert_eq!(QuadraticInstance::from_json(&a.to_json()).unwrap(), a);
}

#[test]
fn invalid_requests_are_rejected() {
    assert!(matches!(SpectrumSetting::new(0, 1e4), Err(QuadraticError::InvalidSetting(_))));
    assert!(matches!(SpectrumSetting::new(3, 1.0), Err(QuadraticError::InvalidSetting(_))));
    assert!(matches!(
        generate_instance(10, SpectrumSetting::new(6, 1e4).unwrap(), 0),
        Err(QuadraticError::DimensionTooSmall { .. })
    ));
    let inst = instance(5, 1, 10.0, 0);
    assert!(matches!(inst.apply_hessian(&[1.0]), Err(QuadraticError::DimensionMismatch { .. })));
    let w = vec![1.0, 1.0];
    assert!(QuadraticInstance::new([w.clone(), w.clone(), w], vec![1.0, 2.0], vec![0.0, 0.0]).is_err());
}

#[test]
fn raw_bb_curvature_stays_positive() {
    let inst = instance(40, 1, 1e3, 4);
    let mut x = vec![1.0; 40];
    let mut g = inst.gradient(&x).unwrap();
    let mut alpha = 1.0 / g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for _ in 0..200 {
        let x_next: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - alpha * b).collect();
        let g_next = inst.gradient(&x_next).unwrap();
        let s: Vec<f64> = x_next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        if ss == 0.0 {
            break;
        }
        assert!(sy > 0.0);
        alpha = ss / sy;
        x = x_next;
        g = g_next;
    }
}

#[test]
fn solver_examples() {
    let w = vec![1.0, 0.0, 0.0];
    let ident =
        QuadraticInstance::new([w.clone(), w.clone(), w], vec![1.0; 3], vec![0.0; 3]).unwrap();
    let t = solve_bb(&ident, PolicyKind::Bb1, 1e-12, 10, &[3.0, -1.0, 2.0], InitialStep::Fixed(0.5))
        .unwrap();
    assert_eq!(t.termination, Termination::GradientTolerance);
    assert!(t.iterations() <= 2);
    assert_eq!(t.last().grad_norm, 0.0);

    let e = vec![1.0, 0.0];
    let diag = QuadraticInstance::new([e.clone(), e.clone(), e], vec![1.0, 10.0], vec![0.0; 2]).unwrap();
    let t = solve_bb(&diag, PolicyKind::gamma(1.0).unwrap(), 1e-6, 20_000, &[1.0, 1.0], InitialStep::InverseGradientInf)
        .unwrap();
    assert_eq!(t.termination, Termination::GradientTolerance);
    assert!(t.last().grad_norm <= 1e-6 * t.rows[0].grad_norm);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hessian_is_symmetric(seed in 0u64..1000, xs in prop::collection::vec(-5.0f64..5.0, 24)) {
        let inst = instance(12, 1, 1e3, seed);
        let (x, y) = xs.split_at(12);
        let xay: f64 = x.iter().zip(inst.apply_hessian(y).unwrap()).map(|(a, b)| a * b).sum();
        let yax: f64 = y.iter().zip(inst.apply_hessian(x).unwrap()).map(|(a, b)| a * b).sum();
        prop_assert!((xay - yax).abs() <= 1e-10 * xay.abs().max(yax.abs()).max(1e-300) + 1e-12);
    }

    #[test]
    fn objective_and_gradient_agree(seed in 0u64..1000, xs in prop::collection::vec(-3.0f64..3.0, 10)) {
        let inst = instance(10, 1, 100.0, seed);
        let (f, g) = inst.value_and_gradient(&xs).unwrap();
        prop_assert_eq!(f, inst.objective(&xs).unwrap());
        for i in 0..10 {
            let h = 1e-5 * (1.0 + xs[i].abs());
            let mut up = xs.clone();
            up[i] += h;
            let mut down = xs.clone();
            down[i] -= h;
            let fd = (inst.objective(&up).unwrap() - inst.objective(&down).unwrap()) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()));
        }
    }

    #[test]
    fn gradient_norm_decays_geometrically(seed in 0u64..10_000) {
        let inst = instance(10, 1, 100.0, seed);
        let t = solve_bb(&inst, PolicyKind::gamma(1.0).unwrap(), 1e-6, 20_000, &[1.0; 10], InitialStep::InverseGradientInf).unwrap();
        let fit = t.rate_fit().unwrap();
        prop_assert!(fit.slope < 0.0);
        prop_assert!(fit.q < 1.0);
        prop_assert!(fit.coverage >= 0.95);
    }
}
