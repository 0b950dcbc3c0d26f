use bbfamily::gbb::{audit_trace, run, AuditViolation, Objective, Registry, Rosenbrock2, SolverConfig, StopRule};
use bbfamily::harness::{rosenbrock_config, rosenbrock_policies};
use bbfamily::quadratic::{generate_instance, InitialStep, SpectrumSetting};
use bbfamily::{PolicyKind, RunTrace, SolverError, Termination};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rosenbrock_trace(policy: PolicyKind, epsilon: f64) -> RunTrace {
    match run(&Rosenbrock2, &[-1.2, 1.0], &rosenbrock_config(epsilon), policy) {
        Ok(t) => t,
        Err(SolverError::LineSearchStall { trace, .. }) => *trace,
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn rosenbrock_gradient_matches_central_differences() {
    let f = Rosenbrock2;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-1.0..3.0)];
        let (_, g) = f.eval(&x);
        for i in 0..2 {
            let h = 1e-6 * (1.0 + f64::abs(x[i]));
            let mut up = x;
            up[i] += h;
            let mut down = x;
            down[i] -= h;
            let fd = (f.eval(&up).0 - f.eval(&down).0) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "{fd} vs {}", g[i]);
        }
    }
}

#[test]
fn rosenbrock_landmarks() {
    assert_eq!(Rosenbrock2.eval(&[1.0, 1.0]), (0.0, vec![0.0, 0.0]));
    assert!((Rosenbrock2.eval(&[-1.2, 1.0]).0 - 24.2).abs() < 1e-12);
    let reg = Registry::default();
    assert!(reg.get("rosenbrock", 2).is_some());
    assert!(reg.get("rosenbrock", 3).is_none());
    assert!(reg.get("nope", 2).is_none());
}

#[test]
fn rosenbrock_traces_pass_the_audit() {
    for policy in rosenbrock_policies().into_iter().chain([PolicyKind::atc(4).unwrap(), PolicyKind::tau(0.3).unwrap()]) {
        for eps in [1e-1, 1e-8] {
            let t = rosenbrock_trace(policy, eps);
            assert_eq!(audit_trace(&t, &rosenbrock_config(eps)), vec![], "{policy} at {eps}");
        }
    }
}

#[test]
fn quadratic_traces_pass_the_audit_and_converge() {
    let inst = generate_instance(50, SpectrumSetting::new(2, 1e3).unwrap(), 1).unwrap();
    let config = SolverConfig::default().with_stop(StopRule::RelativeGradient { epsilon: 1e-8 });
    for policy in [PolicyKind::Bb1, PolicyKind::Bb2, PolicyKind::gamma(20.0).unwrap(), PolicyKind::gamma_prime(0.5).unwrap()] {
        let t = run(&inst, &[1.0; 50], &config, policy).unwrap();
        assert_eq!(t.termination, Termination::GradientTolerance);
        assert!(audit_trace(&t, &config).is_empty());
    }
}

#[test]
fn audit_flags_tampered_traces() {
    let config = rosenbrock_config(1e-4);
    let mut t = rosenbrock_trace(PolicyKind::gamma(1.0).unwrap(), 1e-4);
    t.rows[3].f = 1e6;
    let found = audit_trace(&t, &config);
    assert!(found.iter().any(|v| matches!(v, AuditViolation::Rejected { .. })));

    let mut t = rosenbrock_trace(PolicyKind::Bb1, 1e-1);
    t.rows[1].alpha_trial = Some(5000.0);
    t.rows[2].fevals += 1;
    let found = audit_trace(&t, &config);
    assert!(found.iter().any(|v| matches!(v, AuditViolation::OutOfBand { k: 1, .. })));
    assert!(found.iter().any(|v| matches!(v, AuditViolation::EvalCount { k: 2 })));
}

#[test]
fn traces_round_trip_through_csv_and_still_audit() {
    let config = rosenbrock_config(1e-8);
    let t = rosenbrock_trace(PolicyKind::gamma(1.5).unwrap(), 1e-8);
    let back = RunTrace::read_csv(t.to_csv_string().as_bytes()).unwrap();
    assert_eq!(back, t);
    assert!(audit_trace(&back, &config).is_empty());
}

#[test]
fn evaluations_are_one_plus_backtracks() {
    let t = rosenbrock_trace(PolicyKind::Bb1, 1e-4);
    let steps = &t.rows[..t.rows.len() - 1];
    assert!(steps.iter().all(|r| r.fevals == r.backtracks + 1));
    assert_eq!(t.total_fevals(), steps.iter().map(|r| 1 + r.backtracks).sum::<usize>());
}

#[test]
fn registered_objectives_reach_the_gradient_tolerance_or_report() {
    let reg = Registry::default();
    let config = SolverConfig::default()
        .with_stop(StopRule::RelativeGradient { epsilon: 1e-6 })
        .with_max_iter(100_000);
    for name in reg.names() {
        let f = reg.get(name, 2).unwrap();
        for policy in rosenbrock_policies() {
            match run(f.as_ref(), &f.standard_start(), &config, policy) {
                Ok(t) => assert!(
                    t.termination == Termination::GradientTolerance
                        || t.termination == Termination::IterationCap,
                    "{name}/{policy}: {}",
                    t.termination
                ),
                Err(SolverError::LineSearchStall { iteration, .. }) => {
                    eprintln!("{name}/{policy}: line search stalled at {iteration}");
                }
                Err(e) => panic!("{name}/{policy}: {e}"),
            }
        }
    }
}

#[test]
fn absolute_stop_rule() {
    let config = SolverConfig::default().with_stop(StopRule::AbsoluteGradient { epsilon: 1e-5 });
    let t = run(&Rosenbrock2, &[-1.2, 1.0], &config, PolicyKind::gamma(1.0).unwrap()).unwrap();
    assert_eq!(t.termination, Termination::GradientTolerance);
    assert!(t.last().grad_norm < 1e-5);
    assert_eq!(t.stop_rule, "absolute_gradient:0.00001");
}

#[test]
fn bad_inputs_are_rejected() {
    let config = SolverConfig::default();
    assert!(matches!(
        run(&Rosenbrock2, &[1.0], &config, PolicyKind::Bb1),
        Err(SolverError::DimensionMismatch { .. })
    ));
    assert!(matches!(
        run(&Rosenbrock2, &[f64::NAN, 1.0], &config, PolicyKind::Bb1),
        Err(SolverError::NonFiniteStart)
    ));
    let bad = SolverConfig::default().with_alpha0(InitialStep::Fixed(-1.0));
    assert!(matches!(run(&Rosenbrock2, &[0.0, 0.0], &bad, PolicyKind::Bb1), Err(SolverError::InvalidConfig(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_trial_step_is_in_band_or_delta(
        x1 in -2.0f64..2.0,
        x2 in -1.0f64..3.0,
        memory in 0usize..15,
        policy in prop::sample::select(vec!["bb1", "bb2", "gamma:1", "gamma:1.5", "gammaPrime:3", "tau:0.5", "atc:3"]),
    ) {
        let policy: PolicyKind = policy.parse().unwrap();
        let config = SolverConfig::default()
            .with_memory(memory)
            .with_stop(StopRule::RelativeGradient { epsilon: 1e-6 })
            .with_max_iter(3000)
            .with_alpha0(InitialStep::AutoFromGradient);
        let t = match run(&Rosenbrock2, &[x1, x2], &config, policy) {
            Ok(t) => t,
            Err(SolverError::LineSearchStall { trace, .. }) => *trace,
            Err(SolverError::ZeroGradient) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        for r in &t.rows[..t.rows.len() - 1] {
            let a = r.alpha_trial.unwrap();
            prop_assert!((a > config.eta && a < 1.0 / config.eta) || a == config.delta);
        }
        prop_assert!(audit_trace(&t, &config).is_empty());
    }
}
