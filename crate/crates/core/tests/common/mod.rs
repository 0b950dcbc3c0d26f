#![allow(dead_code)]

use bbfamily::{FamilyParameter, StepPair};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gamma(g: f64) -> FamilyParameter {
    FamilyParameter::new(g).unwrap()
}

pub fn pair(s: &[f64], y: &[f64]) -> StepPair {
    StepPair::new(s.to_vec(), y.to_vec()).unwrap()
}

/// Standard normal pairs in dimension `dim`, resampled until `s^T y > 0`.
pub fn random_pairs(count: usize, dim: usize, seed: u64) -> Vec<StepPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(p) = StepPair::new(s, y) {
            if p.curvature() > 0.0 {
                out.push(p);
            }
        }
    }
    out
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// `gamma` values on a log grid over `[10^lo, 10^hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / (points - 1) as f64))
        .collect()
}

/// Pairs with `s^T y` bounded away from zero relative to `||s|| ||y||`.
pub fn arb_pair() -> impl Strategy<Value = StepPair> {
    (2usize..8)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )
        })
        .prop_filter_map("needs positive curvature", |(s, y)| {
            let p = StepPair::new(s, y).ok()?;
            let scale = (p.s_norm_sq() * p.y_norm_sq()).sqrt();
            (p.curvature() > 1e-3 * scale && scale > 1e-6).then_some(p)
        })
}

pub fn arb_gamma() -> impl Strategy<Value = f64> {
    (-4.0f64..4.0).prop_map(|e| 10f64.powf(e))
}

/// `(bb1 - 1/bb2 + sqrt((1/bb2 - bb1)^2 + 4)) / 2`, rationalized when the
/// leading difference is negative.
pub fn tls_closed_form(bb1: f64, bb2: f64) -> f64 {
    let d = bb1 - 1.0 / bb2;
    let r = (d * d + 4.0).sqrt();
    if d >= 0.0 {
        (d + r) / 2.0
    } else {
        2.0 / (r - d)
    }
}
