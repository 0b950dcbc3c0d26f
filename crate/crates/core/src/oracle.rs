//! Brute-force verifiers for the closed-form steplengths.
//!
//! Nothing in here calls the closed forms of [`crate::stepcore`]; the oracle
//! minimizes the scaled total least squares ratio and the homogeneous
//! residual directly, by golden-section search and angular grids. Objective
//! values are accumulated in double-double arithmetic so that comparisons
//! near a flat minimum stay meaningful well below `sqrt(f64::EPSILON)`.

use thiserror::Error;
use twofloat::TwoFloat;

use crate::stepcore::{FamilyParameter, StepPair};

/// Inverse golden ratio `(sqrt(5) - 1) / 2`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;
const MAX_EXPANSIONS: usize = 64;
const MAX_SECTIONS: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid bracket [{lower}, {upper}] with tolerance {tolerance}")]
    BracketInvalid {
        lower: f64,
        upper: f64,
        tolerance: f64,
    },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
}

/// A one-dimensional minimization task: an objective, a starting bracket and
/// the target width of the final bracket.
///
/// The objective may return any totally ordered value (plain `f64`, or
/// [`TwoFloat`] when ties at `f64` precision would stall the search).
pub struct ScalarMinProblem<F> {
    objective: F,
    lower: f64,
    upper: f64,
    tolerance: f64,
}

impl<F, O> ScalarMinProblem<F>
where
    F: Fn(f64) -> O,
    O: PartialOrd + Copy,
{
    pub fn new(objective: F, lower: f64, upper: f64, tolerance: f64) -> Result<Self, OracleError> {
        let valid = lower.is_finite()
            && upper.is_finite()
            && lower < upper
            && tolerance.is_finite()
            && tolerance > 0.0;
        if !valid {
            return Err(OracleError::BracketInvalid {
                lower,
                upper,
                tolerance,
            });
        }
        Ok(Self {
            objective,
            lower,
            upper,
            tolerance,
        })
    }

    pub fn bracket(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }
}

/// Golden-section search with outward bracket expansion.
///
/// The search runs on the bracket; when it ends against an endpoint the
/// bracket is pushed outward on that side (doubling the step each time) and
/// the search is repeated. Returns `(argmin, objective(argmin))`.
pub fn minimize_scalar<F, O>(problem: &ScalarMinProblem<F>) -> (f64, O)
where
    F: Fn(f64) -> O,
    O: PartialOrd + Copy,
{
    let f = &problem.objective;
    let tol = problem.tolerance;
    let (mut a, mut b) = problem.bracket();
    let mut step = b - a;
    let mut best = golden_section(f, a, b, tol);
    for _ in 0..MAX_EXPANSIONS {
        let x = best.0;
        if x - a <= 2.0 * tol {
            (a, b) = (a - step, x + 2.0 * tol);
        } else if b - x <= 2.0 * tol {
            (a, b) = (x - 2.0 * tol, b + step);
        } else {
            break;
        }
        step *= 2.0;
        best = golden_section(f, a, b, tol);
    }
    best
}

fn golden_section<F, O>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, O)
where
    F: Fn(f64) -> O,
    O: PartialOrd + Copy,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..MAX_SECTIONS {
        if b - a <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        // Interior points collide once the bracket reaches ulp scale.
        if !(a < c && c < b && a < d && d < b) {
            break;
        }
    }

    let mid = 0.5 * (a + b);
    let mut best = (mid, f(mid));
    for x in [c, d] {
        let v = f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}

/// Double-double quotient refined by two correction steps; the library
/// division is only accurate to about one `f64` ulp.
fn dd_div(num: TwoFloat, den: TwoFloat) -> TwoFloat {
    let q1 = num.hi() / den.hi();
    let r1 = num - den * q1;
    let q2 = r1.hi() / den.hi();
    let r2 = r1 - den * q2;
    let q3 = r2.hi() / den.hi();
    TwoFloat::from(q1) + q2 + q3
}

fn dd_sum_sq<I: Iterator<Item = TwoFloat>>(terms: I) -> TwoFloat {
    terms.fold(TwoFloat::from(0.0), |acc, t| acc + t * t)
}

/// `||alpha y - s||^2 / (1/gamma^2 + alpha^2)` in double-double precision.
pub fn stls_ratio_precise(pair: &StepPair, gamma: FamilyParameter, alpha: f64) -> TwoFloat {
    let num = dd_sum_sq(
        pair.y()
            .iter()
            .zip(pair.s())
            .map(|(&y, &s)| TwoFloat::new_mul(alpha, y) - s),
    );
    let g = TwoFloat::from(gamma.gamma());
    let den = dd_div(TwoFloat::from(1.0), g * g) + TwoFloat::new_mul(alpha, alpha);
    dd_div(num, den)
}

/// `||alpha y - s||^2 / (1/gamma^2 + alpha^2)`, the scaled total least squares
/// objective for the secant equation `alpha y = s`.
pub fn stls_ratio(pair: &StepPair, gamma: FamilyParameter, alpha: f64) -> f64 {
    stls_ratio_precise(pair, gamma, alpha).hi()
}

/// Bracket used by the oracle: `[lo - margin, hi + margin]` around the two
/// Rayleigh-type quotients, with a margin of 10% of the gap plus `1e-8`. The
/// lower end is kept at or above `lo / 2`: for negative `alpha` the ratio can
/// reach its maximum, and the bracket must stay unimodal.
///
/// The quotients are computed here from raw inner products so the oracle does
/// not lean on the stepcore formulas.
pub fn stls_bracket(pair: &StepPair) -> Result<(f64, f64), OracleError> {
    let sy: f64 = pair.s().iter().zip(pair.y()).map(|(a, b)| a * b).sum();
    let ss: f64 = pair.s().iter().map(|a| a * a).sum();
    let yy: f64 = pair.y().iter().map(|a| a * a).sum();
    if sy.is_nan() || sy <= 0.0 || yy == 0.0 {
        return Err(OracleError::DegenerateInput("need s^T y > 0"));
    }
    let a = ss / sy;
    let b = sy / yy;
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (hi - lo) + 1e-8;
    Ok(((lo - margin).max(0.5 * lo), hi + margin))
}

/// Minimizes the STLS ratio for scale `gamma` by golden-section search.
///
/// Returns the minimizer, which the closed-form family member must match.
pub fn stls_minimizer(
    pair: &StepPair,
    gamma: FamilyParameter,
    tolerance: f64,
) -> Result<f64, OracleError> {
    let (lo, hi) = stls_bracket(pair)?;
    let problem =
        ScalarMinProblem::new(|a| stls_ratio_precise(pair, gamma, a), lo, hi, tolerance)?;
    Ok(minimize_scalar(&problem).0)
}

/// Number of angular samples used by [`homogeneous_residual_min`].
pub const ANGULAR_GRID: usize = 200_000;

fn residual_sq_coarse(pair: &StepPair, theta: f64) -> f64 {
    let (sin, cos) = theta.sin_cos();
    pair.s()
        .iter()
        .zip(pair.y())
        .map(|(&s, &y)| (cos * s - sin * y).powi(2))
        .sum()
}

/// `||(1 - u^2) s - 2u y||^2 / (1 + u^2)^2`, the residual at the unit-circle
/// point with half-angle tangent `u`.
fn residual_sq(pair: &StepPair, u: f64) -> TwoFloat {
    let uu = TwoFloat::new_mul(u, u);
    let one = TwoFloat::from(1.0);
    let a1 = one - uu;
    let a2 = TwoFloat::from(2.0 * u);
    let num = dd_sum_sq(
        pair.s()
            .iter()
            .zip(pair.y())
            .map(|(&s, &y)| a1 * s - a2 * y),
    );
    let den = one + uu;
    dd_div(num, den * den)
}

/// Minimizes `||a1 s - a2 y||` over the unit circle `a1^2 + a2^2 = 1` by a dense
/// angular grid followed by golden-section refinement.
///
/// The minimizer fits `s ~ (a2 / a1) y`; the returned value is that steplength
/// `a2 / a1`, which is positive whenever `s^T y > 0`.
pub fn homogeneous_residual_min(pair: &StepPair) -> Result<f64, OracleError> {
    use std::f64::consts::FRAC_PI_2;

    if pair.y().iter().all(|&v| v == 0.0) {
        return Err(OracleError::DegenerateInput("y is zero"));
    }
    // The residual has period pi in the angle, so [-pi/2, pi/2) covers every line.
    let step = std::f64::consts::PI / ANGULAR_GRID as f64;
    let angle = |i: usize| -FRAC_PI_2 + i as f64 * step;
    let mut best_i = 0;
    let mut best_v = residual_sq_coarse(pair, angle(0));
    for i in 1..ANGULAR_GRID {
        let v = residual_sq_coarse(pair, angle(i));
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    // Refine in u = tan(theta / 2), where the circle is parametrized rationally
    // and the residual can be evaluated without trigonometric rounding.
    let center = angle(best_i);
    let lo = (0.5 * (center - 2.0 * step)).max(-0.5 * FRAC_PI_2).tan();
    let hi = (0.5 * (center + 2.0 * step)).min(0.5 * FRAC_PI_2).tan();
    let problem = ScalarMinProblem::new(|u| residual_sq(pair, u), lo, hi, 1e-17)?;
    let (u, _) = minimize_scalar(&problem);
    let a1 = TwoFloat::from(1.0) - TwoFloat::new_mul(u, u);
    if a1.hi() == 0.0 {
        return Err(OracleError::DegenerateInput("s is orthogonal to every fit"));
    }
    Ok(dd_div(TwoFloat::from(2.0 * u), a1).hi())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(s: &[f64], y: &[f64]) -> StepPair {
        StepPair::new(s.to_vec(), y.to_vec()).unwrap()
    }

    fn gamma(g: f64) -> FamilyParameter {
        FamilyParameter::new(g).unwrap()
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(stls_ratio(&pair(&[1.0, 1.0], &[1.0, 1.0]), gamma(1.0), 1.0), 0.0);
        assert_eq!(stls_ratio(&pair(&[1.0, 1.0], &[1.0, 2.0]), gamma(1.0), 0.0), 2.0);
        // At the minimizer the ratio is the smallest eigenvalue of [[5, -3], [-3, 2]].
        let a = (5f64.sqrt() - 1.0) / 2.0;
        let v = stls_ratio(&pair(&[1.0, 1.0], &[1.0, 2.0]), gamma(1.0), a);
        assert!((v - (7.0 - 45f64.sqrt()) / 2.0).abs() < 1e-15);
        assert!((v - 0.145_898).abs() < 1e-6);
    }

    #[test]
    fn golden_section_examples() {
        let quad = ScalarMinProblem::new(|a: f64| (a - 2.0).powi(2), 0.0, 5.0, 1e-8).unwrap();
        let (x, v) = minimize_scalar(&quad);
        assert!((x - 2.0).abs() <= 1e-8);
        assert_eq!(v, (x - 2.0).powi(2));

        let vee = ScalarMinProblem::new(|a: f64| a.abs(), -1.0, 1.0, 1e-10).unwrap();
        assert!(minimize_scalar(&vee).0.abs() <= 1e-10);

        let p = pair(&[1.0, 1.0], &[1.0, 2.0]);
        let stls = ScalarMinProblem::new(
            |a| stls_ratio_precise(&p, gamma(1.0), a),
            0.6,
            2.0 / 3.0,
            1e-12,
        )
        .unwrap();
        let x = minimize_scalar(&stls).0;
        assert!((x - 0.618_033_988_749_894_9).abs() < 1e-10);
    }

    #[test]
    fn bracket_expands_toward_the_minimum() {
        let shifted = ScalarMinProblem::new(|a: f64| (a - 37.5).powi(2), 0.0, 1.0, 1e-9).unwrap();
        assert!((minimize_scalar(&shifted).0 - 37.5).abs() < 1e-8);
        let left = ScalarMinProblem::new(|a: f64| (a + 3.0).powi(2), 0.0, 1.0, 1e-9).unwrap();
        assert!((minimize_scalar(&left).0 + 3.0).abs() < 1e-8);
    }

    #[test]
    fn invalid_brackets() {
        let f = |a: f64| a;
        assert!(ScalarMinProblem::new(f, 1.0, 1.0, 1e-3).is_err());
        assert!(ScalarMinProblem::new(f, 2.0, 1.0, 1e-3).is_err());
        assert!(ScalarMinProblem::new(f, 0.0, 1.0, 0.0).is_err());
        assert!(ScalarMinProblem::new(f, f64::NAN, 1.0, 1e-3).is_err());
    }

    #[test]
    fn homogeneous_examples() {
        let same = homogeneous_residual_min(&pair(&[1.0, 1.0], &[1.0, 1.0])).unwrap();
        assert!((same - 1.0).abs() < 1e-9);
        let golden = homogeneous_residual_min(&pair(&[1.0, 1.0], &[1.0, 2.0])).unwrap();
        assert!((golden - 0.618_034_0).abs() < 1e-7);
        let col = homogeneous_residual_min(&pair(&[2.0, 0.0], &[1.0, 0.0])).unwrap();
        assert!((col - 2.0).abs() < 1e-9);
        assert!(matches!(
            homogeneous_residual_min(&pair(&[1.0, 0.0], &[0.0, 0.0])),
            Err(OracleError::DegenerateInput(_))
        ));
    }

    #[test]
    fn bracket_needs_positive_curvature() {
        assert!(stls_bracket(&pair(&[1.0, 0.0], &[0.0, 1.0])).is_err());
        let (lo, hi) = stls_bracket(&pair(&[1.0, 1.0], &[1.0, 1.0])).unwrap();
        assert!(lo < 1.0 && 1.0 < hi);
    }
}
