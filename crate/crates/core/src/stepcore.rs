//! Barzilai-Borwein steplength formulas.
//!
//! Everything here is a pure function of a secant pair `(s, y)`: the classic
//! long (BB1) and short (BB2) steps, their convex combination, the
//! scaled-total-least-squares family `alpha_family(gamma)` with its inverse
//! variant, the total-least-squares member at `gamma = 1`, and the adaptive
//! truncated cyclic scheme (ATC).
//!
//! Curvature `s^T y <= 0` is reported as [`StepError::NonpositiveCurvature`];
//! falling back to a safe steplength is the solver's job.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative gap below which `bb1` and `bb2` are treated as equal.
pub const DEGENERACY_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("nonpositive curvature s^T y = {0}")]
    NonpositiveCurvature(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("secant vectors have different lengths ({s} vs {y})")]
    DimensionMismatch { s: usize, y: usize },
    #[error("secant vectors are empty")]
    EmptyPair,
    #[error("secant vectors contain non-finite entries")]
    NonFinite,
    #[error("policy state is missing the previous steplength")]
    MissingState,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The secant pair `s = x_k - x_{k-1}`, `y = g_k - g_{k-1}`.
///
/// Inner products are computed once at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPair {
    s: Vec<f64>,
    y: Vec<f64>,
    ss: f64,
    yy: f64,
    sy: f64,
}

impl StepPair {
    pub fn new(s: Vec<f64>, y: Vec<f64>) -> Result<Self, StepError> {
        if s.len() != y.len() {
            return Err(StepError::DimensionMismatch {
                s: s.len(),
                y: y.len(),
            });
        }
        if s.is_empty() {
            return Err(StepError::EmptyPair);
        }
        if s.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(StepError::NonFinite);
        }
        let ss = dot(&s, &s);
        let yy = dot(&y, &y);
        let sy = dot(&s, &y);
        Ok(Self { s, y, ss, yy, sy })
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// `||s||^2`
    pub fn s_norm_sq(&self) -> f64 {
        self.ss
    }

    /// `||y||^2`
    pub fn y_norm_sq(&self) -> f64 {
        self.yy
    }

    /// The curvature `s^T y`.
    pub fn curvature(&self) -> f64 {
        self.sy
    }

    fn positive_curvature(&self) -> Result<f64, StepError> {
        if self.sy > 0.0 {
            Ok(self.sy)
        } else {
            Err(StepError::NonpositiveCurvature(self.sy))
        }
    }
}

/// Free-function form of [`StepPair::curvature`].
pub fn curvature(pair: &StepPair) -> f64 {
    pair.curvature()
}

/// STLS scale `gamma`, strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FamilyParameter(f64);

impl FamilyParameter {
    pub fn new(gamma: f64) -> Result<Self, StepError> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(Self(gamma))
        } else {
            Err(StepError::InvalidParameter(format!(
                "gamma must be positive and finite, got {gamma}"
            )))
        }
    }

    pub fn gamma(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FamilyParameter {
    type Error = StepError;
    fn try_from(v: f64) -> Result<Self, StepError> {
        Self::new(v)
    }
}

impl From<FamilyParameter> for f64 {
    fn from(p: FamilyParameter) -> f64 {
        p.0
    }
}

/// Convex weight `tau` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ConvexWeight(f64);

impl ConvexWeight {
    pub fn new(tau: f64) -> Result<Self, StepError> {
        if (0.0..=1.0).contains(&tau) {
            Ok(Self(tau))
        } else {
            Err(StepError::InvalidParameter(format!(
                "tau must lie in [0, 1], got {tau}"
            )))
        }
    }

    pub fn tau(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for ConvexWeight {
    type Error = StepError;
    fn try_from(v: f64) -> Result<Self, StepError> {
        Self::new(v)
    }
}

impl From<ConvexWeight> for f64 {
    fn from(w: ConvexWeight) -> f64 {
        w.0
    }
}

/// Long BB step `||s||^2 / s^T y`.
pub fn bb1(pair: &StepPair) -> Result<f64, StepError> {
    let sy = pair.positive_curvature()?;
    Ok(pair.ss / sy)
}

/// Short BB step `s^T y / ||y||^2`.
pub fn bb2(pair: &StepPair) -> Result<f64, StepError> {
    let sy = pair.positive_curvature()?;
    Ok(sy / pair.yy)
}

/// `tau * bb1 + (1 - tau) * bb2`.
pub fn alpha_convex(pair: &StepPair, w: ConvexWeight) -> Result<f64, StepError> {
    let long = bb1(pair)?;
    let short = bb2(pair)?;
    let tau = w.tau();
    Ok(tau * long + (1.0 - tau) * short)
}

/// `d + sqrt(d^2 + c^2)` without cancellation when `d < 0`.
fn plus_root(d: f64, c: f64) -> f64 {
    let r = d.hypot(c);
    if d > 0.0 {
        d + r
    } else {
        // (r - d)(r + d) = c^2
        c * (c / (r - d))
    }
}

/// STLS family member for scale `gamma`.
///
/// Minimizes `||alpha y - s||^2 / (1/gamma^2 + alpha^2)` over `alpha`. Increases
/// monotonically from `bb2` (gamma -> 0) to `bb1` (gamma -> inf).
pub fn alpha_family(pair: &StepPair, p: FamilyParameter) -> Result<f64, StepError> {
    let sy = pair.positive_curvature()?;
    let inv = 1.0 / p.gamma();
    let d = pair.ss - pair.yy * inv * inv;
    let c = 2.0 * sy * inv;
    Ok(plus_root(d, c) / (2.0 * sy))
}

/// The "inverse" family member: fits `beta s = y` and returns `1 / beta`.
///
/// Decreases monotonically from `bb1` (gamma -> 0) to `bb2` (gamma -> inf).
pub fn alpha_family_prime(pair: &StepPair, p: FamilyParameter) -> Result<f64, StepError> {
    let sy = pair.positive_curvature()?;
    let inv = 1.0 / p.gamma();
    let d = pair.yy - pair.ss * inv * inv;
    let c = 2.0 * sy * inv;
    Ok(2.0 * sy / plus_root(d, c))
}

/// Total least squares step, i.e. the family member at `gamma = 1`.
pub fn alpha_tls(pair: &StepPair) -> Result<f64, StepError> {
    alpha_family(pair, FamilyParameter(1.0))
}

/// Weight `tau` such that `alpha_convex(pair, tau) == alpha_family(pair, gamma)`.
///
/// When the `[bb2, bb1]` interval has collapsed every weight reproduces the
/// family value and `1/2` is returned.
pub fn tau_from_gamma(pair: &StepPair, p: FamilyParameter) -> Result<ConvexWeight, StepError> {
    let long = bb1(pair)?;
    let short = bb2(pair)?;
    let gap = long - short;
    if gap <= DEGENERACY_TOL * long.max(1.0) {
        return Ok(ConvexWeight(0.5));
    }
    let alpha = alpha_family(pair, p)?;
    Ok(ConvexWeight(((alpha - short) / gap).clamp(0.0, 1.0)))
}

/// Which steplength rule a policy applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PolicyKind {
    Bb1,
    Bb2,
    FamilyGamma { gamma: FamilyParameter },
    FamilyGammaPrime { gamma: FamilyParameter },
    ConvexTau { tau: ConvexWeight },
    Atc { cycle: usize },
}

impl PolicyKind {
    pub fn gamma(gamma: f64) -> Result<Self, StepError> {
        Ok(Self::FamilyGamma {
            gamma: FamilyParameter::new(gamma)?,
        })
    }

    pub fn gamma_prime(gamma: f64) -> Result<Self, StepError> {
        Ok(Self::FamilyGammaPrime {
            gamma: FamilyParameter::new(gamma)?,
        })
    }

    pub fn tau(tau: f64) -> Result<Self, StepError> {
        Ok(Self::ConvexTau {
            tau: ConvexWeight::new(tau)?,
        })
    }

    pub fn atc(cycle: usize) -> Result<Self, StepError> {
        if cycle == 0 {
            return Err(StepError::InvalidParameter(
                "ATC cycle length must be at least 1".into(),
            ));
        }
        Ok(Self::Atc { cycle })
    }
}

/// Policy descriptors use the CLI spelling: `bb1`, `bb2`, `gamma:<v>`,
/// `gammaPrime:<v>`, `tau:<v>`, `atc:<m>`.
impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::Bb1 => f.write_str("bb1"),
            PolicyKind::Bb2 => f.write_str("bb2"),
            PolicyKind::FamilyGamma { gamma } => write!(f, "gamma:{}", gamma.gamma()),
            PolicyKind::FamilyGammaPrime { gamma } => write!(f, "gammaPrime:{}", gamma.gamma()),
            PolicyKind::ConvexTau { tau } => write!(f, "tau:{}", tau.tau()),
            PolicyKind::Atc { cycle } => write!(f, "atc:{cycle}"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = StepError;

    fn from_str(spec: &str) -> Result<Self, StepError> {
        let spec = spec.trim();
        let bad = |msg: &str| StepError::InvalidParameter(format!("policy `{spec}`: {msg}"));
        let (name, value) = match spec.split_once(':') {
            Some((n, v)) => (n, Some(v.trim())),
            None => (spec, None),
        };
        let real = |v: Option<&str>| -> Result<f64, StepError> {
            v.ok_or_else(|| bad("missing value"))?
                .parse::<f64>()
                .map_err(|_| bad("value is not a number"))
        };
        match name {
            "bb1" if value.is_none() => Ok(PolicyKind::Bb1),
            "bb2" if value.is_none() => Ok(PolicyKind::Bb2),
            "gamma" => PolicyKind::gamma(real(value)?),
            "gammaPrime" => PolicyKind::gamma_prime(real(value)?),
            "tau" => PolicyKind::tau(real(value)?),
            "atc" => {
                let m = value
                    .ok_or_else(|| bad("missing cycle length"))?
                    .parse::<usize>()
                    .map_err(|_| bad("cycle length is not a natural number"))?;
                PolicyKind::atc(m)
            }
            _ => Err(bad("expected bb1 | bb2 | gamma:<v> | gammaPrime:<v> | tau:<v> | atc:<m>")),
        }
    }
}

/// A steplength rule plus the state it carries between iterations.
///
/// `iteration_index` is the index `k` of the steplength the next call
/// produces; `prev_alpha` is `alpha_{k-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteplengthPolicy {
    pub kind: PolicyKind,
    pub prev_alpha: Option<f64>,
    pub iteration_index: usize,
}

impl SteplengthPolicy {
    /// Fresh state at `k = 0` with no history.
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            prev_alpha: None,
            iteration_index: 0,
        }
    }

    /// State after the initial step `alpha0` has been taken, so the next call
    /// produces `alpha_1`.
    pub fn starting_after(kind: PolicyKind, alpha0: f64) -> Self {
        Self {
            kind,
            prev_alpha: Some(alpha0),
            iteration_index: 1,
        }
    }

    /// Advances the index and records the steplength actually used.
    pub fn advanced(self, used_alpha: f64) -> Self {
        Self {
            kind: self.kind,
            prev_alpha: Some(used_alpha),
            iteration_index: self.iteration_index + 1,
        }
    }
}

/// Adaptive truncated cyclic steplength.
///
/// Resets to `bb1` at the start of every cycle of length `m`; otherwise the
/// previous steplength is clamped into `[bb2, bb1]`.
pub fn atc_next(policy: &SteplengthPolicy, pair: &StepPair) -> Result<f64, StepError> {
    let PolicyKind::Atc { cycle } = policy.kind else {
        return Err(StepError::InvalidParameter(format!(
            "atc_next called with policy {}",
            policy.kind
        )));
    };
    if cycle == 0 {
        return Err(StepError::InvalidParameter(
            "ATC cycle length must be at least 1".into(),
        ));
    }
    let long = bb1(pair)?;
    if policy.iteration_index.is_multiple_of(cycle) {
        return Ok(long);
    }
    let short = bb2(pair)?;
    let prev = policy.prev_alpha.ok_or(StepError::MissingState)?;
    Ok(if prev <= short {
        short
    } else if prev >= long {
        long
    } else {
        prev
    })
}

/// Evaluates the policy's rule on `pair` and returns the steplength together
/// with the advanced policy state.
pub fn next_steplength(
    policy: &SteplengthPolicy,
    pair: &StepPair,
) -> Result<(f64, SteplengthPolicy), StepError> {
    let alpha = match policy.kind {
        PolicyKind::Bb1 => bb1(pair)?,
        PolicyKind::Bb2 => bb2(pair)?,
        PolicyKind::FamilyGamma { gamma } => alpha_family(pair, gamma)?,
        PolicyKind::FamilyGammaPrime { gamma } => alpha_family_prime(pair, gamma)?,
        PolicyKind::ConvexTau { tau } => alpha_convex(pair, tau)?,
        PolicyKind::Atc { .. } => atc_next(policy, pair)?,
    };
    Ok((alpha, policy.advanced(alpha)))
}
