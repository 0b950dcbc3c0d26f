//! Matrix-free strictly convex quadratics `f(x) = 1/2 x^T A x - b^T x` with
//! `A = Q diag(v) Q^T` and `Q = H3 H2 H1` a product of Householder reflections
//! `Hi = I - 2 wi wi^T`.
//!
//! Also holds the random instance generator for the seven spectrum layouts and
//! the plain (line-search free) gradient iteration driven by a
//! [`SteplengthPolicy`].

use std::fmt;

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stepcore::{dot, next_steplength, PolicyKind, StepError, StepPair, SteplengthPolicy};
use crate::trace::{RunTrace, Termination, TraceRow};

const UNIT_TOL: f64 = 1e-12;

/// Random streams used by [`generate_instance`], one per instance field.
pub mod stream {
    pub const W1: u64 = 1;
    pub const W2: u64 = 2;
    pub const W3: u64 = 3;
    pub const SPECTRUM: u64 = 4;
    pub const LINEAR: u64 = 5;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadraticError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid spectrum setting: {0}")]
    InvalidSetting(String),
    #[error("dimension {n} too small for setting {setting} (need n >= {min})")]
    DimensionTooSmall { n: usize, setting: u8, min: usize },
    #[error("invalid run parameter: {0}")]
    InvalidRun(String),
    #[error(transparent)]
    Policy(#[from] StepError),
}

/// One of the seven eigenvalue layouts together with the condition number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSetting {
    id: u8,
    kappa: f64,
}

impl SpectrumSetting {
    pub fn new(id: u8, kappa: f64) -> Result<Self, QuadraticError> {
        if !(1..=7).contains(&id) {
            return Err(QuadraticError::InvalidSetting(format!(
                "setting id must be in 1..=7, got {id}"
            )));
        }
        if !(kappa.is_finite() && kappa > 1.0) {
            return Err(QuadraticError::InvalidSetting(format!(
                "kappa must be finite and > 1, got {kappa}"
            )));
        }
        // Layouts 2-7 place a block in (1, 100) below a block in (kappa/2, kappa).
        let min_kappa = match id {
            1 => 1.0,
            5 => 200.0,
            _ => 100.0,
        };
        if id != 1 && kappa < min_kappa || id == 5 && kappa <= min_kappa {
            return Err(QuadraticError::InvalidSetting(format!(
                "setting {id} needs kappa {} {min_kappa}, got {kappa}",
                if id == 5 { ">" } else { ">=" }
            )));
        }
        Ok(Self { id, kappa })
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn min_dim(&self) -> usize {
        match self.id {
            1 => 2,
            2..=5 => 10,
            _ => 11,
        }
    }

    /// Open value ranges for the interior eigenvalues `v_2..v_{n-1}`, as
    /// `(first_index, last_index, low, high)` with 1-based inclusive indices.
    pub fn blocks(&self, n: usize) -> Vec<(usize, usize, f64, f64)> {
        let k = self.kappa;
        let half = k / 2.0;
        let fifth = n / 5;
        let split = |cut: usize| vec![(2, cut, 1.0, 100.0), (cut + 1, n - 1, half, k)];
        match self.id {
            1 => vec![(2, n - 1, 1.0, k)],
            2 => split(fifth),
            3 => split(n / 2),
            4 => split(4 * n / 5),
            5 => vec![
                (2, fifth, 1.0, 100.0),
                (fifth + 1, 4 * n / 5, 100.0, half),
                (4 * n / 5 + 1, n - 1, half, k),
            ],
            6 => split(10),
            7 => split(n - 10),
            _ => unreachable!("validated at construction"),
        }
    }
}

/// Provenance of a generated instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceOrigin {
    pub setting: u8,
    pub kappa: f64,
    pub seed: u64,
}

/// `f(x) = 1/2 x^T Q diag(v) Q^T x - b^T x`, stored as three Householder
/// vectors, the eigenvalues and the linear term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticInstance {
    dim: usize,
    householder: [Vec<f64>; 3],
    eigenvalues: Vec<f64>,
    linear: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    origin: Option<InstanceOrigin>,
}

fn check_len(expected: usize, got: usize) -> Result<(), QuadraticError> {
    if expected == got {
        Ok(())
    } else {
        Err(QuadraticError::DimensionMismatch { expected, got })
    }
}

fn reflect(w: &[f64], x: &mut [f64]) {
    let c = 2.0 * dot(w, x);
    for (xi, wi) in x.iter_mut().zip(w) {
        *xi -= c * wi;
    }
}

impl QuadraticInstance {
    pub fn new(
        householder: [Vec<f64>; 3],
        eigenvalues: Vec<f64>,
        linear: Vec<f64>,
    ) -> Result<Self, QuadraticError> {
        let inst = Self {
            dim: eigenvalues.len(),
            householder,
            eigenvalues,
            linear,
            origin: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<(), QuadraticError> {
        let n = self.dim;
        if n == 0 {
            return Err(QuadraticError::InvalidInstance("dimension is zero".into()));
        }
        check_len(n, self.eigenvalues.len())?;
        check_len(n, self.linear.len())?;
        for (i, w) in self.householder.iter().enumerate() {
            check_len(n, w.len())?;
            let norm = dot(w, w).sqrt();
            if (norm - 1.0).abs().is_nan() || (norm - 1.0).abs() > UNIT_TOL {
                return Err(QuadraticError::InvalidInstance(format!(
                    "householder vector w{} has norm {norm}",
                    i + 1
                )));
            }
        }
        if let Some(v) = self.eigenvalues.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(QuadraticError::InvalidInstance(format!(
                "eigenvalue {v} is not positive"
            )));
        }
        if self.linear.iter().any(|b| !b.is_finite()) {
            return Err(QuadraticError::InvalidInstance("linear term is not finite".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn householder(&self) -> &[Vec<f64>; 3] {
        &self.householder
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn origin(&self) -> Option<InstanceOrigin> {
        self.origin
    }

    /// `A x` via six reflections around a diagonal scaling. O(n), no matrix.
    pub fn apply_hessian(&self, x: &[f64]) -> Result<Vec<f64>, QuadraticError> {
        check_len(self.dim, x.len())?;
        let [w1, w2, w3] = &self.householder;
        let mut z = x.to_vec();
        // Q^T = H1 H2 H3
        reflect(w3, &mut z);
        reflect(w2, &mut z);
        reflect(w1, &mut z);
        for (zi, vi) in z.iter_mut().zip(&self.eigenvalues) {
            *zi *= vi;
        }
        reflect(w1, &mut z);
        reflect(w2, &mut z);
        reflect(w3, &mut z);
        Ok(z)
    }

    /// `A x - b`
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>, QuadraticError> {
        let mut g = self.apply_hessian(x)?;
        for (gi, bi) in g.iter_mut().zip(&self.linear) {
            *gi -= bi;
        }
        Ok(g)
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64, QuadraticError> {
        let ax = self.apply_hessian(x)?;
        Ok(0.5 * dot(x, &ax) - dot(&self.linear, x))
    }

    /// Objective and gradient from a single Hessian product.
    pub fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>), QuadraticError> {
        let mut g = self.apply_hessian(x)?;
        let f = 0.5 * dot(x, &g) - dot(&self.linear, x);
        for (gi, bi) in g.iter_mut().zip(&self.linear) {
            *gi -= bi;
        }
        Ok((f, g))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    /// Parses and validates an instance written by [`QuadraticInstance::to_json`].
    pub fn from_json(text: &str) -> Result<Self, QuadraticError> {
        let inst: Self = serde_json::from_str(text)
            .map_err(|e| QuadraticError::InvalidInstance(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn unit_vector(n: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dot(&w, &w).sqrt();
        if norm > 1e-8 {
            w.iter_mut().for_each(|x| *x /= norm);
            return w;
        }
    }
}

fn open_uniform(lo: f64, hi: f64, rng: &mut ChaCha20Rng) -> f64 {
    let dist = Uniform::new(lo, hi).expect("lo < hi");
    loop {
        let v = dist.sample(rng);
        if v > lo && v < hi {
            return v;
        }
    }
}

/// Draws a random instance for the given layout.
///
/// `w1, w2, w3` are normalized standard normal vectors, `b` is uniform on
/// `[-10, 10]^n`, `v_1 = 1`, `v_n = kappa` and the interior eigenvalues are
/// uniform on the layout's open ranges, then sorted. Each field draws from its
/// own ChaCha20 stream of `seed` (see [`stream`]).
pub fn generate_instance(
    n: usize,
    setting: SpectrumSetting,
    seed: u64,
) -> Result<QuadraticInstance, QuadraticError> {
    let min = setting.min_dim();
    if n < min {
        return Err(QuadraticError::DimensionTooSmall {
            n,
            setting: setting.id,
            min,
        });
    }
    let householder = [stream::W1, stream::W2, stream::W3]
        .map(|s| unit_vector(n, &mut rng_for(seed, s)));

    let mut rng = rng_for(seed, stream::SPECTRUM);
    let mut eigenvalues = vec![0.0; n];
    eigenvalues[0] = 1.0;
    eigenvalues[n - 1] = setting.kappa;
    for (first, last, lo, hi) in setting.blocks(n) {
        for j in first..=last {
            eigenvalues[j - 1] = open_uniform(lo, hi, &mut rng);
        }
    }
    if n > 2 {
        eigenvalues[1..n - 1].sort_by(f64::total_cmp);
    }

    let mut rng = rng_for(seed, stream::LINEAR);
    let dist = Uniform::new_inclusive(-10.0, 10.0).expect("valid range");
    let linear = (0..n).map(|_| dist.sample(&mut rng)).collect();

    let mut inst = QuadraticInstance::new(householder, eigenvalues, linear)?;
    inst.origin = Some(InstanceOrigin {
        setting: setting.id,
        kappa: setting.kappa,
        seed,
    });
    Ok(inst)
}

/// How the first steplength of a run is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum InitialStep {
    Fixed(f64),
    /// `1 / ||g_0||_inf`
    InverseGradientInf,
    /// `1 / ||g_0||_inf` if that step decreases `f`, else `1 / (4 ||g_0||_inf)`.
    AutoFromGradient,
}

impl fmt::Display for InitialStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialStep::Fixed(a) => write!(f, "fixed:{a}"),
            InitialStep::InverseGradientInf => f.write_str("inv_grad_inf"),
            InitialStep::AutoFromGradient => f.write_str("auto"),
        }
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Plain gradient iteration `x_{k+1} = x_k - alpha_k g_k` with steplengths from
/// `policy`, stopping once `||g_k|| <= epsilon ||g_0||` or after `max_iter`
/// steps.
///
/// Uses one Hessian product per iteration through `g_{k+1} = g_k - alpha_k A g_k`.
/// `InitialStep::AutoFromGradient` is treated like `InverseGradientInf`.
pub fn solve_bb(
    inst: &QuadraticInstance,
    policy: PolicyKind,
    epsilon: f64,
    max_iter: usize,
    x0: &[f64],
    alpha0: InitialStep,
) -> Result<RunTrace, QuadraticError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(QuadraticError::InvalidRun(format!("epsilon must be positive, got {epsilon}")));
    }
    if max_iter == 0 {
        return Err(QuadraticError::InvalidRun("max_iter must be at least 1".into()));
    }
    let (mut f, mut g) = inst.value_and_gradient(x0)?;
    let mut x = x0.to_vec();
    let g0_norm = dot(&g, &g).sqrt();
    let threshold = epsilon * g0_norm;

    let mut alpha = match alpha0 {
        InitialStep::Fixed(a) => a,
        InitialStep::InverseGradientInf | InitialStep::AutoFromGradient => 1.0 / inf_norm(&g),
    };
    let mut state = SteplengthPolicy::starting_after(policy, alpha);
    let mut rows = Vec::new();

    let mut k = 0;
    let termination = loop {
        let g_norm = dot(&g, &g).sqrt();
        if g_norm <= threshold {
            rows.push(TraceRow::terminal(k, f, g_norm));
            break Termination::GradientTolerance;
        }
        if k == max_iter {
            rows.push(TraceRow::terminal(k, f, g_norm));
            break Termination::IterationCap;
        }
        rows.push(TraceRow::step(k, f, g_norm, alpha, alpha, 0, 1));

        let ag = inst.apply_hessian(&g)?;
        let s: Vec<f64> = g.iter().map(|gi| -alpha * gi).collect();
        let y: Vec<f64> = ag.iter().map(|agi| -alpha * agi).collect();
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        for (gi, yi) in g.iter_mut().zip(&y) {
            *gi += yi;
        }
        // f = 1/2 x^T (g + b) - b^T x needs no further Hessian product.
        f = 0.5 * dot(&x, &g) - 0.5 * dot(&inst.linear, &x);
        k += 1;

        if s.iter().all(|v| *v == 0.0) {
            // Step underflowed; nothing more to learn from this pair.
            let g_norm = dot(&g, &g).sqrt();
            rows.push(TraceRow::terminal(k, f, g_norm));
            break if g_norm <= threshold {
                Termination::GradientTolerance
            } else {
                Termination::Stalled
            };
        }
        let pair = StepPair::new(s, y)?;
        let (next, advanced) = next_steplength(&state, &pair)?;
        alpha = next;
        state = advanced;
    };

    Ok(RunTrace {
        rows,
        termination,
        final_x: x,
        alpha0: alpha0.to_string(),
        stop_rule: format!("relative_gradient:{epsilon}"),
    })
}
