//! Globalized Barzilai-Borwein method with a nonmonotone line search.
//!
//! One iteration: stop if converged, reset out-of-band steplengths to `delta`,
//! then shrink `alpha` by `sigma` until
//!
//! ```text
//! f(x_k - alpha g_k) <= max_{0 <= j <= min(k, M)} f(x_{k-j}) - beta alpha g_k^T g_k
//! ```
//!
//! holds. The accepted step feeds a fresh secant pair to the steplength
//! policy. Curvature failures become a NaN steplength that the next safeguard
//! replaces with `delta`.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadratic::{inf_norm, InitialStep, QuadraticInstance};
use crate::stepcore::{dot, next_steplength, PolicyKind, StepPair, SteplengthPolicy};
use crate::trace::{RunTrace, Termination, TraceRow};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("starting point is stationary (g_0 = 0)")]
    ZeroGradient,
    #[error("dimension mismatch: objective has {expected}, point has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("line search stalled at iteration {iteration} after {backtracks} backtracks")]
    LineSearchStall {
        iteration: usize,
        backtracks: usize,
        trace: Box<RunTrace>,
    },
    #[error("objective returned a non-finite value at the starting point")]
    NonFiniteStart,
}

/// A differentiable objective `f: R^n -> R` returning `(f(x), grad f(x))`.
///
/// Implementations must be deterministic and safe to evaluate concurrently.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>);
    /// Conventional starting point.
    fn standard_start(&self) -> Vec<f64>;
    /// Known minimizer, when there is one.
    fn minimizer(&self) -> Option<Vec<f64>> {
        None
    }
}

/// `f(x) = 100 (x2 - x1^2)^2 + (1 - x1)^2`, started from `(-1.2, 1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rosenbrock2;

impl Objective for Rosenbrock2 {
    fn name(&self) -> &str {
        "rosenbrock"
    }

    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let (x1, x2) = (x[0], x[1]);
        let r = x2 - x1 * x1;
        let t = 1.0 - x1;
        let f = 100.0 * r * r + t * t;
        let g = vec![-400.0 * x1 * r - 2.0 * t, 200.0 * r];
        (f, g)
    }

    fn standard_start(&self) -> Vec<f64> {
        vec![-1.2, 1.0]
    }

    fn minimizer(&self) -> Option<Vec<f64>> {
        Some(vec![1.0, 1.0])
    }
}

pub fn rosenbrock2() -> Rosenbrock2 {
    Rosenbrock2
}

/// A quadratic instance seen as a general objective, started from `(1, ..., 1)`.
impl Objective for QuadraticInstance {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        QuadraticInstance::dim(self)
    }

    fn eval(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.value_and_gradient(x).expect("dimension checked by the solver")
    }

    fn standard_start(&self) -> Vec<f64> {
        vec![1.0; QuadraticInstance::dim(self)]
    }
}

type Factory = Arc<dyn Fn(usize) -> Option<Box<dyn Objective>> + Send + Sync>;

/// Objectives addressable by name and dimension.
#[derive(Clone)]
pub struct Registry {
    entries: Vec<(String, Factory)>,
}

impl Registry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// Registers `factory` under `name`; it returns `None` for unsupported
    /// dimensions.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(usize) -> Option<Box<dyn Objective>> + Send + Sync + 'static,
    {
        self.entries.retain(|(n, _)| n != name);
        self.entries.push((name.to_string(), Arc::new(factory)));
    }

    pub fn get(&self, name: &str, dim: usize) -> Option<Box<dyn Objective>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, f)| f(dim))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut reg = Self::empty();
        reg.register("rosenbrock", |n| {
            (n == 2).then(|| Box::new(Rosenbrock2) as Box<dyn Objective>)
        });
        reg
    }
}

/// When the solver stops (besides the iteration cap).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum StopRule {
    /// `||g_k|| < epsilon`
    AbsoluteGradient { epsilon: f64 },
    /// `||g_k|| <= epsilon ||g_0||`
    RelativeGradient { epsilon: f64 },
    /// `||x_k - target|| <= epsilon`
    TargetDistance { target: Vec<f64>, epsilon: f64 },
}

impl fmt::Display for StopRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopRule::AbsoluteGradient { epsilon } => write!(f, "absolute_gradient:{epsilon}"),
            StopRule::RelativeGradient { epsilon } => write!(f, "relative_gradient:{epsilon}"),
            StopRule::TargetDistance { epsilon, .. } => write!(f, "target_distance:{epsilon}"),
        }
    }
}

/// Line-search and stopping parameters. Defaults are `M = 10`, `beta = 0.1`,
/// `eta = 1e-3`, `delta = 0.1`, `sigma = 0.8`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub memory: usize,
    pub beta: f64,
    pub delta: f64,
    pub eta: f64,
    pub sigma: f64,
    pub sigma_bounds: (f64, f64),
    pub stop: StopRule,
    pub max_iter: usize,
    pub alpha0: InitialStep,
    pub max_backtracks: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            memory: 10,
            beta: 0.1,
            delta: 0.1,
            eta: 1e-3,
            sigma: 0.8,
            sigma_bounds: (0.1, 0.9),
            stop: StopRule::RelativeGradient { epsilon: 1e-6 },
            max_iter: 100_000,
            alpha0: InitialStep::AutoFromGradient,
            max_backtracks: 100,
        }
    }
}

impl SolverConfig {
    pub fn with_stop(mut self, stop: StopRule) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_alpha0(mut self, alpha0: InitialStep) -> Self {
        self.alpha0 = alpha0;
        self
    }

    pub fn with_memory(mut self, memory: usize) -> Self {
        self.memory = memory;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        let open_unit = |v: f64| v > 0.0 && v < 1.0;
        let (s1, s2) = self.sigma_bounds;
        if !open_unit(self.beta) {
            return bad(format!("beta must be in (0, 1), got {}", self.beta));
        }
        if !open_unit(self.eta) {
            return bad(format!("eta must be in (0, 1), got {}", self.eta));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if !(0.0 < s1 && s1 <= self.sigma && self.sigma <= s2 && s2 < 1.0) {
            return bad(format!(
                "need 0 < sigma1 <= sigma <= sigma2 < 1, got {s1} <= {} <= {s2}",
                self.sigma
            ));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        let eps = match &self.stop {
            StopRule::AbsoluteGradient { epsilon }
            | StopRule::RelativeGradient { epsilon }
            | StopRule::TargetDistance { epsilon, .. } => *epsilon,
        };
        if !(eps.is_finite() && eps > 0.0) {
            return bad(format!("stopping tolerance must be positive, got {eps}"));
        }
        if let InitialStep::Fixed(a) = self.alpha0 {
            if !(a.is_finite() && a > 0.0) {
                return bad(format!("initial steplength must be positive, got {a}"));
            }
        }
        Ok(())
    }
}

/// The last `M + 1` objective values.
#[derive(Debug, Clone)]
pub struct NonmonotoneWindow {
    values: VecDeque<f64>,
    capacity: usize,
}

impl NonmonotoneWindow {
    pub fn new(memory: usize) -> Self {
        Self {
            values: VecDeque::with_capacity(memory + 1),
            capacity: memory + 1,
        }
    }

    pub fn push(&mut self, f: f64) {
        if self.values.len() == self.capacity {
            self.values.pop_front();
        }
        self.values.push_back(f);
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Nonmonotone sufficient-decrease test.
pub fn nonmonotone_accept(
    f_trial: f64,
    window: &NonmonotoneWindow,
    beta: f64,
    alpha: f64,
    grad_sq: f64,
) -> bool {
    f_trial <= window.max() - beta * alpha * grad_sq
}

/// Replaces `alpha` by `delta` when it is outside `(eta, 1/eta)` or not finite.
pub fn safeguard(alpha: f64, eta: f64, delta: f64) -> f64 {
    if !alpha.is_finite() || alpha <= eta || alpha >= 1.0 / eta {
        delta
    } else {
        alpha
    }
}

pub fn backtrack(alpha: f64, sigma: f64) -> f64 {
    sigma * alpha
}

/// `1 / ||g_0||_inf` if that step lowers `f`, else `1 / (4 ||g_0||_inf)`.
pub fn initial_steplength(objective: &dyn Objective, x0: &[f64]) -> Result<f64, SolverError> {
    let (f0, g0) = objective.eval(x0);
    initial_from(objective, x0, f0, &g0)
}

fn initial_from(objective: &dyn Objective, x0: &[f64], f0: f64, g0: &[f64]) -> Result<f64, SolverError> {
    let scale = inf_norm(g0);
    if scale == 0.0 {
        return Err(SolverError::ZeroGradient);
    }
    let probe: Vec<f64> = x0.iter().zip(g0).map(|(x, g)| x - g / scale).collect();
    let (f_probe, _) = objective.eval(&probe);
    Ok(if f_probe < f0 { 1.0 / scale } else { 1.0 / (4.0 * scale) })
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Runs the nonmonotone BB method from `x0`.
pub fn run(
    objective: &dyn Objective,
    x0: &[f64],
    config: &SolverConfig,
    policy: PolicyKind,
) -> Result<RunTrace, SolverError> {
    config.validate()?;
    if x0.len() != objective.dim() {
        return Err(SolverError::DimensionMismatch {
            expected: objective.dim(),
            got: x0.len(),
        });
    }
    if let StopRule::TargetDistance { target, .. } = &config.stop {
        if target.len() != x0.len() {
            return Err(SolverError::DimensionMismatch {
                expected: x0.len(),
                got: target.len(),
            });
        }
    }
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective.eval(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFiniteStart);
    }
    let g0_norm = dot(&g, &g).sqrt();

    let finish = |rows: Vec<TraceRow>, termination, x: Vec<f64>| RunTrace {
        rows,
        termination,
        final_x: x,
        alpha0: config.alpha0.to_string(),
        stop_rule: config.stop.to_string(),
    };

    let mut alpha = match config.alpha0 {
        InitialStep::Fixed(a) => a,
        InitialStep::InverseGradientInf | InitialStep::AutoFromGradient if g0_norm == 0.0 => {
            let rows = vec![TraceRow::terminal(0, f, 0.0)];
            return Ok(finish(rows, Termination::GradientTolerance, x));
        }
        InitialStep::InverseGradientInf => 1.0 / inf_norm(&g),
        InitialStep::AutoFromGradient => initial_from(objective, &x, f, &g)?,
    };
    let mut state = SteplengthPolicy::starting_after(policy, alpha);
    let mut window = NonmonotoneWindow::new(config.memory);
    window.push(f);
    let mut rows = Vec::new();
    let mut k = 0;

    let termination = loop {
        let g_norm = dot(&g, &g).sqrt();
        let converged = match &config.stop {
            StopRule::AbsoluteGradient { epsilon } => g_norm < *epsilon,
            StopRule::RelativeGradient { epsilon } => g_norm <= epsilon * g0_norm,
            StopRule::TargetDistance { target, epsilon } => distance(&x, target) <= *epsilon,
        };
        if converged || g_norm == 0.0 {
            rows.push(TraceRow::terminal(k, f, g_norm));
            break match config.stop {
                StopRule::TargetDistance { .. } if converged => Termination::TargetDistance,
                StopRule::TargetDistance { .. } => Termination::Stalled,
                _ => Termination::GradientTolerance,
            };
        }
        if k == config.max_iter {
            rows.push(TraceRow::terminal(k, f, g_norm));
            break Termination::IterationCap;
        }

        // The acceptance test uses the recorded norm so traces replay exactly.
        let grad_sq = g_norm * g_norm;
        let trial_alpha = safeguard(alpha, config.eta, config.delta);
        alpha = trial_alpha;
        let mut backtracks = 0;
        let (x_next, f_next, g_next) = loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - alpha * gi).collect();
            let (ft, gt) = objective.eval(&trial);
            if nonmonotone_accept(ft, &window, config.beta, alpha, grad_sq) {
                break (trial, ft, gt);
            }
            if backtracks == config.max_backtracks {
                rows.push(TraceRow::step(k, f, g_norm, trial_alpha, alpha, backtracks, backtracks + 1));
                rows.push(TraceRow::terminal(k, f, g_norm));
                return Err(SolverError::LineSearchStall {
                    iteration: k,
                    backtracks,
                    trace: Box::new(finish(rows, Termination::LineSearchStall, x)),
                });
            }
            alpha = backtrack(alpha, config.sigma);
            backtracks += 1;
        };
        rows.push(TraceRow::step(k, f, g_norm, trial_alpha, alpha, backtracks, backtracks + 1));

        let s: Vec<f64> = x_next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        let used = alpha;
        x = x_next;
        f = f_next;
        g = g_next;
        window.push(f);
        k += 1;

        alpha = match StepPair::new(s, y)
            .map_err(|_| ())
            .and_then(|pair| next_steplength(&state, &pair).map_err(|_| ()))
        {
            Ok((next, _)) => next,
            Err(()) => f64::NAN,
        };
        state = state.advanced(used);
    };

    Ok(finish(rows, termination, x))
}

/// A replay finding from [`audit_trace`].
#[derive(Debug, Clone, PartialEq)]
pub enum AuditViolation {
    /// The safeguarded steplength left `(eta, 1/eta)` without being `delta`.
    OutOfBand { k: usize, alpha_trial: f64 },
    /// `alpha != alpha_trial * sigma^backtracks`.
    BacktrackMismatch { k: usize },
    /// The next objective value breaks the nonmonotone condition.
    Rejected { k: usize, f_next: f64, threshold: f64 },
    /// Evaluations differ from `1 + backtracks`.
    EvalCount { k: usize },
    /// Row indices are not `0, 1, 2, ...`.
    Index { position: usize },
    MissingStep { k: usize },
}

/// Replays a trace against the line-search rules of `config`. An empty result
/// means every accepted step satisfied the nonmonotone condition and every
/// safeguarded steplength was in band.
pub fn audit_trace(trace: &RunTrace, config: &SolverConfig) -> Vec<AuditViolation> {
    let mut out = Vec::new();
    let rows = &trace.rows;
    let eta = config.eta;
    for (i, row) in rows.iter().enumerate() {
        if row.k != i {
            out.push(AuditViolation::Index { position: i });
        }
    }
    let steps = rows.len().saturating_sub(1);
    for i in 0..steps {
        let row = &rows[i];
        let (Some(trial), Some(alpha)) = (row.alpha_trial, row.alpha) else {
            out.push(AuditViolation::MissingStep { k: row.k });
            continue;
        };
        if trace.termination == Termination::LineSearchStall && i + 1 == steps {
            // The stalled attempt was never accepted.
            continue;
        }
        let in_band = trial > eta && trial < 1.0 / eta;
        if !(in_band || trial == config.delta) {
            out.push(AuditViolation::OutOfBand { k: row.k, alpha_trial: trial });
        }
        let mut replay = trial;
        for _ in 0..row.backtracks {
            replay = backtrack(replay, config.sigma);
        }
        if replay != alpha {
            out.push(AuditViolation::BacktrackMismatch { k: row.k });
        }
        if row.fevals != row.backtracks + 1 {
            out.push(AuditViolation::EvalCount { k: row.k });
        }
        let lo = i.saturating_sub(config.memory);
        let mut window = NonmonotoneWindow::new(config.memory);
        for r in &rows[lo..=i] {
            window.push(r.f);
        }
        let grad_sq = row.grad_norm * row.grad_norm;
        let f_next = rows[i + 1].f;
        if !nonmonotone_accept(f_next, &window, config.beta, alpha, grad_sq) {
            out.push(AuditViolation::Rejected {
                k: row.k,
                f_next,
                threshold: window.max() - config.beta * alpha * grad_sq,
            });
        }
    }
    out
}
