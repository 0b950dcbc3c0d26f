//! Experiment orchestration: quadratic sweeps, the planar Rosenbrock table and
//! performance profiles.

pub mod cli;
pub mod profile;

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::gbb::{self, Rosenbrock2, SolverConfig, SolverError, StopRule};
use crate::quadratic::{generate_instance, solve_bb, InitialStep, QuadraticError, SpectrumSetting};
use crate::stepcore::PolicyKind;
use crate::trace::{fmt_f64, RunTrace, Termination};

pub use profile::{performance_profile, CostMatrix, ProfileError, ProfileTable};

pub const SWEEP_SCHEMA: &str = "bbfamily-sweep v1";
pub const AVERAGES_SCHEMA: &str = "bbfamily-averages v1";

/// Iteration cap used in the quadratic experiments.
pub const QUADRATIC_CAP: usize = 20_000;
/// Iteration cap for the Rosenbrock table.
pub const ROSENBROCK_CAP: usize = 5_000;
pub const ROSENBROCK_EPSILONS: [f64; 4] = [1e-1, 1e-2, 1e-4, 1e-8];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Quadratic(#[from] QuadraticError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Axes of a quadratic sweep. Every combination of setting, kappa, epsilon,
/// seed and policy is one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub n: usize,
    pub settings: Vec<u8>,
    pub kappas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicyKind>,
    pub max_iter: usize,
    pub alpha0: InitialStep,
    /// Run the nonmonotone line-search solver instead of the plain iteration.
    pub line_search: bool,
}

impl ExperimentGrid {
    /// `n = 100`, setting 1, `kappa = 1e4`, `epsilon = 1e-6`, seeds `0..10`,
    /// policies BB1, BB2, gamma 1 and gamma 20.
    pub fn desk_scale() -> Self {
        Self {
            n: 100,
            settings: vec![1],
            kappas: vec![1e4],
            epsilons: vec![1e-6],
            seeds: (0..10).collect(),
            policies: vec![
                PolicyKind::Bb1,
                PolicyKind::Bb2,
                PolicyKind::gamma(1.0).expect("valid"),
                PolicyKind::gamma(20.0).expect("valid"),
            ],
            max_iter: QUADRATIC_CAP,
            alpha0: InitialStep::InverseGradientInf,
            line_search: false,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidGrid(m.to_string()));
        if self.settings.is_empty()
            || self.kappas.is_empty()
            || self.epsilons.is_empty()
            || self.seeds.is_empty()
            || self.policies.is_empty()
        {
            return bad("every axis needs at least one value");
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return bad("epsilons must lie in (0, 1)");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        for &id in &self.settings {
            for &kappa in &self.kappas {
                let s = SpectrumSetting::new(id, kappa)?;
                if self.n < s.min_dim() {
                    return Err(QuadraticError::DimensionTooSmall {
                        n: self.n,
                        setting: id,
                        min: s.min_dim(),
                    }
                    .into());
                }
            }
        }
        Ok(())
    }

    fn stop_rule(epsilon: f64) -> String {
        format!("relative_gradient:{epsilon}")
    }

    fn cells(&self) -> Vec<CellSpec> {
        let mut out = Vec::new();
        for &setting in &self.settings {
            for &kappa in &self.kappas {
                for &epsilon in &self.epsilons {
                    for &seed in &self.seeds {
                        for &policy in &self.policies {
                            out.push(CellSpec {
                                setting,
                                kappa,
                                epsilon,
                                seed,
                                policy,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct CellSpec {
    setting: u8,
    kappa: f64,
    epsilon: f64,
    seed: u64,
    policy: PolicyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Converged,
    Capped,
    Failed(String),
}

impl std::fmt::Display for CellStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellStatus::Converged => f.write_str("ok"),
            CellStatus::Capped => f.write_str("cap"),
            CellStatus::Failed(msg) => write!(f, "error: {}", msg.replace(',', ";")),
        }
    }
}

/// One run of the sweep, with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub setting: u8,
    pub kappa: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub n: usize,
    pub policy: String,
    pub alpha0: String,
    pub stop_rule: String,
    pub solver: String,
    pub iterations: usize,
    pub status: CellStatus,
    /// `||g_final|| / ||g_0||`
    pub grad_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AverageRow {
    pub setting: u8,
    pub kappa: f64,
    pub epsilon: f64,
    pub policy: String,
    pub runs: usize,
    pub failures: usize,
    pub mean_iterations: f64,
    pub median_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub averages: Vec<AverageRow>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn run_cell(grid: &ExperimentGrid, spec: CellSpec) -> CellResult {
    let mut cell = CellResult {
        setting: spec.setting,
        kappa: spec.kappa,
        epsilon: spec.epsilon,
        seed: spec.seed,
        n: grid.n,
        policy: spec.policy.to_string(),
        alpha0: grid.alpha0.to_string(),
        stop_rule: ExperimentGrid::stop_rule(spec.epsilon),
        solver: if grid.line_search { "gbb" } else { "bb" }.to_string(),
        iterations: 0,
        status: CellStatus::Converged,
        grad_ratio: f64::NAN,
    };
    let outcome = (|| -> Result<RunTrace, HarnessError> {
        let setting = SpectrumSetting::new(spec.setting, spec.kappa)?;
        let inst = generate_instance(grid.n, setting, spec.seed)?;
        let x0 = vec![1.0; grid.n];
        if grid.line_search {
            let config = SolverConfig::default()
                .with_stop(StopRule::RelativeGradient {
                    epsilon: spec.epsilon,
                })
                .with_max_iter(grid.max_iter)
                .with_alpha0(grid.alpha0);
            Ok(gbb::run(&inst, &x0, &config, spec.policy)?)
        } else {
            Ok(solve_bb(&inst, spec.policy, spec.epsilon, grid.max_iter, &x0, grid.alpha0)?)
        }
    })();
    match outcome {
        Ok(trace) => {
            cell.iterations = trace.iterations();
            cell.grad_ratio = trace.last().grad_norm / trace.rows[0].grad_norm;
            cell.status = match trace.termination {
                t if t.converged() => CellStatus::Converged,
                Termination::IterationCap => CellStatus::Capped,
                other => CellStatus::Failed(other.to_string()),
            };
        }
        Err(e) => {
            cell.iterations = grid.max_iter;
            cell.status = CellStatus::Failed(e.to_string());
        }
    }
    cell
}

/// Runs every cell of the grid (in parallel) and aggregates over seeds.
///
/// Results come back in grid order. Per-cell failures are recorded in the
/// cell, never abort the sweep; capped runs count `max_iter` iterations.
pub fn run_quadratic_sweep(grid: &ExperimentGrid) -> Result<SweepResult, HarnessError> {
    grid.validate()?;
    let cells: Vec<CellResult> = grid
        .cells()
        .into_par_iter()
        .map(|spec| run_cell(grid, spec))
        .collect();

    let mut averages = Vec::new();
    for &setting in &grid.settings {
        for &kappa in &grid.kappas {
            for &epsilon in &grid.epsilons {
                for policy in &grid.policies {
                    let name = policy.to_string();
                    let group: Vec<&CellResult> = cells
                        .iter()
                        .filter(|c| {
                            c.setting == setting
                                && c.kappa == kappa
                                && c.epsilon == epsilon
                                && c.policy == name
                        })
                        .collect();
                    let mut iters: Vec<f64> = group.iter().map(|c| c.iterations as f64).collect();
                    let mean = iters.iter().sum::<f64>() / iters.len() as f64;
                    averages.push(AverageRow {
                        setting,
                        kappa,
                        epsilon,
                        policy: name,
                        runs: group.len(),
                        failures: group
                            .iter()
                            .filter(|c| c.status != CellStatus::Converged)
                            .count(),
                        mean_iterations: mean,
                        median_iterations: median(&mut iters),
                    });
                }
            }
        }
    }
    Ok(SweepResult { cells, averages })
}

impl SweepResult {
    pub fn write_cells_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# {SWEEP_SCHEMA}")?;
        writeln!(
            out,
            "setting,kappa,epsilon,seed,n,policy,alpha0,stop_rule,solver,iterations,status,grad_ratio"
        )?;
        for c in &self.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                c.setting,
                fmt_f64(c.kappa),
                fmt_f64(c.epsilon),
                c.seed,
                c.n,
                c.policy,
                c.alpha0,
                c.stop_rule,
                c.solver,
                c.iterations,
                c.status,
                fmt_f64(c.grad_ratio)
            )?;
        }
        Ok(())
    }

    pub fn write_averages_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# {AVERAGES_SCHEMA}")?;
        writeln!(out, "setting,kappa,epsilon,policy,runs,failures,mean_iterations,median_iterations")?;
        for a in &self.averages {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                a.setting,
                fmt_f64(a.kappa),
                fmt_f64(a.epsilon),
                a.policy,
                a.runs,
                a.failures,
                fmt_f64(a.mean_iterations),
                fmt_f64(a.median_iterations)
            )?;
        }
        Ok(())
    }

    /// Problems are `(setting, kappa, epsilon, seed)` tuples, solvers the
    /// policies; anything but convergence counts as a failure.
    pub fn cost_matrix(&self) -> CostMatrix {
        let mut solvers: Vec<String> = Vec::new();
        let mut problems: Vec<String> = Vec::new();
        for c in &self.cells {
            if !solvers.contains(&c.policy) {
                solvers.push(c.policy.clone());
            }
            let p = format!("s{}_k{:e}_e{:e}_seed{}", c.setting, c.kappa, c.epsilon, c.seed);
            if !problems.contains(&p) {
                problems.push(p);
            }
        }
        let mut costs = vec![vec![None; solvers.len()]; problems.len()];
        for c in &self.cells {
            let p = format!("s{}_k{:e}_e{:e}_seed{}", c.setting, c.kappa, c.epsilon, c.seed);
            let pi = problems.iter().position(|x| *x == p).expect("collected above");
            let si = solvers.iter().position(|x| *x == c.policy).expect("collected above");
            if c.status == CellStatus::Converged {
                // Zero-iteration runs still cost one unit.
                costs[pi][si] = Some(c.iterations.max(1) as f64);
            }
        }
        CostMatrix {
            solvers,
            problems,
            costs,
        }
    }
}

/// The four steplengths compared on the planar Rosenbrock function.
pub fn rosenbrock_policies() -> [PolicyKind; 4] {
    [
        PolicyKind::Bb1,
        PolicyKind::Bb2,
        PolicyKind::gamma(1.0).expect("valid"),
        PolicyKind::gamma(1.5).expect("valid"),
    ]
}

/// Line-search settings for the Rosenbrock runs: defaults, `alpha_0 = 1`,
/// stop at distance `epsilon` from `(1, 1)` or after 5000 iterations.
pub fn rosenbrock_config(epsilon: f64) -> SolverConfig {
    SolverConfig::default()
        .with_alpha0(InitialStep::Fixed(1.0))
        .with_stop(StopRule::TargetDistance {
            target: vec![1.0, 1.0],
            epsilon,
        })
        .with_max_iter(ROSENBROCK_CAP)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RosenbrockCell {
    pub epsilon: f64,
    pub policy: String,
    /// `None` when the iteration cap was hit.
    pub iterations: Option<usize>,
    pub termination: Termination,
}

/// Runs every Rosenbrock policy from `(-1.2, 1)` for each tolerance.
pub fn run_rosenbrock_table(epsilons: &[f64]) -> Result<Vec<RosenbrockCell>, HarnessError> {
    let mut out = Vec::new();
    for &epsilon in epsilons {
        let config = rosenbrock_config(epsilon);
        for policy in rosenbrock_policies() {
            let trace = match gbb::run(&Rosenbrock2, &[-1.2, 1.0], &config, policy) {
                Ok(t) => t,
                Err(SolverError::LineSearchStall { trace, .. }) => *trace,
                Err(e) => return Err(e.into()),
            };
            out.push(RosenbrockCell {
                epsilon,
                policy: policy.to_string(),
                iterations: (trace.termination == Termination::TargetDistance)
                    .then(|| trace.iterations()),
                termination: trace.termination,
            });
        }
    }
    Ok(out)
}

pub fn write_rosenbrock_csv<W: Write>(cells: &[RosenbrockCell], mut out: W) -> io::Result<()> {
    writeln!(out, "# bbfamily-rosenbrock v1 cap={ROSENBROCK_CAP}")?;
    writeln!(out, "epsilon,policy,iterations,termination")?;
    for c in cells {
        let iters = c.iterations.map_or_else(|| "--".to_string(), |k| k.to_string());
        writeln!(out, "{},{},{},{}", fmt_f64(c.epsilon), c.policy, iters, c.termination)?;
    }
    Ok(())
}
