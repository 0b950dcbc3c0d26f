//! Python bindings for the `bbfamily` crate.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use bbfamily::gbb::{self, Rosenbrock2, SolverError};
use bbfamily::harness::{performance_profile as profile, rosenbrock_config, CostMatrix, ProfileTable};
use bbfamily::oracle;
use bbfamily::quadratic::{self, InitialStep, SpectrumSetting};
use bbfamily::stepcore::{
    self, ConvexWeight, FamilyParameter, PolicyKind, StepPair, SteplengthPolicy,
};
use bbfamily::RunTrace;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pair(s: Vec<f64>, y: Vec<f64>) -> PyResult<StepPair> {
    StepPair::new(s, y).map_err(value_err)
}

fn gamma(g: f64) -> PyResult<FamilyParameter> {
    FamilyParameter::new(g).map_err(value_err)
}

fn policy_kind(spec: &str) -> PyResult<PolicyKind> {
    spec.parse().map_err(value_err)
}

/// `||s||^2 / s^T y`
#[pyfunction]
fn bb1(s: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    stepcore::bb1(&pair(s, y)?).map_err(value_err)
}

/// `s^T y / ||y||^2`
#[pyfunction]
fn bb2(s: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    stepcore::bb2(&pair(s, y)?).map_err(value_err)
}

#[pyfunction]
fn alpha_convex(s: Vec<f64>, y: Vec<f64>, tau: f64) -> PyResult<f64> {
    let w = ConvexWeight::new(tau).map_err(value_err)?;
    stepcore::alpha_convex(&pair(s, y)?, w).map_err(value_err)
}

#[pyfunction]
fn alpha_family(s: Vec<f64>, y: Vec<f64>, gamma_: f64) -> PyResult<f64> {
    stepcore::alpha_family(&pair(s, y)?, gamma(gamma_)?).map_err(value_err)
}

#[pyfunction]
fn alpha_family_prime(s: Vec<f64>, y: Vec<f64>, gamma_: f64) -> PyResult<f64> {
    stepcore::alpha_family_prime(&pair(s, y)?, gamma(gamma_)?).map_err(value_err)
}

#[pyfunction]
fn alpha_tls(s: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    stepcore::alpha_tls(&pair(s, y)?).map_err(value_err)
}

/// Weight `tau` with `tau * bb1 + (1 - tau) * bb2 == alpha_family(gamma)`.
#[pyfunction]
fn tau_from_gamma(s: Vec<f64>, y: Vec<f64>, gamma_: f64) -> PyResult<f64> {
    stepcore::tau_from_gamma(&pair(s, y)?, gamma(gamma_)?)
        .map(ConvexWeight::tau)
        .map_err(value_err)
}

/// Golden-section minimizer of the scaled TLS ratio.
#[pyfunction]
#[pyo3(signature = (s, y, gamma_, tolerance = 1e-10))]
fn stls_minimizer(s: Vec<f64>, y: Vec<f64>, gamma_: f64, tolerance: f64) -> PyResult<f64> {
    oracle::stls_minimizer(&pair(s, y)?, gamma(gamma_)?, tolerance).map_err(value_err)
}

#[pyfunction]
fn homogeneous_quotient(s: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    oracle::homogeneous_residual_min(&pair(s, y)?).map_err(value_err)
}

/// Stateful steplength rule, e.g. `Policy("gamma:1")` or `Policy("atc:4")`.
#[pyclass(name = "Policy")]
struct PyPolicy {
    state: SteplengthPolicy,
}

#[pymethods]
impl PyPolicy {
    #[new]
    #[pyo3(signature = (spec, alpha0 = None))]
    fn new(spec: &str, alpha0: Option<f64>) -> PyResult<Self> {
        let kind = policy_kind(spec)?;
        let state = match alpha0 {
            Some(a) => SteplengthPolicy::starting_after(kind, a),
            None => SteplengthPolicy::new(kind),
        };
        Ok(Self { state })
    }

    /// Steplength for the pair; advances the internal state.
    fn next(&mut self, s: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        let (alpha, next) = stepcore::next_steplength(&self.state, &pair(s, y)?).map_err(value_err)?;
        self.state = next;
        Ok(alpha)
    }

    #[getter]
    fn spec(&self) -> String {
        self.state.kind.to_string()
    }

    #[getter]
    fn prev_alpha(&self) -> Option<f64> {
        self.state.prev_alpha
    }

    #[getter]
    fn iteration_index(&self) -> usize {
        self.state.iteration_index
    }

    fn __repr__(&self) -> String {
        format!("Policy('{}', k={})", self.state.kind, self.state.iteration_index)
    }
}

#[pyclass(name = "Trace")]
struct PyTrace {
    inner: RunTrace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations()
    }

    #[getter]
    fn termination(&self) -> String {
        self.inner.termination.to_string()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.termination.converged()
    }

    #[getter]
    fn grad_norms(&self) -> Vec<f64> {
        self.inner.rows.iter().map(|r| r.grad_norm).collect()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.rows.iter().map(|r| r.f).collect()
    }

    /// Accepted steplengths, one per step.
    #[getter]
    fn steplengths(&self) -> Vec<f64> {
        self.inner.rows.iter().filter_map(|r| r.alpha).collect()
    }

    #[getter]
    fn final_x(&self) -> Vec<f64> {
        self.inner.final_x.clone()
    }

    #[getter]
    fn fevals(&self) -> usize {
        self.inner.total_fevals()
    }

    /// `(slope, q, coverage)` of the geometric fit of the gradient norms.
    fn rate_fit(&self) -> Option<(f64, f64, f64)> {
        self.inner.rate_fit().map(|r| (r.slope, r.q, r.coverage))
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv_string()
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        RunTrace::read_csv(text.as_bytes())
            .map(|inner| Self { inner })
            .map_err(PyValueError::new_err)
    }

    fn __len__(&self) -> usize {
        self.inner.rows.len()
    }

    fn __repr__(&self) -> String {
        format!("Trace(iterations={}, termination={})", self.inner.iterations(), self.inner.termination)
    }
}

/// Convex quadratic `1/2 x^T A x - b^T x` with `A = Q diag(v) Q^T`.
#[pyclass(name = "QuadraticInstance")]
struct PyQuadratic {
    inner: quadratic::QuadraticInstance,
}

#[pymethods]
impl PyQuadratic {
    #[staticmethod]
    #[pyo3(signature = (n, setting = 1, kappa = 1e4, seed = 0))]
    fn generate(n: usize, setting: u8, kappa: f64, seed: u64) -> PyResult<Self> {
        let setting = SpectrumSetting::new(setting, kappa).map_err(value_err)?;
        quadratic::generate_instance(n, setting, seed)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        quadratic::QuadraticInstance::from_json(text)
            .map(|inner| Self { inner })
            .map_err(value_err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.objective(&x).map_err(value_err)
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.gradient(&x).map_err(value_err)
    }

    fn hessian_product(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.apply_hessian(&x).map_err(value_err)
    }

    /// Plain BB iteration from `x0` (all ones by default), stopping at
    /// `||g_k|| <= epsilon ||g_0||`.
    #[pyo3(signature = (policy, epsilon = 1e-6, max_iter = 20000, x0 = None, alpha0 = None))]
    fn solve(
        &self,
        policy: &str,
        epsilon: f64,
        max_iter: usize,
        x0: Option<Vec<f64>>,
        alpha0: Option<f64>,
    ) -> PyResult<PyTrace> {
        let x0 = x0.unwrap_or_else(|| vec![1.0; self.inner.dim()]);
        let alpha0 = alpha0.map_or(InitialStep::InverseGradientInf, InitialStep::Fixed);
        quadratic::solve_bb(&self.inner, policy_kind(policy)?, epsilon, max_iter, &x0, alpha0)
            .map(|inner| PyTrace { inner })
            .map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("QuadraticInstance(dim={})", self.inner.dim())
    }
}

/// Nonmonotone line-search run on the planar Rosenbrock function from
/// `(-1.2, 1)`, stopping once the iterate is within `epsilon` of `(1, 1)`.
#[pyfunction]
#[pyo3(signature = (policy, epsilon = 1e-8))]
fn rosenbrock(policy: &str, epsilon: f64) -> PyResult<PyTrace> {
    let config = rosenbrock_config(epsilon);
    match gbb::run(&Rosenbrock2, &[-1.2, 1.0], &config, policy_kind(policy)?) {
        Ok(inner) => Ok(PyTrace { inner }),
        Err(SolverError::LineSearchStall { trace, .. }) => Ok(PyTrace { inner: *trace }),
        Err(e) => Err(value_err(e)),
    }
}

#[pyclass(name = "Profile")]
struct PyProfile {
    inner: ProfileTable,
}

#[pymethods]
impl PyProfile {
    #[getter]
    fn solvers(&self) -> Vec<String> {
        self.inner.solvers.clone()
    }

    /// Fraction of problems `solver` solves within `theta` of the best.
    fn rho(&self, solver: usize, theta: f64) -> PyResult<f64> {
        if solver >= self.inner.solvers.len() {
            return Err(PyValueError::new_err(format!("no solver at index {solver}")));
        }
        Ok(self.inner.rho(solver, theta))
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.inner.breakpoints()
    }
}

/// Performance profile of `costs[problem][solver]`, with `None` for failures.
#[pyfunction]
#[pyo3(signature = (solvers, costs, problems = None))]
fn performance_profile(
    solvers: Vec<String>,
    costs: Vec<Vec<Option<f64>>>,
    problems: Option<Vec<String>>,
) -> PyResult<PyProfile> {
    let problems = problems.unwrap_or_else(|| (0..costs.len()).map(|p| format!("p{p}")).collect());
    let matrix = CostMatrix {
        solvers,
        problems,
        costs,
    };
    profile(&matrix).map(|inner| PyProfile { inner }).map_err(value_err)
}

#[pymodule]
#[pyo3(name = "bbfamily")]
fn bbfamily_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(bb1, m)?)?;
    m.add_function(wrap_pyfunction!(bb2, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_convex, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_family, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_family_prime, m)?)?;
    m.add_function(wrap_pyfunction!(alpha_tls, m)?)?;
    m.add_function(wrap_pyfunction!(tau_from_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(stls_minimizer, m)?)?;
    m.add_function(wrap_pyfunction!(homogeneous_quotient, m)?)?;
    m.add_function(wrap_pyfunction!(rosenbrock, m)?)?;
    m.add_function(wrap_pyfunction!(performance_profile, m)?)?;
    m.add_class::<PyPolicy>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyQuadratic>()?;
    m.add_class::<PyProfile>()?;
    Ok(())
}
