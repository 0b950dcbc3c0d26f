//! Barzilai-Borwein steplengths from scaled total least squares.
//!
//! * [`stepcore`]: closed-form steplengths (BB1, BB2, convex combinations, the
//!   STLS family and its inverse, ATC) and the policy state machine.
//! * [`oracle`]: brute-force minimizers used to check the closed forms.
//! * [`quadratic`]: matrix-free Householder quadratics, the random instance
//!   generator and the plain BB iteration.
//! * [`gbb`]: the nonmonotone line-search BB solver for general objectives.
//! * [`harness`]: experiment sweeps, performance profiles and the CLI.

pub mod gbb;
pub mod harness;
pub mod oracle;
pub mod quadratic;
pub mod stepcore;
pub mod trace;

pub use gbb::{run, Objective, Rosenbrock2, SolverConfig, SolverError, StopRule};
pub use quadratic::{generate_instance, solve_bb, InitialStep, QuadraticInstance, SpectrumSetting};
pub use stepcore::{FamilyParameter, ConvexWeight, PolicyKind, StepError, StepPair, SteplengthPolicy};
pub use trace::{RateFit, RunTrace, Termination, TraceRow};
