//! Critical paths of ℓp-constrained and ℓp-penalized least squares for `0 < p < 1`.
//!
//! The two problems studied here share the quadratic
//! `φ(β) = ½ (β − β*)ᵀ G (β − β*) + γ` and the separable penalty
//! `F_p(β) = Σ |β_i|^p / p`:
//!
//! - the constrained form minimizes `φ` subject to `F_p(β) ≤ c`,
//! - the penalized form minimizes `f_λ = φ + λ F_p`.
//!
//! Their critical points coincide as sets, but neither `c ↦ λ` nor the
//! local-minimality criteria agree. This crate traces the piecewise-smooth
//! curves of critical points by pseudo-arclength continuation, builds the
//! main path (OLS solution to origin) and the greedy path (origin to OLS
//! solution), runs orthogonal matching pursuit and checks that its steps
//! match the greedy breakpoints, and ships brute-force global oracles for
//! small dimensions.
//!
//! Module map:
//! - [`model`]: problem data, objective, penalty and their derivatives.
//! - [`critical`]: criticality residual, implied λ, classification.
//! - [`scalar`]: separable closed forms and brute-force global oracles.
//! - [`tracer`]: continuation of critical curves with event detection.
//! - [`strategies`]: main/greedy paths, Minkowskian direction, OMP.
//! - [`io`]: path file formats (JSON and CSV).
//! - [`verify`]: the structural check suite run by `lpcrit verify`.

pub mod critical;
pub mod io;
mod linalg;
pub mod model;
pub mod scalar;
pub mod strategies;
pub mod tolerances;
pub mod tracer;
pub mod verify;

/// Re-exported so callers build `DVector` arguments with the same version.
pub use nalgebra;

pub use critical::{
    classify_p, classify_q, criticality_residual, implied_lambda, is_breakpoint, Classification,
    ClassificationError, ImpliedLambda, Problem, Tag,
};
pub use model::{load_instance, ModelError, PathPoint, ProblemInstance, Support};
pub use scalar::{
    brute_force_global_p, brute_force_global_q, enumerate_orthogonal_critical_points,
    lambda_bar, lambda_global_jump, scalar_critical_points, Branch, GlobalSolution, GridSpec,
    ScalarCriticalSet,
};
pub use strategies::{
    check_omp_coincidence, greedy_path, main_path, minkowskian_direction, omp, Path, PathKind,
};
pub use tolerances::Tolerances;
pub use tracer::{
    enter_coordinate, tangent_direction, trace_segment, verify_tangential_connection, Event,
    EventKind, Segment, TraceError, TraceSettings,
};
