//! Criticality tests, implied multipliers and local-minimality classification
//! for the constrained (P) and penalized (Q) problems.

use std::fmt;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::model::{ModelError, PathPoint, ProblemInstance, Support};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Problem {
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tag {
    LocalMin,
    LocalMax,
    Saddle,
    Degenerate,
    Breakpoint,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::LocalMin => "local-min",
            Tag::LocalMax => "local-max",
            Tag::Saddle => "saddle",
            Tag::Degenerate => "degenerate",
            Tag::Breakpoint => "breakpoint",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        Some(match s {
            "local-min" => Tag::LocalMin,
            "local-max" => Tag::LocalMax,
            "saddle" => Tag::Saddle,
            "degenerate" => Tag::Degenerate,
            "breakpoint" => Tag::Breakpoint,
            _ => return None,
        })
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub tag: Tag,
    pub problem: Problem,
    /// Smallest eigenvalue of `K` (Q) or of `K` on the contour tangent space (P).
    pub min_eigenvalue: Option<f64>,
    pub max_eigenvalue: Option<f64>,
}

#[derive(Debug, Error)]
pub enum ClassificationError {
    #[error("point is not critical (residual {residual:.3e} exceeds {threshold:.3e})")]
    NotCritical { residual: f64, threshold: f64 },
    #[error("per-coordinate multipliers disagree (spread {spread:.3e}, mean {mean:.3e})")]
    InconsistentLambda { spread: f64, mean: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Result of reading `λ` off a candidate critical point.
#[derive(Debug, Clone, PartialEq)]
pub enum ImpliedLambda {
    /// All active coordinates agree; negative round-off is clamped to zero.
    Consistent(f64),
    /// Coordinates disagree, or agree on a negative value.
    Inconsistent { spread: f64, mean: f64 },
    /// Empty support: every `λ` is admissible.
    Any,
}

impl ImpliedLambda {
    pub fn value(&self) -> Option<f64> {
        match self {
            ImpliedLambda::Consistent(v) => Some(*v),
            _ => None,
        }
    }
}

/// `∇_I φ(β) + λ ∇_I F_p(β)` on `I = supp(β)`; empty at the origin.
pub fn criticality_residual(
    inst: &ProblemInstance,
    beta: &DVector<f64>,
    lambda: f64,
    tol: &Tolerances,
) -> DVector<f64> {
    let support = Support::of(beta, tol.zero);
    let mut r = inst.grad_phi(beta, &support);
    for (k, &i) in support.indices().iter().enumerate() {
        // Nonzero by construction of the support.
        r[k] += lambda * beta[i].signum() * beta[i].abs().powf(inst.p() - 1.0);
    }
    r
}

/// Threshold the residual is compared against: `critical · (1 + ‖∇φ(β)‖)`.
pub fn residual_threshold(inst: &ProblemInstance, beta: &DVector<f64>, tol: &Tolerances) -> f64 {
    tol.critical * (1.0 + inst.gradient(beta).norm())
}

pub fn is_critical(inst: &ProblemInstance, beta: &DVector<f64>, lambda: f64, tol: &Tolerances) -> bool {
    lambda >= -tol.critical
        && criticality_residual(inst, beta, lambda, tol).norm() <= residual_threshold(inst, beta, tol)
}

/// `λ = −∂_i φ / ψ_p'(β_i)`, required to agree across the support.
pub fn implied_lambda(inst: &ProblemInstance, beta: &DVector<f64>, tol: &Tolerances) -> ImpliedLambda {
    let support = Support::of(beta, tol.zero);
    if support.is_empty() {
        return ImpliedLambda::Any;
    }
    let grad = inst.grad_phi(beta, &support);
    let values: Vec<f64> = support
        .indices()
        .iter()
        .enumerate()
        .map(|(k, &i)| -grad[k] * beta[i].signum() * beta[i].abs().powf(1.0 - inst.p()))
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let spread = hi - lo;
    let scale = 1.0 + lo.abs().max(hi.abs());
    if spread > tol.lambda_spread * scale || mean < -tol.lambda_spread * scale {
        ImpliedLambda::Inconsistent { spread, mean }
    } else {
        ImpliedLambda::Consistent(mean.max(0.0))
    }
}

fn breakpoint_threshold(inst: &ProblemInstance, tol: &Tolerances) -> f64 {
    tol.breakpoint * (1.0 + inst.gradient(&DVector::zeros(inst.n())).norm())
}

/// Restricted OLS optimality on a nonempty support with some inactive
/// coordinate still pulling away from zero.
pub fn is_breakpoint(inst: &ProblemInstance, beta: &DVector<f64>, tol: &Tolerances) -> bool {
    let support = Support::of(beta, tol.zero);
    if support.is_empty() {
        return false;
    }
    let thr = breakpoint_threshold(inst, tol);
    let grad = inst.gradient(beta);
    let on_support = support.indices().iter().all(|&i| grad[i].abs() < thr);
    let off_support = (0..inst.n()).any(|j| !support.contains(j) && grad[j].abs() > thr);
    let lambda_zero = matches!(implied_lambda(inst, beta, tol), ImpliedLambda::Consistent(l) if l < thr);
    on_support && off_support && lambda_zero
}

fn check_critical(
    inst: &ProblemInstance,
    beta: &DVector<f64>,
    lambda: f64,
    tol: &Tolerances,
) -> Result<(), ClassificationError> {
    let residual = criticality_residual(inst, beta, lambda, tol).norm();
    let threshold = residual_threshold(inst, beta, tol);
    if residual > threshold || lambda < -tol.critical {
        return Err(ClassificationError::NotCritical { residual, threshold });
    }
    Ok(())
}

fn eigen_tag(eigs: &[f64], tol_e: f64, full_support: bool) -> Tag {
    let (lo, hi) = (eigs[0], eigs[eigs.len() - 1]);
    if lo > tol_e {
        Tag::LocalMin
    } else if lo < -tol_e {
        if hi < -tol_e && full_support {
            Tag::LocalMax
        } else {
            Tag::Saddle
        }
    } else {
        Tag::Degenerate
    }
}

fn spectral_tolerance(eigs: &[f64], tol: &Tolerances) -> f64 {
    let norm = eigs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    tol.degeneracy * (1.0 + norm)
}

/// Local-minimality of `β` for `f_λ`, from the spectrum of `K`.
///
/// Inactive coordinates act like a local minimum for `λ > 0` because of the
/// cusp of `ψ_p` at zero, so a negative definite `K` only yields `LocalMax`
/// on the full support.
pub fn classify_q(
    inst: &ProblemInstance,
    beta: &DVector<f64>,
    lambda: f64,
    tol: &Tolerances,
) -> Result<Classification, ClassificationError> {
    check_critical(inst, beta, lambda, tol)?;
    let support = Support::of(beta, tol.zero);
    let make = |tag, lo, hi| Classification { tag, problem: Problem::Q, min_eigenvalue: lo, max_eigenvalue: hi };
    if support.is_empty() {
        let grad0 = inst.gradient(beta);
        let tag = if lambda > tol.critical || grad0.amax() <= breakpoint_threshold(inst, tol) {
            Tag::LocalMin
        } else {
            Tag::Saddle
        };
        return Ok(make(tag, None, None));
    }
    let k = inst.hessian_k(beta, lambda, &support)?;
    let eigs = linalg::symmetric_eigenvalues(&k);
    let (lo, hi) = (Some(eigs[0]), Some(eigs[eigs.len() - 1]));
    if is_breakpoint(inst, beta, tol) {
        return Ok(make(Tag::Breakpoint, lo, hi));
    }
    let tag = eigen_tag(&eigs, spectral_tolerance(&eigs, tol), support.len() == inst.n());
    Ok(make(tag, lo, hi))
}

/// Local-minimality of `β` for `min φ` s.t. `F_p ≤ F_p(β)`.
///
/// Uses the implied multiplier and `K` projected onto the tangent space of the
/// `F_p` contour. A single active coordinate has no tangent space; then `K > 0`
/// decides, and otherwise a probe moves each inactive coordinate by `±1e-4`
/// while staying on the contour and compares `φ`.
pub fn classify_p(
    inst: &ProblemInstance,
    beta: &DVector<f64>,
    tol: &Tolerances,
) -> Result<Classification, ClassificationError> {
    let support = Support::of(beta, tol.zero);
    let make = |tag, lo, hi| Classification { tag, problem: Problem::P, min_eigenvalue: lo, max_eigenvalue: hi };
    if support.is_empty() {
        return Ok(make(Tag::LocalMin, None, None));
    }
    let lambda = match implied_lambda(inst, beta, tol) {
        ImpliedLambda::Consistent(l) => l,
        ImpliedLambda::Inconsistent { spread, mean } => {
            return Err(ClassificationError::InconsistentLambda { spread, mean })
        }
        ImpliedLambda::Any => unreachable!("support is nonempty"),
    };
    check_critical(inst, beta, lambda, tol)?;
    if is_breakpoint(inst, beta, tol) {
        return Ok(make(Tag::Breakpoint, None, None));
    }
    if inst.gradient(beta).amax() <= breakpoint_threshold(inst, tol) {
        // Stationary for φ itself: the unconstrained minimum.
        return Ok(make(Tag::LocalMin, None, None));
    }
    let k = inst.hessian_k(beta, lambda, &support)?;
    if support.len() == 1 {
        let kv = k[(0, 0)];
        let tol_e = tol.degeneracy * (1.0 + kv.abs());
        if kv > tol_e {
            return Ok(make(Tag::LocalMin, Some(kv), Some(kv)));
        }
        return Ok(make(probe_single_support(inst, beta, support.indices()[0]), Some(kv), Some(kv)));
    }
    let g = inst.grad_penalty(beta, &support)?;
    let z = linalg::orthogonal_complement(&g);
    let projected = z.transpose() * &k * &z;
    let eigs = linalg::symmetric_eigenvalues(&projected);
    let tag = eigen_tag(&eigs, spectral_tolerance(&eigs, tol), support.len() == inst.n());
    Ok(make(tag, Some(eigs[0]), Some(eigs[eigs.len() - 1])))
}

const PROBE_STEP: f64 = 1e-4;

fn probe_single_support(inst: &ProblemInstance, beta: &DVector<f64>, i: usize) -> Tag {
    let n = inst.n();
    if n == 1 {
        // The feasible set is an interval and β sits on its end nearest β*.
        return Tag::LocalMin;
    }
    let p = inst.p();
    let c = inst.penalty(beta);
    let phi0 = inst.phi(beta);
    let mut up = 0;
    let mut down = 0;
    for j in (0..n).filter(|&j| j != i) {
        for sign in [1.0, -1.0] {
            let remaining = c - crate::model::psi(p, PROBE_STEP);
            if remaining <= 0.0 {
                continue;
            }
            let mut b = beta.clone();
            b[j] = sign * PROBE_STEP;
            b[i] = beta[i].signum() * (p * remaining).powf(1.0 / p);
            if inst.phi(&b) > phi0 {
                up += 1;
            } else {
                down += 1;
            }
        }
    }
    match (up, down) {
        (_, 0) => Tag::LocalMin,
        (0, _) => Tag::LocalMax,
        _ => Tag::Saddle,
    }
}

/// Builds a [`PathPoint`] at `(β, λ)` with both classification tags.
///
/// Classification failures are logged and tagged `Degenerate`.
pub fn annotate(
    inst: &ProblemInstance,
    beta: DVector<f64>,
    lambda: f64,
    arclength: f64,
    tol: &Tolerances,
) -> PathPoint {
    let class_q = classify_q(inst, &beta, lambda, tol).map(|c| c.tag).unwrap_or_else(|e| {
        log::warn!("Q classification failed at lambda={lambda:.6e}: {e}");
        Tag::Degenerate
    });
    let class_p = classify_p(inst, &beta, tol).map(|c| c.tag).unwrap_or_else(|e| {
        log::warn!("P classification failed at lambda={lambda:.6e}: {e}");
        Tag::Degenerate
    });
    PathPoint {
        arclength,
        c: inst.penalty(&beta),
        support: Support::of(&beta, tol.zero),
        beta: beta.iter().copied().collect(),
        lambda,
        class_q,
        class_p,
    }
}
