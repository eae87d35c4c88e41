//! Main and greedy critical paths, the generalized Minkowskian direction,
//! and orthogonal matching pursuit.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critical::{self, ImpliedLambda, Problem};
use crate::linalg;
use crate::model::{ModelError, PathPoint, ProblemInstance, Support};
use crate::tolerances::Tolerances;
use crate::tracer::{self, trace_segment, Direction, Event, EventKind, Segment, TraceError, TraceSettings};

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("point is not critical: {0}")]
    NotCritical(String),
    #[error("Hessian K is singular at this point")]
    SingularK,
    #[error("path kind {path:?} does not match the {variant} OMP variant")]
    MismatchedVariants { path: PathKind, variant: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    Main,
    Greedy,
    ModifiedGreedy,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportChange {
    Add(#[serde(with = "one_based")] usize),
    Remove(#[serde(with = "one_based")] usize),
}

mod one_based {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(i: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(*i as u64 + 1)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        match u64::deserialize(d)? {
            0 => Err(serde::de::Error::custom("indices are 1-based")),
            v => Ok(v as usize - 1),
        }
    }
}

/// Consecutive segments joined at breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub kind: PathKind,
    pub segments: Vec<Segment>,
    pub breakpoints: Vec<PathPoint>,
    pub terminal: Event,
    pub active_order: Vec<SupportChange>,
    /// Set when tracing stopped on a numerical failure; the path is partial.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Path {
    /// All points in order, with the shared joint points listed once.
    pub fn points(&self) -> Vec<PathPoint> {
        let mut out: Vec<PathPoint> = Vec::new();
        for (k, seg) in self.segments.iter().enumerate() {
            let skip = usize::from(k > 0);
            out.extend(seg.points.iter().skip(skip).cloned());
        }
        out
    }

    pub fn endpoint(&self) -> &PathPoint {
        &self.terminal.location
    }

    pub fn is_complete(&self) -> bool {
        self.error.is_none()
            && matches!(self.terminal.kind, EventKind::ReachedOls | EventKind::ReachedOrigin)
    }

    /// Indices added, in order (greedy paths).
    pub fn activation_order(&self) -> Vec<usize> {
        self.active_order
            .iter()
            .filter_map(|c| match c {
                SupportChange::Add(i) => Some(*i),
                SupportChange::Remove(_) => None,
            })
            .collect()
    }

    /// Splits the point sequence wherever `λ` (for Q) or `c` (for P) changes
    /// direction; each piece is single-valued in that parameter.
    pub fn decompose(&self, problem: Problem) -> Vec<Vec<PathPoint>> {
        let pts = self.points();
        let value = |p: &PathPoint| match problem {
            Problem::Q => p.lambda,
            Problem::P => p.c,
        };
        let mut pieces = vec![vec![pts[0].clone()]];
        let mut dir = 0.0;
        for w in pts.windows(2) {
            let d = value(&w[1]) - value(&w[0]);
            let step = if d == 0.0 { 0.0 } else { d.signum() };
            if step != 0.0 && dir != 0.0 && step != dir {
                let last = pieces.last().unwrap().last().unwrap().clone();
                pieces.push(vec![last]);
            }
            if step != 0.0 {
                dir = step;
            }
            pieces.last_mut().unwrap().push(w[1].clone());
        }
        pieces
    }
}

fn signs_of(beta: &DVector<f64>, support: &Support) -> Vec<f64> {
    support.indices().iter().map(|&i| beta[i].signum()).collect()
}

/// Critical path from the OLS solution to the origin, dropping one index at
/// each breakpoint.
pub fn main_path(inst: &ProblemInstance, settings: &TraceSettings) -> Result<Path, StrategyError> {
    if !inst.is_positive_definite() {
        return Err(TraceError::RankDeficient.into());
    }
    let tol = &settings.tolerances;
    let beta_star = inst.ols_solution();
    let mut support = Support::of(&beta_star, tol.zero);
    let mut current = critical::annotate(inst, beta_star.clone(), 0.0, 0.0, tol);
    let mut path = Path {
        kind: PathKind::Main,
        segments: Vec::new(),
        breakpoints: Vec::new(),
        terminal: Event { kind: EventKind::ReachedOrigin, location: current.clone() },
        active_order: Vec::new(),
        error: None,
    };
    if support.is_empty() {
        return Ok(path);
    }
    loop {
        let signs = signs_of(&current.beta_vector(), &support);
        let seg = match trace_segment(inst, &current, &support, &signs, Direction::IncreasingLambda, settings) {
            Ok(seg) => seg,
            Err(e) => {
                log::error!("main path stopped: {e}");
                path.terminal = Event { kind: EventKind::Stalled { reason: e.to_string() }, location: current };
                path.error = Some(e.to_string());
                return Ok(path);
            }
        };
        let end = seg.end_event.clone();
        path.segments.push(seg);
        match &end.kind {
            EventKind::ComponentVanishes { indices } => {
                path.active_order.extend(indices.indices().iter().map(|&i| SupportChange::Remove(i)));
                support = support.without(indices.indices());
                path.breakpoints.push(end.location.clone());
                current = end.location.clone();
            }
            EventKind::ReachedOrigin => {
                path.active_order.extend(support.indices().iter().map(|&i| SupportChange::Remove(i)));
                path.terminal = end;
                return Ok(path);
            }
            other => {
                let reason = format!("main segment ended without a vanishing component ({other:?})");
                path.terminal = Event { kind: EventKind::Stalled { reason }, location: end.location };
                return Ok(path);
            }
        }
    }
}

/// Index of the largest `|∂_i φ(β)|` outside `support`, optionally limited to
/// coordinates with `∂_i φ · β*_i < 0`. Ties go to the smallest index.
pub fn select_entering(
    inst: &ProblemInstance,
    beta: &DVector<f64>,
    support: &Support,
    modified: bool,
    tol: &Tolerances,
) -> Option<usize> {
    let grad = inst.gradient(beta);
    let floor = tol.breakpoint * (1.0 + inst.gradient(&DVector::zeros(inst.n())).norm());
    let mut best: Option<(usize, f64)> = None;
    for i in (0..inst.n()).filter(|&i| !support.contains(i)) {
        let g = grad[i];
        if g.abs() <= floor {
            continue;
        }
        if modified && !(g * inst.beta_star()[i] < 0.0) {
            continue;
        }
        if best.is_none_or(|(_, v)| g.abs() > v) {
            best = Some((i, g.abs()));
        }
    }
    best.map(|(i, _)| i)
}

/// Critical path from the origin towards the OLS solution, adding the
/// steepest coordinate at each breakpoint.
///
/// Stops with a `Stalled` terminal when a component returns to zero or no
/// candidate index is left.
pub fn greedy_path(inst: &ProblemInstance, modified: bool, settings: &TraceSettings) -> Result<Path, StrategyError> {
    if !inst.is_positive_definite() {
        return Err(TraceError::RankDeficient.into());
    }
    let tol = &settings.tolerances;
    let n = inst.n();
    let mut current = critical::annotate(inst, DVector::zeros(n), 0.0, 0.0, tol);
    let mut support = Support::empty();
    let mut path = Path {
        kind: if modified { PathKind::ModifiedGreedy } else { PathKind::Greedy },
        segments: Vec::new(),
        breakpoints: Vec::new(),
        terminal: Event { kind: EventKind::ReachedOls, location: current.clone() },
        active_order: Vec::new(),
        error: None,
    };
    loop {
        let beta = current.beta_vector();
        if inst.gradient(&beta).amax() <= tol.breakpoint * (1.0 + inst.beta_star().amax()) {
            path.terminal = Event { kind: EventKind::ReachedOls, location: current };
            return Ok(path);
        }
        let Some(j) = select_entering(inst, &beta, &support, modified, tol) else {
            let reason = "no admissible index can enter".to_string();
            path.terminal = Event { kind: EventKind::Stalled { reason }, location: current };
            return Ok(path);
        };
        let sign = -inst.gradient(&beta)[j].signum();
        let next_support = support.with(j);
        let signs: Vec<f64> = next_support
            .indices()
            .iter()
            .map(|&i| if i == j { sign } else { beta[i].signum() })
            .collect();
        path.active_order.push(SupportChange::Add(j));
        let seg = match trace_segment(inst, &current, &next_support, &signs, Direction::IncreasingLambda, settings) {
            Ok(seg) => seg,
            Err(e) => {
                log::error!("greedy path stopped: {e}");
                path.terminal = Event { kind: EventKind::Stalled { reason: e.to_string() }, location: current };
                path.error = Some(e.to_string());
                return Ok(path);
            }
        };
        let end = seg.end_event.clone();
        path.segments.push(seg);
        match &end.kind {
            EventKind::Breakpoint => {
                path.breakpoints.push(end.location.clone());
                support = next_support;
                current = end.location;
            }
            EventKind::ReachedOls => {
                path.terminal = end;
                return Ok(path);
            }
            EventKind::ComponentVanishes { indices } => {
                let names: Vec<String> = indices.indices().iter().map(|i| (i + 1).to_string()).collect();
                let reason = format!("component(s) {} returned to zero", names.join(","));
                path.active_order.extend(indices.indices().iter().map(|&i| SupportChange::Remove(i)));
                path.terminal = Event { kind: EventKind::Stalled { reason }, location: end.location };
                return Ok(path);
            }
            other => {
                let reason = format!("unexpected segment end {other:?}");
                path.terminal = Event { kind: EventKind::Stalled { reason }, location: end.location };
                return Ok(path);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Origin,
    Interior,
    Breakpoint,
    IndefiniteK,
    /// Gradient zero: the OLS solution, no direction.
    Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinkowskianDirection {
    /// Unit greedy direction `−∇_GM φ`.
    pub vector: Vec<f64>,
    pub regime: Regime,
    /// `Q_β` of the unnormalized direction; absent for an indefinite `K`.
    pub pseudo_norm_value: Option<f64>,
}

/// `Q_β(a) = sqrt(a_Iᵀ K a_I) + (1/p) Σ_{i∉I} ψ_p(a_i)`.
pub fn pseudo_norm(
    inst: &ProblemInstance,
    beta: &DVector<f64>,
    lambda: f64,
    a: &DVector<f64>,
    tol: &Tolerances,
) -> Result<f64, StrategyError> {
    let support = Support::of(beta, tol.zero);
    let mut q = 0.0;
    if !support.is_empty() {
        let k = inst.hessian_k(beta, lambda, &support)?;
        let ai = support.gather(a);
        q += ai.dot(&(&k * &ai)).max(0.0).sqrt();
    }
    for i in (0..inst.n()).filter(|&i| !support.contains(i)) {
        q += inst.psi_p(a[i]) / inst.p();
    }
    Ok(q)
}

/// Greedy direction at a critical point from the generalized Minkowskian
/// gradient.
///
/// At the origin and at breakpoints it is `−sgn(∂_{i★} φ) e_{i★}` for the
/// steepest inactive `i★`; elsewhere `−K⁻¹ ∇_I φ` normalized, or `+K⁻¹ ∇_I φ`
/// when `K` is indefinite.
pub fn minkowskian_direction(
    inst: &ProblemInstance,
    beta: &DVector<f64>,
    tol: &Tolerances,
) -> Result<MinkowskianDirection, StrategyError> {
    let n = inst.n();
    let support = Support::of(beta, tol.zero);
    let grad = inst.gradient(beta);
    let floor = tol.breakpoint * (1.0 + inst.gradient(&DVector::zeros(n)).norm());
    if grad.amax() <= floor {
        return Ok(MinkowskianDirection { vector: vec![0.0; n], regime: Regime::Terminal, pseudo_norm_value: None });
    }
    let grad_i = support.gather(&grad);
    if support.is_empty() || grad_i.amax() <= floor {
        let istar = select_entering(inst, beta, &support, false, tol).expect("some gradient entry is nonzero");
        let mut v = DVector::zeros(n);
        v[istar] = -grad[istar].signum();
        let lambda = if support.is_empty() { 0.0 } else { lambda_at(inst, beta, tol)? };
        let q = pseudo_norm(inst, beta, lambda, &v, tol)?;
        let regime = if support.is_empty() { Regime::Origin } else { Regime::Breakpoint };
        return Ok(MinkowskianDirection { vector: v.iter().copied().collect(), regime, pseudo_norm_value: Some(q) });
    }
    let lambda = lambda_at(inst, beta, tol)?;
    let k = inst.hessian_k(beta, lambda, &support)?;
    let eigs = linalg::symmetric_eigenvalues(&k);
    let scale = tol.degeneracy * (1.0 + eigs.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    if eigs.iter().any(|e| e.abs() <= scale) {
        return Err(StrategyError::SingularK);
    }
    let kinv_g = linalg::solve(&k, &grad_i).ok_or(StrategyError::SingularK)?;
    let (unnormalized, regime, q) = if eigs[0] > 0.0 {
        let q = grad_i.dot(&kinv_g).sqrt();
        (-kinv_g, Regime::Interior, Some(q))
    } else {
        (kinv_g, Regime::IndefiniteK, None)
    };
    let full = support.scatter(&unnormalized.normalize(), n);
    Ok(MinkowskianDirection { vector: full.iter().copied().collect(), regime, pseudo_norm_value: q })
}

fn lambda_at(inst: &ProblemInstance, beta: &DVector<f64>, tol: &Tolerances) -> Result<f64, StrategyError> {
    match critical::implied_lambda(inst, beta, tol) {
        ImpliedLambda::Consistent(l) => Ok(l),
        ImpliedLambda::Any => Ok(0.0),
        ImpliedLambda::Inconsistent { spread, mean } => {
            Err(StrategyError::NotCritical(format!("multiplier spread {spread:.3e} around {mean:.3e}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmpStatus {
    ReachedOls,
    /// The modified variant found no coordinate with `∂_i φ · β*_i < 0`.
    NoCandidate,
    /// Every coordinate is active but the gradient is not zero (singular blocks).
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmpStep {
    #[serde(with = "one_based")]
    pub added: usize,
    pub support: Support,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmpResult {
    pub modified: bool,
    pub steps: Vec<OmpStep>,
    pub status: OmpStatus,
}

impl OmpResult {
    pub fn activation_order(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.added).collect()
    }
}

/// Orthogonal matching pursuit: add the steepest coordinate, then minimize
/// `φ` over the active coordinates.
pub fn omp(inst: &ProblemInstance, modified: bool, tol: &Tolerances) -> Result<OmpResult, StrategyError> {
    let n = inst.n();
    let mut beta = DVector::zeros(n);
    let mut support = Support::empty();
    let mut steps = Vec::new();
    let status = loop {
        if inst.gradient(&beta).amax() <= tol.breakpoint * (1.0 + inst.beta_star().amax()) {
            break OmpStatus::ReachedOls;
        }
        if support.len() == n {
            break OmpStatus::Exhausted;
        }
        let Some(j) = select_entering(inst, &beta, &support, modified, tol) else {
            break if modified { OmpStatus::NoCandidate } else { OmpStatus::Exhausted };
        };
        support = support.with(j);
        beta = inst.restricted_ols(&support)?;
        steps.push(OmpStep { added: j, support: support.clone(), beta: beta.iter().copied().collect() });
    };
    Ok(OmpResult { modified, steps, status })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceReport {
    pub coincide: bool,
    /// Largest distance between a path breakpoint (or its endpoint) and the
    /// matching OMP step.
    pub max_deviation: f64,
    /// Largest multiplier read off a path breakpoint.
    pub max_breakpoint_lambda: f64,
    pub path_points: usize,
    pub omp_steps: usize,
}

pub const COINCIDENCE_TOLERANCE: f64 = 1e-6;

/// Compares greedy breakpoints plus endpoint with the OMP step solutions.
pub fn check_omp_coincidence(
    inst: &ProblemInstance,
    path: &Path,
    steps: &OmpResult,
    tol: &Tolerances,
) -> Result<CoincidenceReport, StrategyError> {
    let variant = if steps.modified { "modified" } else { "unmodified" };
    let expected = if steps.modified { PathKind::ModifiedGreedy } else { PathKind::Greedy };
    if path.kind != expected {
        return Err(StrategyError::MismatchedVariants { path: path.kind, variant });
    }
    let mut targets: Vec<&PathPoint> = path.breakpoints.iter().collect();
    targets.push(path.endpoint());
    let mut max_dev: f64 = 0.0;
    let count_ok = targets.len() == steps.steps.len();
    for (pt, st) in targets.iter().zip(&steps.steps) {
        let d = (pt.beta_vector() - DVector::from_column_slice(&st.beta)).amax();
        max_dev = max_dev.max(d);
    }
    let mut max_lambda: f64 = 0.0;
    for bp in &path.breakpoints {
        let l = match critical::implied_lambda(inst, &bp.beta_vector(), tol) {
            ImpliedLambda::Consistent(l) => l,
            _ => f64::INFINITY,
        };
        max_lambda = max_lambda.max(l.max(bp.lambda));
    }
    let coincide = count_ok
        && path.terminal.kind == EventKind::ReachedOls
        && max_dev <= COINCIDENCE_TOLERANCE
        && max_lambda <= COINCIDENCE_TOLERANCE;
    Ok(CoincidenceReport {
        coincide,
        max_deviation: if count_ok { max_dev } else { f64::INFINITY },
        max_breakpoint_lambda: max_lambda,
        path_points: targets.len(),
        omp_steps: steps.steps.len(),
    })
}

/// Tangency checks at every joint of a path.
pub fn tangency_at_joints(path: &Path) -> Vec<Result<tracer::TangencyReport, TraceError>> {
    path.segments.windows(2).map(|w| tracer::verify_tangential_connection(&w[0], &w[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(json: &str) -> ProblemInstance {
        ProblemInstance::from_json_str(json).unwrap()
    }

    fn ex2() -> ProblemInstance {
        inst(r#"{"G": [[1,0],[0,1]], "beta_star": [2,1], "p": 0.5}"#)
    }

    fn ex3d() -> ProblemInstance {
        inst(r#"{"G": [[1,-0.7,-0.6],[-0.7,1,-0.1],[-0.6,-0.1,1]], "beta_star": [0.2,0.8,1], "p": 0.5}"#)
    }

    fn close(a: &[f64], b: &[f64], eps: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= eps)
    }

    #[test]
    fn omp_examples() {
        let tol = Tolerances::default();
        let r = omp(&ex2(), false, &tol).unwrap();
        assert_eq!(r.status, OmpStatus::ReachedOls);
        assert_eq!(r.steps.len(), 2);
        assert_eq!(r.steps[0].beta, vec![2.0, 0.0]);
        assert_eq!(r.steps[1].beta, vec![2.0, 1.0]);
        let m = omp(&ex3d(), true, &tol).unwrap();
        assert_eq!(m.activation_order(), vec![2, 1, 0]);
        assert!(close(&m.steps[0].beta, &[0.0, 0.0, 0.8], 1e-14));
        assert!(close(&m.steps[1].beta, &[0.0, 64.0 / 99.0, 85.6 / 99.0], 1e-14));
        assert!(close(&m.steps[2].beta, &[0.2, 0.8, 1.0], 1e-12));
        let one = inst(r#"{"G": [[1]], "beta_star": [1], "p": 0.5}"#);
        let r1 = omp(&one, false, &tol).unwrap();
        assert_eq!(r1.steps.len(), 1);
        assert_eq!(r1.steps[0].beta, vec![1.0]);
    }

    #[test]
    fn minkowskian_at_origin_and_terminal() {
        let tol = Tolerances::default();
        let i3 = ex3d();
        let d = minkowskian_direction(&i3, &DVector::zeros(3), &tol).unwrap();
        assert_eq!(d.regime, Regime::Origin);
        assert_eq!(d.vector, vec![-1.0, 0.0, 0.0]);
        let t = minkowskian_direction(&i3, i3.beta_star(), &tol).unwrap();
        assert_eq!(t.regime, Regime::Terminal);
        let bp = DVector::from_vec(vec![0.0, 0.0, 0.8]);
        let b = minkowskian_direction(&i3, &bp, &tol).unwrap();
        assert_eq!(b.regime, Regime::Breakpoint);
        // ∇φ at the breakpoint is [0.48, −0.64, 0] so index 2 enters upward.
        assert_eq!(b.vector, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn greedy_on_orthogonal_example() {
        let e2 = ex2();
        let settings = TraceSettings::default();
        let path = greedy_path(&e2, false, &settings).unwrap();
        assert_eq!(path.terminal.kind, EventKind::ReachedOls);
        assert_eq!(path.breakpoints.len(), 1);
        assert!(close(&path.breakpoints[0].beta, &[2.0, 0.0], 1e-12));
        assert!(close(&path.endpoint().beta, &[2.0, 1.0], 1e-12));
        assert_eq!(path.activation_order(), vec![0, 1]);
        let r = check_omp_coincidence(&e2, &path, &omp(&e2, false, &settings.tolerances).unwrap(), &settings.tolerances)
            .unwrap();
        assert!(r.coincide);
        assert_eq!(path.decompose(Problem::Q).len(), 4);
    }

    #[test]
    fn coincidence_rejects_permuted_steps_and_wrong_variant() {
        let e2 = ex2();
        let settings = TraceSettings::default();
        let tol = settings.tolerances;
        let path = greedy_path(&e2, false, &settings).unwrap();
        let mut steps = omp(&e2, false, &tol).unwrap();
        steps.steps.swap(0, 1);
        assert!(!check_omp_coincidence(&e2, &path, &steps, &tol).unwrap().coincide);
        let modified = omp(&e2, true, &tol).unwrap();
        assert!(matches!(
            check_omp_coincidence(&e2, &path, &modified, &tol),
            Err(StrategyError::MismatchedVariants { .. })
        ));
    }

    #[test]
    fn main_path_on_orthogonal_example() {
        let e2 = ex2();
        let path = main_path(&e2, &TraceSettings::default()).unwrap();
        assert!(path.is_complete());
        assert_eq!(path.terminal.kind, EventKind::ReachedOrigin);
        assert_eq!(path.breakpoints.len(), 1);
        assert!(close(&path.breakpoints[0].beta, &[2.0, 0.0], 1e-12));
        assert_eq!(path.active_order, vec![SupportChange::Remove(1), SupportChange::Remove(0)]);
        for w in path.segments.windows(2) {
            assert!(w[1].support.len() < w[0].support.len());
        }
    }
}
