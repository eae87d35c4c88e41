//! Pseudo-arclength continuation of critical curves on a fixed support.
//!
//! Curves are followed in the variables `u_i = |β_i|^{1−p}` (with a fixed
//! sign per coordinate) and `λ`. The scaled residual
//! `R_i(u, λ) = u_i ∂_i φ(β) + λ s_i` equals `u_i` times the criticality
//! residual and stays smooth where a coordinate leaves or reaches zero, so
//! breakpoints and entries are regular points of the curve. Both kinds of
//! event occur at `λ = 0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critical::{self, annotate};
use crate::linalg;
use crate::model::{ModelError, PathPoint, ProblemInstance, Support};
use crate::tolerances::Tolerances;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("tracing requires a positive definite Gram matrix")]
    RankDeficient,
    #[error("start point is not critical on support {support} (residual {residual:.3e})")]
    NotCritical { support: Support, residual: f64 },
    #[error("invalid start: {0}")]
    InvalidStart(String),
    #[error("branch point at lambda={lambda:.6e}: the continuation Jacobian is rank deficient")]
    BranchPoint { lambda: f64, beta: Vec<f64> },
    #[error("step size underflow at lambda={lambda:.6e}, arclength={arclength:.6e}")]
    StepUnderflow { lambda: f64, arclength: f64 },
    #[error("step limit of {0} exceeded")]
    TooManySteps(usize),
    #[error("could not correct a seeded point for coordinate {index} onto the curve")]
    SeedFailed { index: usize },
    #[error("segments do not share an endpoint (gap {0:.3e})")]
    NotConnected(f64),
}

mod one_based {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(i: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(*i as u64 + 1)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<usize, D::Error> {
        let v = u64::deserialize(d)?;
        if v == 0 {
            return Err(serde::de::Error::custom("indices are 1-based"));
        }
        Ok(v as usize - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EventKind {
    /// Segment start that is none of the special points below.
    Start,
    /// A coordinate enters the support at a breakpoint or the origin.
    Entry {
        #[serde(with = "one_based")]
        index: usize,
    },
    ComponentVanishes { indices: Support },
    Breakpoint,
    /// `λ̇ = 0`; interior to a segment.
    TurningPoint,
    /// `ċ = 0`; interior to a segment.
    ConstraintExtremum,
    ReachedOls,
    ReachedOrigin,
    Stalled { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    #[serde(flatten)]
    pub kind: EventKind,
    pub location: PathPoint,
}

/// One smooth piece of a critical curve on a fixed support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub support: Support,
    /// Sign of each support coordinate, in support order.
    pub signs: Vec<f64>,
    pub points: Vec<PathPoint>,
    pub start_event: Event,
    pub end_event: Event,
    /// Turning points and constraint extrema, in arclength order.
    pub interior_events: Vec<Event>,
    /// Sign of `dλ/ds` at the start.
    pub orientation: f64,
}

impl Segment {
    pub fn turning_points(&self) -> impl Iterator<Item = &Event> {
        self.interior_events.iter().filter(|e| e.kind == EventKind::TurningPoint)
    }

    pub fn first(&self) -> &PathPoint {
        &self.points[0]
    }

    pub fn last(&self) -> &PathPoint {
        &self.points[self.points.len() - 1]
    }
}

/// Which way to leave the start point.
#[derive(Debug, Clone, PartialEq)]
pub enum Direction {
    IncreasingLambda,
    DecreasingLambda,
    /// Positive inner product with this `(dβ_I, dλ)` vector.
    Along(DVector<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceSettings {
    pub initial_step: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub newton_tol: f64,
    pub max_newton_iterations: usize,
    /// Largest accepted angle between consecutive tangents, in radians.
    pub max_turn_angle: f64,
    pub max_steps: usize,
    /// Add geometrically spaced points next to both segment ends.
    pub refine_ends: bool,
    pub tolerances: Tolerances,
}

impl Default for TraceSettings {
    fn default() -> Self {
        Self {
            initial_step: 1e-3,
            min_step: 1e-9,
            max_step: 5e-2,
            newton_tol: 1e-12,
            max_newton_iterations: 25,
            max_turn_angle: 0.05,
            max_steps: 200_000,
            refine_ends: true,
            tolerances: Tolerances::default(),
        }
    }
}

impl TraceSettings {
    pub const KEYS: [&'static str; 8] = [
        "initial_step",
        "min_step",
        "max_step",
        "newton_tol",
        "max_newton_iterations",
        "max_turn_angle",
        "max_steps",
        "refine_ends",
    ];

    /// Overrides a step-control key or a tolerance key. Returns `false` for
    /// unknown keys.
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        match key {
            "initial_step" => self.initial_step = value,
            "min_step" => self.min_step = value,
            "max_step" => self.max_step = value,
            "newton_tol" => self.newton_tol = value,
            "max_newton_iterations" => self.max_newton_iterations = value as usize,
            "max_turn_angle" => self.max_turn_angle = value,
            "max_steps" => self.max_steps = value as usize,
            "refine_ends" => self.refine_ends = value != 0.0,
            _ => return self.tolerances.set(key, value),
        }
        true
    }
}

/// Distances from a segment end at which extra points are placed.
fn refinement_distances() -> impl Iterator<Item = f64> {
    (0..60).map(|k| 1e-2 * 0.6f64.powi(k)).take_while(|d| *d > 1e-13)
}

/// The critical curve on one support with fixed signs, in `(u, λ)`.
struct Curve<'a> {
    inst: &'a ProblemInstance,
    idx: Vec<usize>,
    signs: Vec<f64>,
    q: f64,
    settings: &'a TraceSettings,
}

impl<'a> Curve<'a> {
    fn k(&self) -> usize {
        self.idx.len()
    }

    fn beta(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut b = DVector::zeros(self.inst.n());
        for (a, &i) in self.idx.iter().enumerate() {
            b[i] = self.signs[a] * x[a].signum() * x[a].abs().powf(self.q);
        }
        b
    }

    fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let k = self.k();
        let beta = self.beta(x);
        let grad = self.inst.gradient(&beta);
        DVector::from_fn(k, |a, _| x[a] * grad[self.idx[a]] + x[k] * self.signs[a])
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let k = self.k();
        let beta = self.beta(x);
        let grad = self.inst.gradient(&beta);
        let g = self.inst.gram();
        let dbeta: Vec<f64> = (0..k)
            .map(|b| self.signs[b] * self.q * x[b].abs().powf(self.q - 1.0))
            .collect();
        let mut j = DMatrix::zeros(k, k + 1);
        for a in 0..k {
            for b in 0..k {
                j[(a, b)] = x[a] * g[(self.idx[a], self.idx[b])] * dbeta[b];
            }
            j[(a, a)] += grad[self.idx[a]];
            j[(a, k)] = self.signs[a];
        }
        j
    }

    fn tangent(&self, x: &DVector<f64>, reference: &DVector<f64>) -> Result<DVector<f64>, TraceError> {
        let v = linalg::null_vector(&self.jacobian(x), 1e-11).ok_or_else(|| TraceError::BranchPoint {
            lambda: x[self.k()],
            beta: self.beta(x).iter().copied().collect(),
        })?;
        Ok(if v.dot(reference) < 0.0 { -v } else { v })
    }

    fn residual_ok(&self, r: &DVector<f64>, y: &DVector<f64>) -> bool {
        r.amax() <= self.settings.newton_tol * (1.0 + y.amax())
    }

    /// Newton on `R(y) = 0`, `t · (y − x) = h` from the predictor `x + h t`.
    fn correct(&self, x: &DVector<f64>, t: &DVector<f64>, h: f64) -> Option<(DVector<f64>, usize)> {
        let k = self.k();
        let mut y = x + t * h;
        let mut prev_norm = f64::INFINITY;
        let mut polished = false;
        for iter in 0..self.settings.max_newton_iterations {
            let r = self.residual(&y);
            let rn = r.amax();
            if !rn.is_finite() {
                return None;
            }
            let done = self.residual_ok(&r, &y);
            if done && (polished || rn == 0.0) {
                return Some((y, iter));
            }
            if iter > 3 && rn > 2.0 * prev_norm {
                return None;
            }
            prev_norm = rn;
            let mut m = DMatrix::zeros(k + 1, k + 1);
            m.view_mut((0, 0), (k, k + 1)).copy_from(&self.jacobian(&y));
            m.row_mut(k).copy_from(&t.transpose());
            let mut rhs = DVector::zeros(k + 1);
            rhs.rows_mut(0, k).copy_from(&(-&r));
            rhs[k] = h - t.dot(&(&y - x));
            let d = linalg::solve(&m, &rhs)?;
            y += d;
            // One extra iteration after the tolerance is met.
            polished = done;
        }
        let r = self.residual(&y);
        self.residual_ok(&r, &y).then_some((y, self.settings.max_newton_iterations))
    }

    /// `dc/ds` up to the positive factor `q`: `Σ u^{q−2} t_u`.
    fn c_rate(&self, x: &DVector<f64>, t: &DVector<f64>) -> f64 {
        (0..self.k()).map(|a| x[a].abs().powf(self.q - 2.0) * t[a]).sum()
    }

    fn to_point(&self, x: &DVector<f64>, s: f64) -> PathPoint {
        annotate(self.inst, self.beta(x), x[self.k()].max(0.0), s, &self.settings.tolerances)
    }

    fn min_active(&self, x: &DVector<f64>) -> f64 {
        let b = self.beta(x);
        self.idx.iter().map(|&i| b[i].abs()).fold(f64::INFINITY, f64::min)
    }

    /// β-space tangent `(dβ_I, dλ)` from a `(u, λ)` tangent.
    fn beta_tangent(&self, x: &DVector<f64>, t: &DVector<f64>) -> DVector<f64> {
        let k = self.k();
        DVector::from_fn(k + 1, |a, _| {
            if a == k {
                t[k]
            } else {
                self.signs[a] * self.q * x[a].abs().powf(self.q - 1.0) * t[a]
            }
        })
    }
}

fn ensure_traceable(inst: &ProblemInstance) -> Result<(), TraceError> {
    if inst.is_positive_definite() {
        Ok(())
    } else {
        Err(TraceError::RankDeficient)
    }
}

/// Unit tangent `(dβ_I, dλ)` of the critical curve at `(β, λ)` on `I = supp(β)`,
/// the null vector of `[K | ∇_I F_p]`.
///
/// Oriented to have positive inner product with `previous` when given,
/// otherwise with `dλ ≥ 0`.
pub fn tangent_direction(
    inst: &ProblemInstance,
    beta: &DVector<f64>,
    lambda: f64,
    previous: Option<&DVector<f64>>,
    tol: &Tolerances,
) -> Result<DVector<f64>, TraceError> {
    let support = Support::of(beta, tol.zero);
    let k = support.len();
    if k == 0 {
        return Err(TraceError::InvalidStart("the origin has no tangent on an empty support".into()));
    }
    let kk = inst.hessian_k(beta, lambda, &support)?;
    let gf = inst.grad_penalty(beta, &support)?;
    let mut j = DMatrix::zeros(k, k + 1);
    j.view_mut((0, 0), (k, k)).copy_from(&kk);
    j.set_column(k, &gf);
    let v = linalg::null_vector(&j, 1e-11).ok_or_else(|| TraceError::BranchPoint {
        lambda,
        beta: beta.iter().copied().collect(),
    })?;
    let flip = match previous {
        Some(prev) => v.dot(prev) < 0.0,
        None => v[k] < 0.0,
    };
    Ok(if flip { -v } else { v })
}

fn start_kind(inst: &ProblemInstance, start: &PathPoint, support: &Support, tol: &Tolerances) -> EventKind {
    let beta = start.beta_vector();
    if let Some(&i) = support.indices().iter().find(|&&i| beta[i] == 0.0) {
        return EventKind::Entry { index: i };
    }
    if support.is_empty() {
        return EventKind::ReachedOrigin;
    }
    if critical::is_breakpoint(inst, &beta, tol) {
        return EventKind::Breakpoint;
    }
    if start.lambda == 0.0 && inst.gradient(&beta).amax() <= tol.breakpoint * (1.0 + inst.beta_star().amax()) {
        return EventKind::ReachedOls;
    }
    EventKind::Start
}

/// Follows the critical curve through `start` on `support` until `λ` returns
/// to zero.
///
/// `signs[a]` fixes the sign of `β` on the `a`-th support coordinate; a
/// coordinate with `β = 0` at the start is entering the support. Turning
/// points and extrema of `c` are located by bisection and reported as interior
/// events. The end is a breakpoint, a vanishing component, the OLS solution
/// or the origin, snapped to the exact restricted least-squares point.
pub fn trace_segment(
    inst: &ProblemInstance,
    start: &PathPoint,
    support: &Support,
    signs: &[f64],
    direction: Direction,
    settings: &TraceSettings,
) -> Result<Segment, TraceError> {
    ensure_traceable(inst)?;
    let tol = &settings.tolerances;
    let k = support.len();
    if k == 0 || signs.len() != k || !support.is_valid_for(inst.n()) {
        return Err(TraceError::InvalidStart("support and signs must be nonempty and match".into()));
    }
    let p = inst.p();
    let curve = Curve {
        inst,
        idx: support.indices().to_vec(),
        signs: signs.to_vec(),
        q: 1.0 / (1.0 - p),
        settings,
    };
    let beta0 = start.beta_vector();
    let mut x = DVector::zeros(k + 1);
    for (a, &i) in support.indices().iter().enumerate() {
        if beta0[i] != 0.0 && beta0[i].signum() != signs[a] {
            return Err(TraceError::InvalidStart(format!("sign of coordinate {} disagrees", i + 1)));
        }
        x[a] = beta0[i].abs().powf(1.0 - p);
    }
    if (0..inst.n()).any(|i| !support.contains(i) && beta0[i] != 0.0) {
        return Err(TraceError::InvalidStart("start has nonzeros off the support".into()));
    }
    x[k] = start.lambda;
    let r0 = curve.residual(&x).amax();
    if r0 > tol.critical * (1.0 + x.amax()) {
        return Err(TraceError::NotCritical { support: support.clone(), residual: r0 });
    }

    let reference = match &direction {
        Direction::IncreasingLambda => DVector::from_fn(k + 1, |a, _| if a == k { 1.0 } else { 0.0 }),
        Direction::DecreasingLambda => DVector::from_fn(k + 1, |a, _| if a == k { -1.0 } else { 0.0 }),
        Direction::Along(v) => v.clone(),
    };
    let mut t = curve.tangent(&x, &DVector::from_element(k + 1, 0.0))?;
    let oriented_dot = match &direction {
        Direction::Along(_) => curve.beta_tangent(&x, &t).dot(&reference),
        _ => t.dot(&reference),
    };
    if oriented_dot < 0.0 {
        t = -t;
    }
    let orientation = t[k].signum();
    let s0 = start.arclength;
    let (x_start, t_start) = (x.clone(), t.clone());

    let start_point = curve.to_point(&x, s0);
    let start_event = Event { kind: start_kind(inst, start, support, tol), location: start_point.clone() };
    let mut points = vec![start_point];
    let mut interior: Vec<Event> = Vec::new();
    let mut s = s0;
    let mut h = settings.initial_step;
    let mut first_step: Option<f64> = None;
    let mut steps = 0usize;

    let (x_end, s_end, last_h) = loop {
        steps += 1;
        if steps > settings.max_steps {
            return Err(TraceError::TooManySteps(settings.max_steps));
        }
        h = h.clamp(settings.min_step, settings.max_step);
        let Some((y, iters)) = curve.correct(&x, &t, h) else {
            h *= 0.5;
            if h < settings.min_step {
                return Err(TraceError::StepUnderflow { lambda: x[k], arclength: s });
            }
            continue;
        };
        let ty = curve.tangent(&y, &t)?;
        let angle = t.dot(&ty).clamp(-1.0, 1.0).acos();
        if angle > settings.max_turn_angle && h > settings.min_step * 2.0 {
            h *= 0.5;
            continue;
        }

        // λ returns to zero: the segment ends inside this step.
        if y[k] <= 0.0 && x[k] > 0.0 {
            let hz = crate::scalar::bisect(
                |hh| curve.correct(&x, &t, hh).map_or(f64::NAN, |(z, _)| z[k]),
                0.0,
                h,
            );
            let (z, _) = curve.correct(&x, &t, hz).ok_or(TraceError::StepUnderflow { lambda: 0.0, arclength: s })?;
            locate_interior(&curve, &x, &t, hz, s, &mut points, &mut interior)?;
            break (z, s + hz, hz);
        }
        if y[k] < 0.0 {
            return Err(TraceError::InvalidStart("curve leaves the start towards negative lambda".into()));
        }

        locate_interior(&curve, &x, &t, h, s, &mut points, &mut interior)?;
        s += h;
        first_step.get_or_insert(h);
        points.push(curve.to_point(&y, s));
        x = y;
        t = ty;
        if iters <= 3 && angle < 0.5 * settings.max_turn_angle {
            h *= 1.5;
        } else if iters >= 8 {
            h *= 0.7;
        }
    };

    // Classify and snap the end.
    let t_end = curve.tangent(&x_end, &t)?;
    let umax = x_end.rows(0, k).amax().max(1.0);
    let vanished: Vec<usize> =
        (0..k).filter(|&a| x_end[a].abs() <= 1e-6 * umax).map(|a| support.indices()[a]).collect();
    let remaining = support.without(&vanished);
    let snapped = inst.restricted_ols(&remaining)?;
    let located = curve.beta(&x_end);
    let gap = (&snapped - &located).amax();
    if gap > 1e-6 * (1.0 + snapped.amax()) {
        log::warn!("segment end is {gap:.3e} away from the restricted least-squares point");
    }
    let kind = if vanished.is_empty() {
        let g = inst.gradient(&snapped);
        if g.amax() <= tol.breakpoint * (1.0 + inst.gradient(&DVector::zeros(inst.n())).norm()) {
            EventKind::ReachedOls
        } else {
            EventKind::Breakpoint
        }
    } else if remaining.is_empty() {
        EventKind::ReachedOrigin
    } else {
        EventKind::ComponentVanishes { indices: Support::new(vanished.clone()) }
    };
    let end_point = annotate(inst, snapped, 0.0, s_end, tol);

    if settings.refine_ends {
        let near_start = first_step.unwrap_or(s_end - s0);
        for d in refinement_distances().filter(|d| *d < near_start) {
            if let Some((z, _)) = curve.correct(&x_start, &t_start, d) {
                if curve.min_active(&z) >= tol.zero && z[k] > 0.0 {
                    points.push(curve.to_point(&z, s0 + d));
                }
            }
        }
        let back = -&t_end;
        for d in refinement_distances().filter(|d| *d < last_h) {
            if let Some((z, _)) = curve.correct(&x_end, &back, d) {
                if curve.min_active(&z) >= tol.zero && z[k] > 0.0 {
                    log_asymptotics(&curve, &z, &vanished, support);
                    points.push(curve.to_point(&z, s_end - d));
                }
            }
        }
        points.sort_by(|a, b| a.arclength.total_cmp(&b.arclength));
    }
    points.push(end_point.clone());

    Ok(Segment {
        support: support.clone(),
        signs: signs.to_vec(),
        points,
        start_event,
        end_event: Event { kind, location: end_point },
        interior_events: interior,
        orientation,
    })
}

fn log_asymptotics(curve: &Curve, z: &DVector<f64>, vanished: &[usize], support: &Support) {
    if !log::log_enabled!(log::Level::Debug) {
        return;
    }
    let k = curve.k();
    for &i in vanished {
        if let Some(a) = support.position(i) {
            // |β_i|^{1−p} / λ = u_i / λ approaches a constant.
            log::debug!("coordinate {} vanishing: u/lambda = {:.6e}", i + 1, z[a] / z[k]);
        }
    }
}

/// Detects sign changes of `dλ/ds` and `dc/ds` over the step `(x, x + h t)`
/// and inserts the located points.
fn locate_interior(
    curve: &Curve,
    x: &DVector<f64>,
    t: &DVector<f64>,
    h: f64,
    s: f64,
    points: &mut Vec<PathPoint>,
    interior: &mut Vec<Event>,
) -> Result<(), TraceError> {
    let k = curve.k();
    let Some((y, _)) = curve.correct(x, t, h) else { return Ok(()) };
    let ty = curve.tangent(&y, t)?;
    let probe = |hh: f64| -> Option<(DVector<f64>, DVector<f64>)> {
        let (z, _) = curve.correct(x, t, hh)?;
        let tz = curve.tangent(&z, t).ok()?;
        Some((z, tz))
    };
    let mut found: Vec<(f64, EventKind)> = Vec::new();
    if t[k] * ty[k] < 0.0 {
        let hz = crate::scalar::bisect(|hh| probe(hh).map_or(f64::NAN, |(_, tz)| tz[k]), 0.0, h);
        found.push((hz, EventKind::TurningPoint));
    }
    let (c0, c1) = (curve.c_rate(x, t), curve.c_rate(&y, &ty));
    if c0.is_finite() && c1.is_finite() && c0 * c1 < 0.0 {
        let hz = crate::scalar::bisect(|hh| probe(hh).map_or(f64::NAN, |(z, tz)| curve.c_rate(&z, &tz)), 0.0, h);
        found.push((hz, EventKind::ConstraintExtremum));
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (hz, kind) in found {
        if let Some((z, _)) = curve.correct(x, t, hz) {
            let pt = curve.to_point(&z, s + hz);
            points.push(pt.clone());
            interior.push(Event { kind, location: pt });
        }
    }
    Ok(())
}

/// Seeds a point next to a breakpoint (or the origin) with coordinate
/// `new_index` entering at `β_j = sign · ε` and corrects the rest onto the
/// critical curve with `β_j` held fixed.
///
/// Seeds `ε ∈ {1e-3, 1e-4, 1e-5} · max(1, ‖β*‖∞)` are tried in turn.
pub fn enter_coordinate(
    inst: &ProblemInstance,
    bp: &PathPoint,
    new_index: usize,
    sign: f64,
    settings: &TraceSettings,
) -> Result<PathPoint, TraceError> {
    ensure_traceable(inst)?;
    let tol = &settings.tolerances;
    let base = bp.beta_vector();
    let base_support = Support::of(&base, tol.zero);
    if base_support.contains(new_index) || new_index >= inst.n() {
        return Err(TraceError::InvalidStart(format!("coordinate {} cannot enter", new_index + 1)));
    }
    let support = base_support.with(new_index);
    let signs: Vec<f64> =
        support.indices().iter().map(|&i| if i == new_index { sign.signum() } else { base[i].signum() }).collect();
    let p = inst.p();
    let curve = Curve { inst, idx: support.indices().to_vec(), signs, q: 1.0 / (1.0 - p), settings };
    let k = support.len();
    let j = support.position(new_index).expect("entering index is in the support");
    let scale = inst.beta_star().amax().max(1.0);
    for eps in [1e-3, 1e-4, 1e-5] {
        let uj = (eps * scale).powf(1.0 - p);
        let mut x = DVector::zeros(k + 1);
        for (a, &i) in support.indices().iter().enumerate() {
            x[a] = base[i].abs().powf(1.0 - p);
        }
        x[j] = uj;
        let grad = inst.gradient(&curve.beta(&x));
        x[k] = -curve.signs[j] * uj * grad[new_index];
        // Newton with u_j fixed: unknowns are the other u and λ.
        let free: Vec<usize> = (0..=k).filter(|&a| a != j).collect();
        let mut ok = false;
        for _ in 0..settings.max_newton_iterations + 1 {
            let r = curve.residual(&x);
            if curve.residual_ok(&r, &x) {
                ok = true;
                break;
            }
            let jac = curve.jacobian(&x).select_columns(&free);
            let Some(d) = linalg::solve(&jac, &(-&r)) else { break };
            for (c, &a) in free.iter().enumerate() {
                x[a] += d[c];
            }
        }
        let signs_kept = (0..k).all(|a| x[a] > 0.0);
        if ok && signs_kept && x[k] > 0.0 {
            return Ok(curve.to_point(&x, bp.arclength));
        }
        log::debug!("seed {eps:e} for coordinate {} rejected", new_index + 1);
    }
    Err(TraceError::SeedFailed { index: new_index })
}

/// Result of comparing the limiting tangents of two segments at a shared point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    /// Angle between the limiting tangent lines, in radians.
    pub angle: f64,
    /// Largest limiting tangent component among coordinates whose membership
    /// in the support changes at the joint.
    pub new_component: f64,
    pub pass: bool,
}

const TANGENCY_POINTS: usize = 5;
pub const TANGENCY_TOLERANCE: f64 = 1e-3;

/// Unit chord directions from `anchor` to the nearest points, linearly
/// extrapolated to zero distance.
fn limiting_direction(anchor: &DVector<f64>, near: &[DVector<f64>]) -> Option<DVector<f64>> {
    let samples: Vec<(f64, DVector<f64>)> = near
        .iter()
        .filter_map(|b| {
            let d = b - anchor;
            let r = d.norm();
            (r > 0.0).then(|| (r, d / r))
        })
        .collect();
    match samples.len() {
        0 => None,
        1 => Some(samples[0].1.clone()),
        m => {
            let mean_r = samples.iter().map(|s| s.0).sum::<f64>() / m as f64;
            let dim = anchor.len();
            let mut mean_v = DVector::zeros(dim);
            for s in &samples {
                mean_v += &s.1;
            }
            mean_v /= m as f64;
            let var = samples.iter().map(|s| (s.0 - mean_r).powi(2)).sum::<f64>();
            if var == 0.0 {
                return Some(mean_v.normalize());
            }
            let mut slope = DVector::zeros(dim);
            for s in &samples {
                slope += (&s.1 - &mean_v) * (s.0 - mean_r);
            }
            slope /= var;
            let intercept = mean_v - slope * mean_r;
            Some(intercept.normalize())
        }
    }
}

/// Checks that `seg_a` ends where `seg_b` starts and that both curves share
/// a tangent line there, with the coordinate that changes membership
/// entering or leaving tangentially.
pub fn verify_tangential_connection(seg_a: &Segment, seg_b: &Segment) -> Result<TangencyReport, TraceError> {
    let end_a = seg_a.last().beta_vector();
    let start_b = seg_b.first().beta_vector();
    let gap = (&end_a - &start_b).amax();
    if gap > 1e-6 * (1.0 + end_a.amax()) {
        return Err(TraceError::NotConnected(gap));
    }
    let near_a: Vec<DVector<f64>> = seg_a.points[..seg_a.points.len() - 1]
        .iter()
        .rev()
        .take(TANGENCY_POINTS)
        .map(PathPoint::beta_vector)
        .collect();
    let near_b: Vec<DVector<f64>> =
        seg_b.points[1..].iter().take(TANGENCY_POINTS).map(PathPoint::beta_vector).collect();
    let (Some(ta), Some(tb)) = (limiting_direction(&end_a, &near_a), limiting_direction(&end_a, &near_b)) else {
        return Err(TraceError::NotConnected(f64::NAN));
    };
    let angle = ta.dot(&tb).abs().clamp(0.0, 1.0).acos();
    let n = end_a.len();
    let changed: Vec<usize> =
        (0..n).filter(|&i| seg_a.support.contains(i) != seg_b.support.contains(i)).collect();
    let new_component = changed.iter().map(|&i| ta[i].abs().max(tb[i].abs())).fold(0.0, f64::max);
    Ok(TangencyReport {
        angle,
        new_component,
        pass: angle < TANGENCY_TOLERANCE && new_component < TANGENCY_TOLERANCE,
    })
}

/// Start point for a segment beginning at `beta` with multiplier `lambda`.
pub fn start_point(inst: &ProblemInstance, beta: DVector<f64>, lambda: f64, arclength: f64, tol: &Tolerances) -> PathPoint {
    annotate(inst, beta, lambda, arclength, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critical::{criticality_residual, residual_threshold, Tag};
    use crate::scalar::lambda_bar;

    fn inst(json: &str) -> ProblemInstance {
        ProblemInstance::from_json_str(json).unwrap()
    }

    fn one_d() -> ProblemInstance {
        inst(r#"{"G": [[1]], "beta_star": [1], "p": 0.5}"#)
    }

    fn ex2() -> ProblemInstance {
        inst(r#"{"G": [[1,0],[0,1]], "beta_star": [2,1], "p": 0.5}"#)
    }

    fn settings() -> TraceSettings {
        TraceSettings::default()
    }

    #[test]
    fn one_dimensional_main_segment() {
        let i1 = one_d();
        let tol = Tolerances::default();
        let start = start_point(&i1, i1.ols_solution(), 0.0, 0.0, &tol);
        let seg = trace_segment(&i1, &start, &Support::full(1), &[1.0], Direction::IncreasingLambda, &settings())
            .unwrap();
        assert_eq!(seg.start_event.kind, EventKind::ReachedOls);
        assert_eq!(seg.end_event.kind, EventKind::ReachedOrigin);
        let tps: Vec<&Event> = seg.turning_points().collect();
        assert_eq!(tps.len(), 1);
        assert!((tps[0].location.lambda - lambda_bar(1.0, 0.5)).abs() < 1e-6);
        assert!(seg.points.len() >= 101, "{} points", seg.points.len());
        for w in seg.points.windows(2) {
            assert!(w[1].arclength >= w[0].arclength);
        }
        for pt in &seg.points {
            assert!(pt.lambda >= -1e-12);
            let b = pt.beta_vector();
            let r = criticality_residual(&i1, &b, pt.lambda, &tol).norm();
            assert!(r < residual_threshold(&i1, &b, &tol), "residual {r:e} at {:?}", pt.beta);
        }
        assert_eq!(seg.last().beta, vec![0.0]);
        assert_eq!(seg.first().class_q, Tag::LocalMin);
    }

    #[test]
    fn orthogonal_main_segment_drops_second_coordinate() {
        let e2 = ex2();
        let tol = Tolerances::default();
        let start = start_point(&e2, e2.ols_solution(), 0.0, 0.0, &tol);
        let seg =
            trace_segment(&e2, &start, &Support::full(2), &[1.0, 1.0], Direction::IncreasingLambda, &settings())
                .unwrap();
        assert_eq!(seg.end_event.kind, EventKind::ComponentVanishes { indices: Support::new(vec![1]) });
        assert_eq!(seg.last().beta, vec![2.0, 0.0]);
    }

    #[test]
    fn tangent_is_a_null_vector_and_predicts_to_second_order() {
        let e2 = ex2();
        let tol = Tolerances::default();
        let b = DVector::from_vec(vec![1.9, 0.7]);
        // λ from the first coordinate, then move β₂ onto the same λ.
        let lambda = (2.0 - 1.9) * 1.9f64.sqrt();
        let set = crate::scalar::scalar_critical_points(1.0, lambda, 0.5);
        let b = DVector::from_vec(vec![b[0], set.roots[1].value]);
        let t = tangent_direction(&e2, &b, lambda, None, &tol).unwrap();
        assert!((t.norm() - 1.0).abs() < 1e-12);
        let support = Support::full(2);
        let h_of = |bb: &DVector<f64>, l: f64| criticality_residual(&e2, bb, l, &tol);
        let mut errs = Vec::new();
        for hstep in [1e-2, 5e-3] {
            let bb = &b + support.scatter(&t.rows(0, 2).into_owned(), 2) * hstep;
            errs.push(h_of(&bb, lambda + hstep * t[2]).norm());
        }
        // Halving the step cuts the residual by about four.
        assert!(errs[0] / errs[1] > 3.0 && errs[0] / errs[1] < 5.0, "{errs:?}");
        // At β* the direction moves into positive λ.
        let t_star = tangent_direction(&e2, e2.beta_star(), 0.0, None, &tol).unwrap();
        assert!(t_star[2] > 0.0);
    }

    #[test]
    fn entry_seed_matches_scalar_relation() {
        let e2 = ex2();
        let tol = Tolerances::default();
        let origin = start_point(&e2, DVector::zeros(2), 0.0, 0.0, &tol);
        let pt = enter_coordinate(&e2, &origin, 0, 1.0, &settings()).unwrap();
        let b1 = pt.beta[0];
        assert!((b1 - 2e-3).abs() < 1e-15);
        assert!((pt.lambda - b1.sqrt() * (2.0 - b1)).abs() < 1e-12);
        let r = criticality_residual(&e2, &pt.beta_vector(), pt.lambda, &tol);
        assert!(r.amax() < 1e-10);
    }

    #[test]
    fn segment_is_tangent_to_itself() {
        let e2 = ex2();
        let tol = Tolerances::default();
        let start = start_point(&e2, DVector::from_vec(vec![2.0, 0.0]), 0.0, 0.0, &tol);
        let seg = trace_segment(&e2, &start, &Support::new(vec![0]), &[1.0], Direction::IncreasingLambda, &settings())
            .unwrap();
        let reversed = Segment { points: seg.points.iter().rev().cloned().collect(), ..seg.clone() };
        let rep = verify_tangential_connection(&reversed, &seg).unwrap();
        assert!(rep.angle < 1e-9 && rep.pass);
    }

    #[test]
    fn rank_deficient_instances_are_rejected() {
        let bad = inst(r#"{"X": [[1,1]], "y": [2], "p": 0.5}"#);
        let tol = Tolerances::default();
        let start = start_point(&bad, bad.ols_solution(), 0.0, 0.0, &tol);
        assert!(matches!(
            trace_segment(&bad, &start, &Support::full(2), &[1.0, 1.0], Direction::IncreasingLambda, &settings()),
            Err(TraceError::RankDeficient)
        ));
    }
}
