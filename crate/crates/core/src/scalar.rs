//! The separable scalar problem `½ (b − t)² + λ ψ_p(b)` and brute-force
//! global solvers for small dimensions.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critical::Tag;
use crate::linalg;
use crate::model::{psi, ProblemInstance, Support};
use crate::tolerances::Tolerances;

#[derive(Debug, Error)]
pub enum ScalarError {
    #[error("instance Gram matrix is not the identity")]
    NotOrthogonal,
    #[error("grid oracles support at most {max} dimensions, got {n}")]
    TooManyDimensions { n: usize, max: usize },
}

/// Per-coordinate branch label: `A` local-min root, `B` local-max root, `C` zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    A,
    B,
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarRoot {
    pub value: f64,
    pub branch: Branch,
    /// Local-max, local-min, or degenerate for the double root.
    pub tag: Tag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarCriticalSet {
    pub beta_target: f64,
    pub lambda: f64,
    pub p: f64,
    /// Nonzero roots on the side of `beta_target`, sorted by magnitude.
    pub roots: Vec<ScalarRoot>,
    /// Zero is always critical; for `λ > 0` it is a local minimum.
    pub zero_is_local_min: bool,
}

impl ScalarCriticalSet {
    pub fn root(&self, branch: Branch) -> Option<f64> {
        match branch {
            Branch::C => Some(0.0),
            _ => self.roots.iter().find(|r| r.branch == branch).map(|r| r.value),
        }
    }
}

/// `½ (b − t)² + λ ψ_p(b)`.
pub fn scalar_objective(b: f64, t: f64, lambda: f64, p: f64) -> f64 {
    0.5 * (b - t) * (b - t) + lambda * psi(p, b)
}

/// Derivative of the scalar objective for `b > 0` after reflecting to `t > 0`.
fn h(b: f64, a: f64, lambda: f64, p: f64) -> f64 {
    b - a + lambda * b.powf(p - 1.0)
}

/// Bisection on a bracket with `f(lo)` and `f(hi)` of opposite sign, run to
/// floating-point resolution.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let lo_positive = f(lo) > 0.0;
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if f(lo).abs() <= f(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Stationary point `((1 − p) λ)^{1/(2−p)}` of the scalar derivative.
pub fn inflection_point(lambda: f64, p: f64) -> f64 {
    ((1.0 - p) * lambda).powf(1.0 / (2.0 - p))
}

/// Nonzero critical points of the scalar objective.
pub fn scalar_critical_points(beta_target: f64, lambda: f64, p: f64) -> ScalarCriticalSet {
    let mut set = ScalarCriticalSet {
        beta_target,
        lambda,
        p,
        roots: Vec::new(),
        zero_is_local_min: lambda > 0.0,
    };
    if beta_target == 0.0 {
        return set;
    }
    let s = beta_target.signum();
    let a = beta_target.abs();
    if lambda == 0.0 {
        set.roots.push(ScalarRoot { value: beta_target, branch: Branch::A, tag: Tag::LocalMin });
        return set;
    }
    let infl = inflection_point(lambda, p);
    if infl >= a {
        return set;
    }
    let h_min = h(infl, a, lambda, p);
    if h_min > 0.0 {
        return set;
    }
    if h_min == 0.0 {
        set.roots.push(ScalarRoot { value: s * infl, branch: Branch::A, tag: Tag::Degenerate });
        return set;
    }
    let f = |b: f64| h(b, a, lambda, p);
    // h → +∞ as b → 0⁺; start from a point where it is already positive.
    let mut lo = infl;
    while f(lo) <= 0.0 {
        lo *= 0.5;
    }
    let small = bisect(f, lo, infl);
    let large = bisect(f, infl, a);
    set.roots.push(ScalarRoot { value: s * small, branch: Branch::B, tag: Tag::LocalMax });
    set.roots.push(ScalarRoot { value: s * large, branch: Branch::A, tag: Tag::LocalMin });
    set
}

/// Largest `λ` with two nonzero scalar roots:
/// `(1 − p)^{1−p} (|t| / (2 − p))^{2−p}`.
pub fn lambda_bar(beta_target: f64, p: f64) -> f64 {
    (1.0 - p).powf(1.0 - p) * (beta_target.abs() / (2.0 - p)).powf(2.0 - p)
}

/// Location of the double root at [`lambda_bar`]: `t (1 − p) / (2 − p)`.
pub fn beta_bar(beta_target: f64, p: f64) -> f64 {
    beta_target * (1.0 - p) / (2.0 - p)
}

/// The `λ` at which the nonzero local minimum ties with zero, and that minimum.
///
/// Returns `(λ_gl, β_gl)`.
pub fn lambda_global_jump(beta_target: f64, p: f64) -> (f64, f64) {
    if beta_target == 0.0 {
        return (0.0, 0.0);
    }
    let gap = |lambda: f64| {
        let set = scalar_critical_points(beta_target, lambda, p);
        let b = set.root(Branch::A).unwrap_or_else(|| beta_bar(beta_target, p));
        scalar_objective(b, beta_target, lambda, p) - scalar_objective(0.0, beta_target, lambda, p)
    };
    let lbar = lambda_bar(beta_target, p);
    let lambda = bisect(gap, 0.0, lbar);
    let beta = scalar_critical_points(beta_target, lambda, p)
        .root(Branch::A)
        .unwrap_or_else(|| beta_bar(beta_target, p));
    (lambda, beta)
}

/// A critical point of an orthogonal instance with its per-coordinate branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalPoint {
    pub beta: Vec<f64>,
    pub branches: Vec<Branch>,
}

/// All critical points of `f_λ` when `G = I`: the product of per-coordinate
/// branch choices, in lexicographic order of branches (C, B, A per axis).
pub fn enumerate_orthogonal_critical_points(
    inst: &ProblemInstance,
    lambda: f64,
    tol: &Tolerances,
) -> Result<Vec<OrthogonalPoint>, ScalarError> {
    if !inst.is_identity_gram(tol.zero) {
        return Err(ScalarError::NotOrthogonal);
    }
    let per_axis: Vec<Vec<(f64, Branch)>> = inst
        .beta_star()
        .iter()
        .map(|&t| {
            let set = scalar_critical_points(t, lambda, inst.p());
            let mut opts = vec![(0.0, Branch::C)];
            if lambda == 0.0 {
                // Only the unpenalized root is critical; zero is not, unless t = 0.
                opts.clear();
                opts.push((t, if t == 0.0 { Branch::C } else { Branch::A }));
                return opts;
            }
            opts.extend(set.roots.iter().map(|r| (r.value, r.branch)));
            opts
        })
        .collect();
    let mut out = vec![OrthogonalPoint { beta: Vec::new(), branches: Vec::new() }];
    for opts in &per_axis {
        out = out
            .into_iter()
            .flat_map(|pt| {
                opts.iter().map(move |&(v, b)| {
                    let mut next = pt.clone();
                    next.beta.push(v);
                    next.branches.push(b);
                    next
                })
            })
            .collect();
    }
    Ok(out)
}

/// Resolution of the brute-force oracles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Points per axis of the box grid (odd so that zero is a node).
    pub points_per_axis: usize,
    /// Zoom rounds around each sign pattern's incumbent.
    pub refinement_rounds: usize,
    /// Half-width of the box; defaults to `1.5 ‖β*‖∞`.
    pub half_width: Option<f64>,
    /// Cap on the total number of box grid points; the per-axis count is
    /// reduced to fit.
    pub max_grid_points: usize,
    /// Relative objective tolerance for reporting ties.
    pub tie_tolerance: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_axis: 401,
            refinement_rounds: 2,
            half_width: None,
            max_grid_points: 20_000_000,
            tie_tolerance: 1e-9,
        }
    }
}

pub const MAX_ORACLE_DIM: usize = 4;

/// Global minimizer(s) found by a grid oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSolution {
    pub beta: Vec<f64>,
    pub value: f64,
    /// All minimizers within the tie tolerance, including `beta`.
    pub ties: Vec<Vec<f64>>,
}

impl GlobalSolution {
    pub fn beta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.beta)
    }
}

/// A sign pattern: `0` zero, `1` positive, `2` negative per coordinate.
type Pattern = Vec<u8>;

fn pattern_id(pattern: &[u8]) -> usize {
    pattern.iter().rev().fold(0, |acc, &d| acc * 3 + d as usize)
}

fn pattern_of(id: usize, n: usize) -> Pattern {
    let mut id = id;
    (0..n)
        .map(|_| {
            let d = (id % 3) as u8;
            id /= 3;
            d
        })
        .collect()
}

fn pattern_sign(d: u8) -> f64 {
    match d {
        1 => 1.0,
        2 => -1.0,
        _ => 0.0,
    }
}

fn pattern_support(pattern: &[u8]) -> Support {
    Support::new((0..pattern.len()).filter(|&i| pattern[i] != 0).collect())
}

fn half_width(inst: &ProblemInstance, grid: &GridSpec) -> f64 {
    grid.half_width.unwrap_or_else(|| 1.5 * inst.beta_star().amax()).max(1e-12)
}

fn axis_count(grid: &GridSpec, n: usize) -> usize {
    let mut m = grid.points_per_axis.max(3) | 1;
    while m > 3 && (m as f64).powi(n as i32) > grid.max_grid_points as f64 {
        m -= 2;
    }
    m
}

fn check_dim(inst: &ProblemInstance) -> Result<(), ScalarError> {
    if inst.n() > MAX_ORACLE_DIM {
        return Err(ScalarError::TooManyDimensions { n: inst.n(), max: MAX_ORACLE_DIM });
    }
    Ok(())
}

/// Keeps the lowest value per key; ties on value go to the lower grid index.
fn better(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => {
            if a.1 <= b.1 {
                a
            } else {
                b
            }
        }
    }
}

struct Candidate {
    beta: DVector<f64>,
    value: f64,
}

fn collect_ties(mut cands: Vec<Candidate>, grid: &GridSpec) -> GlobalSolution {
    cands.retain(|c| c.value.is_finite());
    cands.sort_by(|a, b| a.value.total_cmp(&b.value));
    let best = cands[0].value;
    let cutoff = best + grid.tie_tolerance * (1.0 + best.abs());
    let mut ties: Vec<DVector<f64>> = Vec::new();
    for c in cands.iter().take_while(|c| c.value <= cutoff) {
        if ties.iter().all(|t| (t - &c.beta).amax() > 1e-6) {
            ties.push(c.beta.clone());
        }
    }
    GlobalSolution {
        beta: ties[0].iter().copied().collect(),
        value: best,
        ties: ties.iter().map(|t| t.iter().copied().collect()).collect(),
    }
}

/// Global minimizer of `f_λ` over the box `[−w, w]^n`.
///
/// A box grid containing zero locates the best node of every sign pattern;
/// each is zoomed and then polished by a damped Newton method inside its
/// orthant.
pub fn brute_force_global_q(
    inst: &ProblemInstance,
    lambda: f64,
    grid: &GridSpec,
) -> Result<GlobalSolution, ScalarError> {
    check_dim(inst)?;
    let n = inst.n();
    let w = half_width(inst, grid);
    let m = axis_count(grid, n);
    let half = (m - 1) / 2;
    let spacing = w / half as f64;
    let total = m.pow(n as u32);
    let npat = 3usize.pow(n as u32);
    let node = |k: usize| (k as f64 - half as f64) * spacing;

    let chunk = 4096;
    let best_per_pattern = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut best = vec![(f64::INFINITY, usize::MAX); npat];
            let mut beta = DVector::zeros(n);
            let mut pat = vec![0u8; n];
            for idx in c * chunk..((c + 1) * chunk).min(total) {
                let mut r = idx;
                for i in 0..n {
                    let k = r % m;
                    r /= m;
                    beta[i] = node(k);
                    pat[i] = match k.cmp(&half) {
                        std::cmp::Ordering::Equal => 0,
                        std::cmp::Ordering::Greater => 1,
                        std::cmp::Ordering::Less => 2,
                    };
                }
                let v = inst.f_lambda(&beta, lambda);
                let id = pattern_id(&pat);
                best[id] = better(best[id], (v, idx));
            }
            best
        })
        .reduce(
            || vec![(f64::INFINITY, usize::MAX); npat],
            |a, b| a.into_iter().zip(b).map(|(x, y)| better(x, y)).collect(),
        );

    let decode = |idx: usize| {
        let mut r = idx;
        DVector::from_fn(n, |_, _| {
            let k = r % m;
            r /= m;
            node(k)
        })
    };
    let cands: Vec<Candidate> = best_per_pattern
        .par_iter()
        .enumerate()
        .filter(|(_, b)| b.1 != usize::MAX)
        .map(|(id, &(_, idx))| {
            let pattern = pattern_of(id, n);
            let start = decode(idx);
            let zoomed = zoom_q(inst, lambda, &pattern, start, spacing, grid.refinement_rounds);
            let polished = polish_q(inst, lambda, &pattern, zoomed);
            Candidate { value: inst.f_lambda(&polished, lambda), beta: polished }
        })
        .collect();
    Ok(collect_ties(cands, grid))
}

const ZOOM_POINTS: usize = 21;

fn zoom_q(
    inst: &ProblemInstance,
    lambda: f64,
    pattern: &[u8],
    start: DVector<f64>,
    spacing: f64,
    rounds: usize,
) -> DVector<f64> {
    let support = pattern_support(pattern);
    let k = support.len();
    if k == 0 {
        return start;
    }
    let mut best = start;
    let mut best_val = inst.f_lambda(&best, lambda);
    let mut radius = spacing;
    for _ in 0..rounds {
        let centre = best.clone();
        let total = ZOOM_POINTS.pow(k as u32);
        for idx in 0..total {
            let mut r = idx;
            let mut b = centre.clone();
            let mut inside = true;
            for &i in support.indices() {
                let j = r % ZOOM_POINTS;
                r /= ZOOM_POINTS;
                let off = radius * (2.0 * j as f64 / (ZOOM_POINTS - 1) as f64 - 1.0);
                b[i] = centre[i] + off;
                if b[i] * pattern_sign(pattern[i]) <= 0.0 {
                    inside = false;
                    break;
                }
            }
            if !inside {
                continue;
            }
            let v = inst.f_lambda(&b, lambda);
            if v < best_val {
                best_val = v;
                best = b;
            }
        }
        radius *= 2.0 / (ZOOM_POINTS - 1) as f64;
    }
    best
}

/// Damped, shifted Newton on `f_λ` restricted to one orthant face.
fn polish_q(inst: &ProblemInstance, lambda: f64, pattern: &[u8], start: DVector<f64>) -> DVector<f64> {
    let support = pattern_support(pattern);
    if support.is_empty() {
        return start;
    }
    let mut x = start;
    let mut fx = inst.f_lambda(&x, lambda);
    for _ in 0..200 {
        let mut g = inst.grad_phi(&x, &support);
        for (a, &i) in support.indices().iter().enumerate() {
            g[a] += lambda * x[i].signum() * x[i].abs().powf(inst.p() - 1.0);
        }
        if g.amax() < 1e-15 * (1.0 + fx.abs()) {
            break;
        }
        let Ok(mut k) = inst.hessian_k(&x, lambda, &support) else { break };
        let lo = linalg::symmetric_eigenvalues(&k)[0];
        let scale = k.amax().max(1.0);
        if lo < 1e-10 * scale {
            let shift = -lo + 1e-6 * scale;
            for a in 0..support.len() {
                k[(a, a)] += shift;
            }
        }
        let Some(d) = linalg::solve_spd(&k, &(-&g)) else { break };
        // Stay strictly inside the orthant.
        let mut t: f64 = 1.0;
        for (a, &i) in support.indices().iter().enumerate() {
            if d[a] * x[i] < 0.0 {
                t = t.min(0.9 * x[i].abs() / d[a].abs());
            }
        }
        let slope = g.dot(&d);
        let mut accepted = false;
        while t > 1e-16 {
            let trial = &x + support.scatter(&(&d * t), inst.n());
            let ft = inst.f_lambda(&trial, lambda);
            if ft <= fx + 1e-4 * t * slope {
                accepted = ft < fx || (trial.clone() - &x).amax() > 0.0;
                x = trial;
                fx = ft;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    x
}

/// Points of the face `pattern` on the contour `F_p = c`, indexed by weights
/// `w` on the simplex: `|β_i| = (p c w_i)^{1/p}`.
fn contour_point(pattern: &[u8], support: &Support, weights: &[f64], c: f64, p: f64) -> DVector<f64> {
    let mut b = DVector::zeros(pattern.len());
    for (a, &i) in support.indices().iter().enumerate() {
        b[i] = pattern_sign(pattern[i]) * (p * c * weights[a]).powf(1.0 / p);
    }
    b
}

/// Global minimizer of `φ` over `{F_p(β) ≤ c}`.
///
/// Every sign pattern contributes its restricted least-squares point when
/// feasible, and otherwise the best point of a simplex grid on the contour
/// `F_p = c`, zoomed and then polished by Newton's method on the KKT system.
pub fn brute_force_global_p(
    inst: &ProblemInstance,
    c: f64,
    grid: &GridSpec,
) -> Result<GlobalSolution, ScalarError> {
    check_dim(inst)?;
    let n = inst.n();
    let origin = DVector::zeros(n);
    if c <= 0.0 {
        let value = inst.phi(&origin);
        return Ok(GlobalSolution { beta: vec![0.0; n], value, ties: vec![vec![0.0; n]] });
    }
    let p = inst.p();
    let gbs = inst.gram() * inst.beta_star();
    let cands: Vec<Candidate> = (0..3usize.pow(n as u32))
        .into_par_iter()
        .map(|id| {
            let pattern = pattern_of(id, n);
            let support = pattern_support(&pattern);
            if support.is_empty() {
                return Candidate { value: inst.phi(&origin), beta: origin.clone() };
            }
            let k = support.len();
            let idx = support.indices();
            let block = inst.gram().select_rows(idx).select_columns(idx);
            if let Some(sol) = linalg::solve_spd(&block, &support.gather(&gbs)) {
                let b = support.scatter(&sol, n);
                let signs_ok = idx.iter().all(|&i| b[i] * pattern_sign(pattern[i]) > 0.0);
                if signs_ok && inst.penalty(&b) <= c {
                    return Candidate { value: inst.phi(&b), beta: b };
                }
            }
            if k == 1 {
                let b = contour_point(&pattern, &support, &[1.0], c, p);
                return Candidate { value: inst.phi(&b), beta: b };
            }
            let start = simplex_search(inst, &pattern, &support, c, grid);
            let polished = polish_p(inst, &support, c, start);
            Candidate { value: inst.phi(&polished), beta: polished }
        })
        .collect();
    Ok(collect_ties(cands, grid))
}

fn simplex_search(
    inst: &ProblemInstance,
    pattern: &[u8],
    support: &Support,
    c: f64,
    grid: &GridSpec,
) -> DVector<f64> {
    let k = support.len();
    let p = inst.p();
    // Free weights w_1..w_{k-1}; the last is 1 − Σ.
    let mut m = grid.points_per_axis.max(3);
    while m > 3 && (m as f64).powi(k as i32 - 1) > 2e5 {
        m = (m - 1) / 2 + 1;
    }
    let mut lo = vec![0.0; k - 1];
    let mut width = 1.0;
    let mut best_w: Option<Vec<f64>> = None;
    let mut best_val = f64::INFINITY;
    for _ in 0..=grid.refinement_rounds {
        let step = width / (m - 1) as f64;
        let total = m.pow(k as u32 - 1);
        for idx in 0..total {
            let mut r = idx;
            let mut w = Vec::with_capacity(k);
            for a in 0..k - 1 {
                w.push(lo[a] + step * (r % m) as f64);
                r /= m;
            }
            let rest = 1.0 - w.iter().sum::<f64>();
            if rest <= 0.0 || w.iter().any(|&x| x <= 0.0) {
                continue;
            }
            w.push(rest);
            let v = inst.phi(&contour_point(pattern, support, &w, c, p));
            if v < best_val {
                best_val = v;
                best_w = Some(w);
            }
        }
        let Some(w) = &best_w else { break };
        for a in 0..k - 1 {
            lo[a] = (w[a] - step).max(0.0);
        }
        width = 2.0 * step;
    }
    let w = best_w.unwrap_or_else(|| vec![1.0 / k as f64; k]);
    contour_point(pattern, support, &w, c, p)
}

/// Newton's method on `∇_I φ + μ ∇_I F_p = 0`, `F_p = c`; kept only when it
/// stays in the orthant, lands on the contour and does not increase `φ`.
fn polish_p(inst: &ProblemInstance, support: &Support, c: f64, start: DVector<f64>) -> DVector<f64> {
    let k = support.len();
    let n = inst.n();
    let idx = support.indices();
    let p = inst.p();
    let Ok(gf0) = inst.grad_penalty(&start, support) else { return start };
    let gp0 = inst.grad_phi(&start, support);
    let mut mu = -gp0.dot(&gf0) / gf0.norm_squared();
    let mut x = start.clone();
    let mut converged = false;
    for _ in 0..60 {
        let Ok(gf) = inst.grad_penalty(&x, support) else { break };
        let gp = inst.grad_phi(&x, support);
        let mut r = DVector::zeros(k + 1);
        r.rows_mut(0, k).copy_from(&(&gp + &gf * mu));
        r[k] = inst.penalty(&x) - c;
        if r.amax() < 1e-14 * (1.0 + gp.amax() + c) {
            converged = true;
            break;
        }
        let Ok(kk) = inst.hessian_k(&x, mu, support) else { break };
        let mut j = DMatrix::zeros(k + 1, k + 1);
        j.view_mut((0, 0), (k, k)).copy_from(&kk);
        j.view_mut((0, k), (k, 1)).copy_from(&gf);
        j.view_mut((k, 0), (1, k)).copy_from(&gf.transpose());
        let Some(d) = linalg::solve(&j, &(-&r)) else { break };
        let mut t: f64 = 1.0;
        for (a, &i) in idx.iter().enumerate() {
            if d[a] * x[i] < 0.0 {
                t = t.min(0.5 * x[i].abs() / d[a].abs());
            }
        }
        x += support.scatter(&d.rows(0, k).into_owned(), n) * t;
        mu += t * d[k];
    }
    if !converged || mu < -1e-10 {
        return start;
    }
    // Land exactly on the contour.
    let f = inst.penalty(&x);
    x *= (c / f).powf(1.0 / p);
    if inst.phi(&x) <= inst.phi(&start) + 1e-14 * (1.0 + inst.phi(&start).abs()) {
        x
    } else {
        start
    }
}
