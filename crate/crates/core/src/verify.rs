//! Structural checks over the bundled fixtures.
//!
//! Each check has a stable id (see [`CHECK_IDS`]) and produces a
//! [`CheckResult`]; [`run`] collects them into a [`Report`]. Numerical
//! failures inside a check make that check fail rather than aborting the run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path as FsPath;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use crate::critical::{self, classify_q, implied_lambda, ImpliedLambda, Tag};
use crate::model::{ModelError, ProblemInstance, Support};
use crate::scalar::{self, brute_force_global_p, brute_force_global_q, Branch, GridSpec};
use crate::strategies::{self, check_omp_coincidence, greedy_path, main_path, omp, Path};
use crate::tracer::{EventKind, Segment, TraceSettings};

pub const FIXTURE_NAMES: [&str; 6] = ["ex1d", "ex2", "ex3d", "ex5d", "exA1", "exA2"];

const BUNDLED: [(&str, &str); 6] = [
    ("ex1d", include_str!("../fixtures/ex1d.json")),
    ("ex2", include_str!("../fixtures/ex2.json")),
    ("ex3d", include_str!("../fixtures/ex3d.json")),
    ("ex5d", include_str!("../fixtures/ex5d.json")),
    ("exA1", include_str!("../fixtures/exA1.json")),
    ("exA2", include_str!("../fixtures/exA2.json")),
];

pub const CHECK_IDS: [&str; 19] = [
    "lambda-bar",
    "main-path-1d",
    "global-jump-1d",
    "greedy-2d",
    "omp-2d",
    "enumerate-2d",
    "greedy-3d-modified",
    "greedy-3d-unmodified",
    "greedy-5d",
    "p07-c-nonmonotone",
    "p07-global-p-jump",
    "p07-classification",
    "proper-subset",
    "continuity",
    "residuals",
    "breakpoints",
    "tangency",
    "turning-points",
    "derivatives",
];

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("fixture {name} not found at {path}")]
    MissingFixture { name: String, path: String },
    #[error("fixture {name}: {source}")]
    Fixture {
        name: String,
        #[source]
        source: ModelError,
    },
    #[error("unknown check id {0:?}")]
    UnknownCheck(String),
}

/// The six named instances the checks run on.
#[derive(Debug, Clone)]
pub struct FixtureSet {
    instances: BTreeMap<&'static str, ProblemInstance>,
}

impl FixtureSet {
    pub fn bundled() -> Self {
        let instances = BUNDLED
            .iter()
            .map(|(name, text)| (*name, ProblemInstance::from_json_str(text).expect("bundled fixture is valid")))
            .collect();
        FixtureSet { instances }
    }

    /// Reads `<dir>/<name>.json` for every fixture name.
    pub fn from_dir(dir: &FsPath) -> Result<Self, VerifyError> {
        let mut instances = BTreeMap::new();
        for name in FIXTURE_NAMES {
            let path = dir.join(format!("{name}.json"));
            if !path.is_file() {
                return Err(VerifyError::MissingFixture { name: name.into(), path: path.display().to_string() });
            }
            let inst = crate::model::load_instance(&path)
                .map_err(|source| VerifyError::Fixture { name: name.into(), source })?;
            instances.insert(name, inst);
        }
        Ok(FixtureSet { instances })
    }

    pub fn get(&self, name: &str) -> &ProblemInstance {
        &self.instances[name]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Outcome of one check: pass flag plus a human-readable account.
struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new() -> Self {
        Outcome { passed: true, detail: String::new() }
    }

    /// Records a condition; the check fails if any condition is false.
    fn require(&mut self, ok: bool, what: impl AsRef<str>) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(if ok { "ok " } else { "FAILED " });
        self.detail.push_str(what.as_ref());
        self.passed &= ok;
    }

    fn fail(msg: impl Into<String>) -> Self {
        Outcome { passed: false, detail: msg.into() }
    }
}

/// Paths traced once per fixture and shared by the checks.
struct Traced {
    main: Result<Path, String>,
    greedy: Result<Path, String>,
    modified: Result<Path, String>,
}

struct Context<'a> {
    fixtures: &'a FixtureSet,
    settings: &'a TraceSettings,
    grid: GridSpec,
    traced: BTreeMap<&'static str, Traced>,
}

impl Context<'_> {
    fn inst(&self, name: &str) -> &ProblemInstance {
        self.fixtures.get(name)
    }

    fn traced(&mut self, name: &'static str) -> &Traced {
        let inst = self.fixtures.get(name);
        let settings = self.settings;
        self.traced.entry(name).or_insert_with(|| Traced {
            main: main_path(inst, settings).map_err(|e| e.to_string()),
            greedy: greedy_path(inst, false, settings).map_err(|e| e.to_string()),
            modified: greedy_path(inst, true, settings).map_err(|e| e.to_string()),
        })
    }

    fn all_paths(&mut self) -> Vec<(String, Result<Path, String>)> {
        let mut out = Vec::new();
        for name in FIXTURE_NAMES {
            let t = self.traced(name);
            out.push((format!("{name}/main"), t.main.clone()));
            out.push((format!("{name}/greedy"), t.greedy.clone()));
            out.push((format!("{name}/greedy-modified"), t.modified.clone()));
        }
        out
    }
}

/// Runs the selected checks (all when `only` is `None`) in [`CHECK_IDS`] order.
pub fn run(fixtures: &FixtureSet, only: Option<&[String]>, settings: &TraceSettings) -> Result<Report, VerifyError> {
    if let Some(ids) = only {
        if let Some(bad) = ids.iter().find(|id| !CHECK_IDS.contains(&id.as_str())) {
            return Err(VerifyError::UnknownCheck(bad.clone()));
        }
    }
    let mut ctx = Context { fixtures, settings, grid: GridSpec::default(), traced: BTreeMap::new() };
    let mut checks = Vec::new();
    for id in CHECK_IDS {
        if only.is_some_and(|ids| !ids.iter().any(|s| s == id)) {
            continue;
        }
        let t = Instant::now();
        let out = dispatch(&mut ctx, id);
        let seconds = t.elapsed().as_secs_f64();
        log::info!("check {id}: {} in {seconds:.3}s", if out.passed { "pass" } else { "FAIL" });
        checks.push(CheckResult { id: id.to_string(), passed: out.passed, detail: out.detail, seconds });
    }
    Ok(Report { passed: checks.iter().all(|c| c.passed), checks })
}

fn dispatch(ctx: &mut Context, id: &str) -> Outcome {
    match id {
        "lambda-bar" => check_lambda_bar(),
        "main-path-1d" => check_main_path_1d(ctx),
        "global-jump-1d" => check_global_jump_1d(ctx),
        "greedy-2d" => check_greedy_2d(ctx),
        "omp-2d" => check_omp_2d(ctx),
        "enumerate-2d" => check_enumerate_2d(ctx),
        "greedy-3d-modified" => check_greedy_3d_modified(ctx),
        "greedy-3d-unmodified" => check_greedy_3d_unmodified(ctx),
        "greedy-5d" => check_greedy_5d(ctx),
        "p07-c-nonmonotone" => check_p07_c(ctx),
        "p07-global-p-jump" => check_p07_jump(ctx),
        "p07-classification" => check_p07_classification(ctx),
        "proper-subset" => check_proper_subset(ctx),
        "continuity" => check_continuity(ctx),
        "residuals" => check_residuals(ctx),
        "breakpoints" => check_breakpoints(ctx),
        "tangency" => check_tangency(ctx),
        "turning-points" => check_turning_points(ctx),
        "derivatives" => check_derivatives(ctx),
        _ => unreachable!("ids are validated before dispatch"),
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(if a.len() == b.len() { 0.0 } else { f64::INFINITY }, f64::max)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check_lambda_bar() -> Outcome {
    let mut o = Outcome::new();
    let lb = scalar::lambda_bar(1.0, 0.5);
    let expected = 2.0 * (1.0f64 / 3.0).powf(1.5);
    o.require((lb - expected).abs() < 1e-10, format!("lambda_bar(1, 0.5) = {lb:.12} vs {expected:.12}"));
    // Two roots just below, none just above.
    let below = scalar::scalar_critical_points(1.0, lb * (1.0 - 1e-6), 0.5).roots.len();
    let above = scalar::scalar_critical_points(1.0, lb * (1.0 + 1e-6), 0.5).roots.len();
    o.require(below == 2 && above == 0, format!("root count {below} below, {above} above"));
    let bb = scalar::beta_bar(1.0, 0.5);
    o.require((bb - 1.0 / 3.0).abs() < 1e-15, format!("beta_bar = {bb}"));
    o
}

fn check_main_path_1d(ctx: &mut Context) -> Outcome {
    let path = match &ctx.traced("ex1d").main {
        Ok(p) => p.clone(),
        Err(e) => return Outcome::fail(e.clone()),
    };
    let mut o = Outcome::new();
    o.require(path.segments.len() == 1, format!("{} segment(s)", path.segments.len()));
    o.require(path.breakpoints.is_empty(), format!("{} interior breakpoint(s)", path.breakpoints.len()));
    let pts = path.points();
    let (first, last) = (pts[0].beta[0], pts[pts.len() - 1].beta[0]);
    o.require(first == 1.0 && last == 0.0, format!("covers [{last}, {first}]"));
    o.require(pts.len() >= 101, format!("{} samples", pts.len()));
    let lb = scalar::lambda_bar(1.0, 0.5);
    let turns: Vec<f64> = path.segments.iter().flat_map(|s| s.turning_points()).map(|e| e.location.lambda).collect();
    o.require(
        turns.len() == 1 && (turns[0] - lb).abs() < 1e-6,
        format!("turning point lambda {turns:?} vs lambda_bar {lb:.9}"),
    );
    o
}

fn check_global_jump_1d(ctx: &mut Context) -> Outcome {
    let inst = ctx.inst("ex1d").clone();
    let mut o = Outcome::new();
    let (lgl, bgl) = scalar::lambda_global_jump(1.0, 0.5);
    o.require(lgl > 0.2 && lgl < 0.3, format!("lambda_gl = {lgl:.9} in (0.2, 0.3)"));
    let f0 = scalar::scalar_objective(0.0, 1.0, lgl, 0.5);
    let fb = scalar::scalar_objective(bgl, 1.0, lgl, 0.5);
    o.require((f0 - fb).abs() < 1e-9, format!("f(0) − f(beta_gl) = {:.2e}", f0 - fb));
    let expected_b = 2.0 * 1.0 * (1.0 - 0.5) / (2.0 - 0.5);
    o.require((bgl - expected_b).abs() < 1e-9, format!("beta_gl = {bgl:.9} vs 2t(1−p)/(2−p)"));
    let left = brute_force_global_q(&inst, lgl * (1.0 - 1e-4), &ctx.grid);
    let right = brute_force_global_q(&inst, lgl * (1.0 + 1e-4), &ctx.grid);
    match (left, right) {
        (Ok(l), Ok(r)) => {
            let jump = (l.beta[0] - r.beta[0]).abs();
            o.require(jump >= bgl / 2.0, format!("oracle jump {jump:.6} across lambda_gl (need ≥ {:.6})", bgl / 2.0));
        }
        (Err(e), _) | (_, Err(e)) => o.require(false, e.to_string()),
    }
    o
}

fn check_greedy_2d(ctx: &mut Context) -> Outcome {
    let path = match &ctx.traced("ex2").greedy {
        Ok(p) => p.clone(),
        Err(e) => return Outcome::fail(e.clone()),
    };
    let mut o = Outcome::new();
    let bps: Vec<Vec<f64>> = path.breakpoints.iter().map(|b| b.beta.clone()).collect();
    o.require(bps.len() == 1 && dist(&bps[0], &[2.0, 0.0]) < 1e-6, format!("breakpoints {bps:?}"));
    o.require(
        path.terminal.kind == EventKind::ReachedOls && dist(&path.endpoint().beta, &[2.0, 1.0]) < 1e-6,
        format!("terminal {:?} at {}", path.terminal.kind, fmt_vec(&path.endpoint().beta)),
    );
    o
}

fn check_omp_2d(ctx: &mut Context) -> Outcome {
    let tol = ctx.settings.tolerances;
    let inst = ctx.inst("ex2").clone();
    let path = match &ctx.traced("ex2").greedy {
        Ok(p) => p.clone(),
        Err(e) => return Outcome::fail(e.clone()),
    };
    let mut o = Outcome::new();
    let steps = match omp(&inst, false, &tol) {
        Ok(s) => s,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let betas: Vec<Vec<f64>> = steps.steps.iter().map(|s| s.beta.clone()).collect();
    o.require(betas == vec![vec![2.0, 0.0], vec![2.0, 1.0]], format!("omp steps {betas:?}"));
    match check_omp_coincidence(&inst, &path, &steps, &tol) {
        Ok(r) => {
            o.require(r.coincide, format!("coincidence (max deviation {:.2e})", r.max_deviation));
            o.require(r.max_breakpoint_lambda < 1e-6, format!("breakpoint lambda {:.2e}", r.max_breakpoint_lambda));
        }
        Err(e) => o.require(false, e.to_string()),
    }
    let mut permuted = steps.clone();
    permuted.steps.reverse();
    let negative = check_omp_coincidence(&inst, &path, &permuted, &tol).map(|r| r.coincide).unwrap_or(false);
    o.require(!negative, "permuted steps rejected");
    o
}

/// Expected Q class of an orthogonal critical point from its branches: a
/// local max only when every coordinate is on the B branch.
fn expected_orthogonal_tag(branches: &[Branch]) -> Tag {
    if branches.iter().all(|b| *b == Branch::B) {
        Tag::LocalMax
    } else if branches.contains(&Branch::B) {
        Tag::Saddle
    } else {
        Tag::LocalMin
    }
}

fn check_enumerate_2d(ctx: &mut Context) -> Outcome {
    let tol = ctx.settings.tolerances;
    let inst = ctx.inst("ex2");
    let lambda = 0.1;
    let pts = match scalar::enumerate_orthogonal_critical_points(inst, lambda, &tol) {
        Ok(p) => p,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let mut o = Outcome::new();
    o.require(pts.len() == 9, format!("{} critical points at lambda = {lambda}", pts.len()));
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut mismatches = Vec::new();
    for pt in &pts {
        let beta = DVector::from_column_slice(&pt.beta);
        match classify_q(inst, &beta, lambda, &tol) {
            Ok(c) => {
                *counts.entry(c.tag.as_str()).or_default() += 1;
                if c.tag != expected_orthogonal_tag(&pt.branches) {
                    mismatches.push(format!("{:?} -> {}", pt.branches, c.tag));
                }
            }
            Err(e) => mismatches.push(format!("{:?}: {e}", pt.branches)),
        }
    }
    o.require(mismatches.is_empty(), format!("classes {counts:?} mismatches {mismatches:?}"));
    o.require(counts.get("local-max") == Some(&1), "exactly one local max");
    o
}

/// Restricted OLS on `support`, solved directly from the normal equations.
fn normal_equations(inst: &ProblemInstance, support: &[usize]) -> Vec<f64> {
    let s = Support::new(support.to_vec());
    let g = inst.gram();
    let idx = s.indices();
    let block = g.select_rows(idx).select_columns(idx);
    let rhs = s.gather(&(g * inst.beta_star()));
    let sol = block.lu().solve(&rhs).unwrap_or_else(|| DVector::from_element(idx.len(), f64::NAN));
    s.scatter(&sol, inst.n()).iter().copied().collect()
}

fn check_greedy_3d_modified(ctx: &mut Context) -> Outcome {
    let inst = ctx.inst("ex3d").clone();
    let t = ctx.traced("ex3d");
    let (path, main) = match (&t.modified, &t.main) {
        (Ok(p), Ok(m)) => (p.clone(), m.clone()),
        (Err(e), _) | (_, Err(e)) => return Outcome::fail(e.clone()),
    };
    let mut o = Outcome::new();
    let g0: Vec<f64> = inst.gradient(&DVector::zeros(3)).iter().copied().collect();
    o.require(dist(&g0, &[0.96, -0.56, -0.8]) < 1e-14, format!("grad phi(0) = {}", fmt_vec(&g0)));
    let bps: Vec<Vec<f64>> = path.breakpoints.iter().map(|b| b.beta.clone()).collect();
    let snaps = [normal_equations(&inst, &[2]), normal_equations(&inst, &[1, 2])];
    o.require(
        bps.len() == 2
            && dist(&bps[0], &[0.0, 0.0, 0.8]) < 1e-3
            && dist(&bps[1], &[0.0, 0.6465, 0.8646]) < 1e-3
            && dist(&bps[0], &snaps[0]) < 1e-8
            && dist(&bps[1], &snaps[1]) < 1e-8,
        format!("breakpoints {}", bps.iter().map(|b| fmt_vec(b)).collect::<Vec<_>>().join(" ")),
    );
    o.require(
        path.terminal.kind == EventKind::ReachedOls && dist(&path.endpoint().beta, &[0.2, 0.8, 1.0]) < 1e-8,
        format!("terminal {:?} at {}", path.terminal.kind, fmt_vec(&path.endpoint().beta)),
    );
    let mut main_bps: Vec<Vec<f64>> = main.breakpoints.iter().map(|b| b.beta.clone()).collect();
    main_bps.reverse();
    let same = main_bps.len() == bps.len() && main_bps.iter().zip(&bps).all(|(a, b)| dist(a, b) < 1e-8);
    o.require(same, "main path breakpoints equal the modified greedy ones reversed");
    o
}

fn check_greedy_3d_unmodified(ctx: &mut Context) -> Outcome {
    let path = match &ctx.traced("ex3d").greedy {
        Ok(p) => p.clone(),
        Err(e) => return Outcome::fail(e.clone()),
    };
    let mut o = Outcome::new();
    let bps: Vec<Vec<f64>> = path.breakpoints.iter().map(|b| b.beta.clone()).collect();
    o.require(
        bps.len() == 2 && dist(&bps[0], &[-0.96, 0.0, 0.0]) < 1e-3 && dist(&bps[1], &[-0.75, 0.0, 0.35]) < 1e-3,
        format!("breakpoints {}", bps.iter().map(|b| fmt_vec(b)).collect::<Vec<_>>().join(" ")),
    );
    let stalled = matches!(path.terminal.kind, EventKind::Stalled { .. });
    o.require(
        stalled && dist(&path.endpoint().beta, &[0.0, 0.0, 0.8]) < 1e-3,
        format!("terminal {:?} at {}", path.terminal.kind, fmt_vec(&path.endpoint().beta)),
    );
    o
}

/// Largest `λ` over the segment on which each coordinate entered.
fn lambda_peaks(path: &Path) -> Vec<(usize, f64)> {
    path.activation_order()
        .into_iter()
        .zip(&path.segments)
        .map(|(i, seg)| (i, seg.points.iter().map(|p| p.lambda).fold(0.0, f64::max)))
        .collect()
}

fn check_greedy_5d(ctx: &mut Context) -> Outcome {
    let tol = ctx.settings.tolerances;
    let inst = ctx.inst("ex5d").clone();
    let path = match &ctx.traced("ex5d").greedy {
        Ok(p) => p.clone(),
        Err(e) => return Outcome::fail(e.clone()),
    };
    let mut o = Outcome::new();
    let target = [1.0, 0.7, -0.5, 0.3, -0.1];
    o.require(
        path.terminal.kind == EventKind::ReachedOls && dist(&path.endpoint().beta, &target) < 1e-8,
        format!("terminal {:?} at {}", path.terminal.kind, fmt_vec(&path.endpoint().beta)),
    );
    let order = path.activation_order();
    o.require(order == vec![0, 1, 2, 3, 4], format!("activation order {:?}", order.iter().map(|i| i + 1).collect::<Vec<_>>()));
    match omp(&inst, false, &tol).and_then(|s| check_omp_coincidence(&inst, &path, &s, &tol)) {
        Ok(r) => o.require(r.coincide, format!("omp coincidence (max deviation {:.2e})", r.max_deviation)),
        Err(e) => o.require(false, e.to_string()),
    }
    let peaks = lambda_peaks(&path);
    let descending = peaks.windows(2).all(|w| w[0].1 > w[1].1);
    let matches_bar = peaks
        .iter()
        .all(|&(i, l)| (l - scalar::lambda_bar(target[i], inst.p())).abs() < 1e-6);
    let shown: Vec<String> = peaks.iter().map(|(i, l)| format!("{}:{l:.6}", i + 1)).collect();
    o.require(descending && matches_bar, format!("lambda peaks {} vs lambda_bar(|beta*_i|)", shown.join(" ")));
    o
}

/// Strict local maxima of `c` at points strictly inside a segment.
fn interior_c_maxima(seg: &Segment) -> Vec<(f64, f64)> {
    seg.points
        .windows(3)
        .filter(|w| w[1].c > w[0].c && w[1].c > w[2].c)
        .map(|w| (w[1].arclength, w[1].c))
        .collect()
}

fn check_p07_c(ctx: &mut Context) -> Outcome {
    let path = match &ctx.traced("exA2").main {
        Ok(p) => p.clone(),
        Err(e) => return Outcome::fail(e.clone()),
    };
    let mut o = Outcome::new();
    let pieces = path.decompose(critical::Problem::P);
    o.require(pieces.len() == 3, format!("{} single-valued pieces in c", pieces.len()));
    let maxima: Vec<(f64, f64)> = path.segments.iter().flat_map(interior_c_maxima).collect();
    let pts = path.points();
    let path_maxima: Vec<String> = pts
        .windows(3)
        .filter(|w| w[1].c > w[0].c && w[1].c > w[2].c)
        .map(|w| format!("c = {:.6} at {}", w[1].c, fmt_vec(&w[1].beta)))
        .collect();
    o.require(
        !maxima.is_empty(),
        format!("strict local max of c inside a segment: {maxima:?} (path-level maxima: {})", path_maxima.join(", ")),
    );
    o
}

/// Locates the largest jump of the P-global solution over a c-grid and
/// refines the bracket by bisection on the support of the solution.
pub fn global_p_jump(inst: &ProblemInstance, grid: &GridSpec, samples: usize) -> Result<(f64, f64, Vec<f64>, Vec<f64>), String> {
    let c_max = inst.penalty(inst.beta_star());
    let solve = |c: f64| brute_force_global_p(inst, c, grid).map(|g| g.beta).map_err(|e| e.to_string());
    let cs: Vec<f64> = (0..=samples).map(|k| c_max * k as f64 / samples as f64).collect();
    let sols: Vec<Vec<f64>> = cs.iter().map(|&c| solve(c)).collect::<Result<_, _>>()?;
    let (k, _) = sols
        .windows(2)
        .enumerate()
        .map(|(k, w)| (k, dist(&w[0], &w[1])))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let support = |b: &[f64]| Support::of(&DVector::from_column_slice(b), 1e-9);
    let (mut lo, mut hi) = (cs[k], cs[k + 1]);
    let (mut blo, mut bhi) = (sols[k].clone(), sols[k + 1].clone());
    let right_support = support(&bhi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let b = solve(mid)?;
        if support(&b) == right_support {
            hi = mid;
            bhi = b;
        } else {
            lo = mid;
            blo = b;
        }
    }
    let jump = blo.iter().zip(&bhi).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok((0.5 * (lo + hi), jump, blo, bhi))
}

fn check_p07_jump(ctx: &mut Context) -> Outcome {
    let inst = ctx.inst("exA2").clone();
    let mut o = Outcome::new();
    match global_p_jump(&inst, &ctx.grid, 60) {
        Ok((c, jump, left, right)) => {
            let (fl, fr) = (inst.phi(&DVector::from_vec(left.clone())), inst.phi(&DVector::from_vec(right.clone())));
            o.require((fl - fr).abs() < 1e-6, format!("phi continuous at the crossing c = {c:.9} ({fl:.9} vs {fr:.9})"));
            o.require(
                jump > 0.5,
                format!("jump {jump:.6} from {} to {} (need > 0.5)", fmt_vec(&left), fmt_vec(&right)),
            );
        }
        Err(e) => o.require(false, e),
    }
    o
}

fn check_p07_classification(ctx: &mut Context) -> Outcome {
    let path = match &ctx.traced("exA2").main {
        Ok(p) => p.clone(),
        Err(e) => return Outcome::fail(e.clone()),
    };
    let mut o = Outcome::new();
    let seg = &path.segments[0];
    let Some(triangle) = seg.turning_points().next().map(|e| e.location.arclength) else {
        return Outcome::fail("no turning point on the two-coordinate segment");
    };
    let after: Vec<_> = seg.points.iter().filter(|p| p.arclength > triangle).collect();
    let p_min_q_not = after.iter().filter(|p| p.class_p == Tag::LocalMin && p.class_q != Tag::LocalMin).count();
    o.require(p_min_q_not > 0, format!("{p_min_q_not} points past the turning point are P-min but not Q-min"));
    let before_ok = seg
        .points
        .iter()
        .filter(|p| p.arclength < triangle && p.lambda > 0.0)
        .all(|p| p.class_p == Tag::LocalMin && p.class_q == Tag::LocalMin);
    o.require(before_ok, "points between the OLS solution and the turning point are min for both");
    let violations = path.points().iter().filter(|p| p.class_q == Tag::LocalMin && p.class_p != Tag::LocalMin).count();
    o.require(violations == 0, format!("{violations} points Q-min but not P-min"));
    o
}

fn check_proper_subset(ctx: &mut Context) -> Outcome {
    let tol = ctx.settings.tolerances;
    let grid = ctx.grid;
    let mut o = Outcome::new();
    let lambdas: Vec<f64> = (0..=24).map(|k| 1e-4 * 10f64.powf(5.0 * k as f64 / 24.0)).collect();
    for name in ["ex1d", "ex2", "exA1", "exA2"] {
        let inst = ctx.inst(name).clone();
        let mut worst: f64 = 0.0;
        let mut bad = Vec::new();
        let mut min_nonzero = f64::INFINITY;
        for &l in &lambdas {
            let q = match brute_force_global_q(&inst, l, &grid) {
                Ok(q) => q,
                Err(e) => {
                    bad.push(e.to_string());
                    continue;
                }
            };
            let beta = q.beta_vector();
            match classify_q(&inst, &beta, l, &tol) {
                Ok(c) if c.tag == Tag::LocalMin => {}
                Ok(c) => bad.push(format!("lambda {l:.3e}: Q-global classified {}", c.tag)),
                Err(e) => bad.push(format!("lambda {l:.3e}: {e}")),
            }
            let c = inst.penalty(&beta);
            if c == 0.0 || q.ties.len() > 1 {
                continue;
            }
            min_nonzero = min_nonzero.min(beta.norm());
            match brute_force_global_p(&inst, c, &grid) {
                Ok(p) => worst = worst.max(dist(&p.beta, &q.beta)),
                Err(e) => bad.push(e.to_string()),
            }
        }
        o.require(bad.is_empty() && worst < 1e-6, format!("{name}: max |beta_P(c) − beta_Q| = {worst:.2e} {bad:?}"));
        // A small budget gives a nonzero P-solution closer to zero than any
        // nonzero Q-global solution.
        let c_small = 1e-3;
        match brute_force_global_p(&inst, c_small, &grid) {
            Ok(p) => {
                let r = p.beta_vector().norm();
                o.require(r > 0.0 && r < min_nonzero, format!("{name}: |beta_P({c_small})| = {r:.3e} < {min_nonzero:.3e}"));
            }
            Err(e) => o.require(false, e.to_string()),
        }
    }
    o
}

fn check_continuity(ctx: &mut Context) -> Outcome {
    let grid = ctx.grid;
    let inst = ctx.inst("ex1d").clone();
    let mut o = Outcome::new();
    let mut norms = Vec::new();
    for k in 0..7 {
        let c = 10f64.powi(-k);
        match brute_force_global_p(&inst, c, &grid) {
            Ok(p) => norms.push(p.beta_vector().norm()),
            Err(e) => return Outcome::fail(e.to_string()),
        }
    }
    let decreasing = norms.windows(2).all(|w| w[1] < w[0]);
    o.require(decreasing && norms[norms.len() - 1] < 1e-5, format!("|beta_P(c)| for c = 1..1e-6: {:?}", norms.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>()));
    let (lgl, bgl) = scalar::lambda_global_jump(1.0, 0.5);
    let lambdas: Vec<f64> = (0..=40).map(|k| 0.05 + 0.4 * k as f64 / 40.0).collect();
    let mut norms_q = Vec::new();
    for &l in &lambdas {
        match brute_force_global_q(&inst, l, &grid) {
            Ok(q) => norms_q.push(q.beta_vector().norm()),
            Err(e) => return Outcome::fail(e.to_string()),
        }
    }
    let (k, jump) = norms_q
        .windows(2)
        .enumerate()
        .map(|(k, w)| (k, (w[0] - w[1]).abs()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    let bracket = (lambdas[k], lambdas[k + 1]);
    o.require(
        jump >= bgl / 2.0 && bracket.0 <= lgl && lgl <= bracket.1,
        format!("Q jump {jump:.4} in lambda [{:.4}, {:.4}], lambda_gl {lgl:.6}, beta_gl {bgl:.4}", bracket.0, bracket.1),
    );
    o
}

fn check_residuals(ctx: &mut Context) -> Outcome {
    let tol = ctx.settings.tolerances;
    let mut o = Outcome::new();
    for (label, path) in ctx.all_paths() {
        let inst = ctx.inst(label.split('/').next().unwrap());
        let path = match path {
            Ok(p) => p,
            Err(e) => {
                o.require(false, format!("{label}: {e}"));
                continue;
            }
        };
        let mut worst: f64 = 0.0;
        let mut negative = 0;
        for pt in path.points() {
            let beta = pt.beta_vector();
            let r = critical::criticality_residual(inst, &beta, pt.lambda, &tol).norm();
            worst = worst.max(r / (1.0 + inst.gradient(&beta).norm()));
            if let ImpliedLambda::Consistent(l) = implied_lambda(inst, &beta, &tol) {
                if l < 0.0 {
                    negative += 1;
                }
            }
            if pt.lambda < 0.0 {
                negative += 1;
            }
        }
        o.require(worst < 1e-8 && negative == 0, format!("{label}: scaled residual {worst:.1e}, negative lambda {negative}"));
    }
    o
}

fn check_breakpoints(ctx: &mut Context) -> Outcome {
    let tol = ctx.settings.tolerances;
    let mut o = Outcome::new();
    let mut count = 0;
    for (label, path) in ctx.all_paths() {
        let inst = ctx.inst(label.split('/').next().unwrap());
        let Ok(path) = path else { continue };
        for bp in &path.breakpoints {
            count += 1;
            let beta = bp.beta_vector();
            let support = Support::of(&beta, tol.zero);
            let g = inst.grad_phi(&beta, &support).amax();
            let l = match implied_lambda(inst, &beta, &tol) {
                ImpliedLambda::Consistent(l) => l,
                _ => f64::INFINITY,
            };
            let snap = inst.restricted_ols(&support).map(|s| (s - &beta).amax()).unwrap_or(f64::INFINITY);
            if !(g < 1e-8 && l < 1e-6 && bp.lambda < 1e-6 && snap < 1e-8) {
                o.require(false, format!("{label} at {}: restricted gradient {g:.1e}, lambda {l:.1e}", fmt_vec(&bp.beta)));
            }
        }
    }
    o.require(count > 0, format!("{count} breakpoints satisfy lambda < 1e-6 and restricted gradient < 1e-8"));
    o
}

fn check_tangency(ctx: &mut Context) -> Outcome {
    let mut o = Outcome::new();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (label, path) in ctx.all_paths() {
        let Ok(path) = path else { continue };
        for (k, r) in strategies::tangency_at_joints(&path).into_iter().enumerate() {
            count += 1;
            match r {
                Ok(r) => {
                    worst = worst.max(r.angle);
                    if r.angle >= 1e-3 {
                        o.require(false, format!("{label} joint {}: angle {:.2e}", k + 1, r.angle));
                    }
                }
                Err(e) => o.require(false, format!("{label} joint {}: {e}", k + 1)),
            }
        }
    }
    o.require(count > 0, format!("{count} joints, largest angle {worst:.2e} rad"));
    o
}

/// Sign changes of `det K` between consecutive points of a segment that are
/// not bracketed by a turning-point event. Points next to a vanishing
/// coordinate are skipped since `K` blows up there.
pub fn unflagged_det_sign_changes(inst: &ProblemInstance, seg: &Segment) -> Result<Vec<f64>, ModelError> {
    let turns: Vec<f64> = seg.turning_points().map(|e| e.location.arclength).collect();
    let mut prev: Option<(f64, f64)> = None;
    let mut out = Vec::new();
    let n = seg.points.len();
    for pt in &seg.points[1..n.saturating_sub(1)] {
        let beta = pt.beta_vector();
        if seg.support.indices().iter().any(|&i| beta[i].abs() < 1e-8) {
            prev = None;
            continue;
        }
        let det = inst.hessian_k(&beta, pt.lambda, &seg.support)?.determinant();
        if det == 0.0 {
            continue;
        }
        if let Some((s0, d0)) = prev {
            if d0.signum() != det.signum() {
                let slack = 1e-9 * (1.0 + pt.arclength.abs());
                let flagged = turns.iter().any(|&t| t >= s0 - slack && t <= pt.arclength + slack);
                if !flagged {
                    out.push(0.5 * (s0 + pt.arclength));
                }
            }
        }
        prev = Some((pt.arclength, det));
    }
    Ok(out)
}

fn check_turning_points(ctx: &mut Context) -> Outcome {
    let mut o = Outcome::new();
    let mut segments = 0;
    let mut turns = 0;
    for (label, path) in ctx.all_paths() {
        let inst = ctx.inst(label.split('/').next().unwrap());
        let Ok(path) = path else { continue };
        for (k, seg) in path.segments.iter().enumerate() {
            segments += 1;
            turns += seg.turning_points().count();
            match unflagged_det_sign_changes(inst, seg) {
                Ok(v) if v.is_empty() => {}
                Ok(v) => o.require(false, format!("{label} segment {}: unflagged sign change near s = {v:?}", k + 1)),
                Err(e) => o.require(false, format!("{label} segment {}: {e}", k + 1)),
            }
        }
    }
    o.require(segments > 0, format!("{segments} segments, {turns} turning points, det K changes sign only at them"));
    o
}

/// Deterministic spread of points in `[−3, 3]ⁿ`.
fn probe_points(n: usize, count: usize) -> Vec<DVector<f64>> {
    (0..count)
        .map(|k| DVector::from_iterator(n, (0..n).map(|i| 3.0 * ((k * n + i) as f64 * 1.618_033_988_75 + 0.3).sin())))
        .collect()
}

fn check_derivatives(ctx: &mut Context) -> Outcome {
    let mut o = Outcome::new();
    for name in FIXTURE_NAMES {
        let inst = ctx.inst(name);
        let n = inst.n();
        let full = Support::full(n);
        let mut worst_g: f64 = 0.0;
        let mut worst_h: f64 = 0.0;
        for beta in probe_points(n, 100) {
            let grad = inst.gradient(&beta);
            let h = 1e-5;
            for i in 0..n {
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (inst.phi(&up) - inst.phi(&dn)) / (2.0 * h);
                worst_g = worst_g.max((fd - grad[i]).abs());
            }
            if beta.iter().any(|b| b.abs() <= 0.1) {
                continue;
            }
            let lambda = 0.7;
            let grad_f = |b: &DVector<f64>| -> Result<DVector<f64>, ModelError> {
                Ok(inst.grad_phi(b, &full) + inst.grad_penalty(b, &full)? * lambda)
            };
            let k = match inst.hessian_k(&beta, lambda, &full) {
                Ok(k) => k,
                Err(e) => return Outcome::fail(e.to_string()),
            };
            let h = 1e-6;
            for j in 0..n {
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[j] += h;
                dn[j] -= h;
                let col = match (grad_f(&up), grad_f(&dn)) {
                    (Ok(a), Ok(b)) => (a - b) / (2.0 * h),
                    (Err(e), _) | (_, Err(e)) => return Outcome::fail(e.to_string()),
                };
                for i in 0..n {
                    worst_h = worst_h.max((col[i] - k[(i, j)]).abs());
                }
            }
        }
        let mut line = String::new();
        let _ = write!(line, "{name}: gradient {worst_g:.1e}, Hessian {worst_h:.1e}");
        o.require(worst_g < 1e-6 && worst_h < 1e-5, line);
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_ids_are_rejected() {
        let fx = FixtureSet::bundled();
        let err = run(&fx, Some(&["nope".to_string()]), &TraceSettings::default()).unwrap_err();
        assert!(matches!(err, VerifyError::UnknownCheck(_)));
    }

    #[test]
    fn subset_runs_only_the_requested_checks() {
        let fx = FixtureSet::bundled();
        let only = vec!["breakpoints".to_string(), "lambda-bar".to_string()];
        let r = run(&fx, Some(&only), &TraceSettings::default()).unwrap();
        let ids: Vec<&str> = r.checks.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids, vec!["lambda-bar", "breakpoints"]);
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn orthogonal_tag_pattern() {
        assert_eq!(expected_orthogonal_tag(&[Branch::B, Branch::B]), Tag::LocalMax);
        assert_eq!(expected_orthogonal_tag(&[Branch::A, Branch::B]), Tag::Saddle);
        assert_eq!(expected_orthogonal_tag(&[Branch::C, Branch::A]), Tag::LocalMin);
    }
}
