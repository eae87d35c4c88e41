//! Acceptance criteria AC1 to AC6, one PASS/FAIL line each.
//!
//! Reference values are computed here from closed forms, exact rational
//! arithmetic or direct normal-equation solves rather than taken from the
//! library under test.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use lpcrit::critical::Problem;
use lpcrit::scalar::{scalar_objective, GridSpec};
use lpcrit::strategies::omp;
use lpcrit::verify::{self, global_p_jump, FixtureSet};
use lpcrit::{
    brute_force_global_q, check_omp_coincidence, classify_p, classify_q, enumerate_orthogonal_critical_points,
    greedy_path, implied_lambda, lambda_bar, lambda_global_jump, main_path, Branch, EventKind, ProblemInstance, Tag,
    Tolerances, TraceSettings,
};
use nalgebra::DVector;

struct Criterion {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Criterion {
    fn check(&mut self, ok: bool, what: String) {
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }
}

fn fixture(name: &str) -> ProblemInstance {
    FixtureSet::bundled().get(name).clone()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Closed-form threshold `(1 − p)^{1−p} (t / (2 − p))^{2−p}`, restated here.
fn lambda_bar_ref(t: f64, p: f64) -> f64 {
    (1.0 - p).powf(1.0 - p) * (t.abs() / (2.0 - p)).powf(2.0 - p)
}

fn ac1(c: &mut Criterion) {
    let inst = fixture("ex1d");
    let expected = 2.0 * (1.0f64 / 3.0).powf(1.5);
    let lb = lambda_bar(1.0, 0.5);
    c.check((lb - expected).abs() < 1e-10, format!("lambda_bar {lb:.12} vs 2(1/3)^1.5"));

    let path = main_path(&inst, &TraceSettings::default()).expect("main path");
    let pts = path.points();
    let (hi, lo) = (pts[0].beta[0], pts[pts.len() - 1].beta[0]);
    c.check(hi == 1.0 && lo == 0.0 && path.segments.len() == 1, format!("main path covers [{lo}, {hi}]"));
    let turns: Vec<f64> = path.segments.iter().flat_map(|s| s.turning_points()).map(|e| e.location.lambda).collect();
    c.check(
        turns.len() == 1 && (turns[0] - expected).abs() < 1e-6,
        format!("turning point at lambda {turns:?}"),
    );

    // At the tie f(0) = f(b) together with f'(b) = 0: b = 2/3, λ = b^{1/2}(1 − b).
    let b_ref: f64 = 2.0 / 3.0;
    let l_ref = b_ref.sqrt() * (1.0 - b_ref);
    let (lgl, bgl) = lambda_global_jump(1.0, 0.5);
    c.check(lgl > 0.2 && lgl < 0.3, format!("lambda_gl {lgl:.9} in (0.2, 0.3)"));
    c.check((lgl - l_ref).abs() < 1e-9 && (bgl - b_ref).abs() < 1e-9, format!("matches closed form {l_ref:.9}"));
    let gap = scalar_objective(0.0, 1.0, lgl, 0.5) - scalar_objective(bgl, 1.0, lgl, 0.5);
    c.check(gap.abs() < 1e-9, format!("f(0) − f(beta_gl) = {gap:.1e}"));
    let grid = GridSpec::default();
    let before = brute_force_global_q(&inst, lgl - 1e-6, &grid).unwrap().beta[0];
    let after = brute_force_global_q(&inst, lgl + 1e-6, &grid).unwrap().beta[0];
    c.check(
        (before - b_ref).abs() < 1e-4 && after == 0.0,
        format!("Q oracle jumps from {before:.6} to {after} across lambda_gl"),
    );
}

fn ac2(c: &mut Criterion) {
    let inst = fixture("ex2");
    let tol = Tolerances::default();
    let path = greedy_path(&inst, false, &TraceSettings::default()).expect("greedy path");
    let bps: Vec<Vec<f64>> = path.breakpoints.iter().map(|b| b.beta.clone()).collect();
    c.check(bps.len() == 1 && max_abs_diff(&bps[0], &[2.0, 0.0]) < 1e-6, format!("breakpoints {bps:?}"));
    c.check(
        path.terminal.kind == EventKind::ReachedOls && max_abs_diff(&path.endpoint().beta, &[2.0, 1.0]) < 1e-6,
        format!("endpoint {:?}", path.endpoint().beta),
    );
    let steps = omp(&inst, false, &tol).unwrap();
    let betas: Vec<Vec<f64>> = steps.steps.iter().map(|s| s.beta.clone()).collect();
    c.check(betas == vec![vec![2.0, 0.0], vec![2.0, 1.0]], format!("omp steps {betas:?}"));
    let report = check_omp_coincidence(&inst, &path, &steps, &tol).unwrap();
    c.check(report.coincide, format!("coincidence, deviation {:.1e}", report.max_deviation));
    let l = implied_lambda(&inst, &path.breakpoints[0].beta_vector(), &tol).value().unwrap_or(f64::INFINITY);
    c.check(l < 1e-6, format!("implied lambda at breakpoint {l:.1e}"));

    // Small λ: each axis has roots C (0), B (small, second derivative < 0), A.
    let lambda = 0.1;
    let pts = enumerate_orthogonal_critical_points(&inst, lambda, &tol).unwrap();
    c.check(pts.len() == 9, format!("{} critical points at lambda {lambda}", pts.len()));
    let mut maxima = 0;
    let mut mismatched = Vec::new();
    for pt in &pts {
        // Per-axis curvature 1 + λ ψ''(b) from the formula, zero axes count as minima.
        let curv: Vec<f64> = pt.beta.iter().filter(|&&b| b != 0.0).map(|&b| 1.0 - lambda * 0.5 * b.abs().powf(-1.5)).collect();
        let all_axes = curv.len() == 2;
        let expected = if curv.iter().all(|&k| k > 0.0) {
            Tag::LocalMin
        } else if all_axes && curv.iter().all(|&k| k < 0.0) {
            Tag::LocalMax
        } else {
            Tag::Saddle
        };
        let got = classify_q(&inst, &DVector::from_vec(pt.beta.clone()), lambda, &tol).unwrap().tag;
        if got == Tag::LocalMax {
            maxima += 1;
            if pt.branches != vec![Branch::B, Branch::B] {
                mismatched.push(format!("{:?} local max", pt.branches));
            }
        }
        if got != expected {
            mismatched.push(format!("{:?}: {got} vs {expected}", pt.branches));
        }
    }
    c.check(maxima == 1 && mismatched.is_empty(), format!("{maxima} local max, mismatches {mismatched:?}"));
}

/// Solves `G_II x = (G β*)_I` by Cramer's rule for one or two indices.
fn normal_equations(g: &[[f64; 3]; 3], bs: &[f64; 3], idx: &[usize]) -> [f64; 3] {
    let rhs = |i: usize| (0..3).map(|j| g[i][j] * bs[j]).sum::<f64>();
    let mut out = [0.0; 3];
    match idx {
        [i] => out[*i] = rhs(*i) / g[*i][*i],
        [i, j] => {
            let det = g[*i][*i] * g[*j][*j] - g[*i][*j] * g[*j][*i];
            out[*i] = (rhs(*i) * g[*j][*j] - g[*i][*j] * rhs(*j)) / det;
            out[*j] = (g[*i][*i] * rhs(*j) - g[*j][*i] * rhs(*i)) / det;
        }
        _ => unreachable!(),
    }
    out
}

fn ac3(c: &mut Criterion) {
    let inst = fixture("ex3d");
    // G and β* in tenths, so −Gβ* is exact in hundredths.
    let g_int: [[i64; 3]; 3] = [[10, -7, -6], [-7, 10, -1], [-6, -1, 10]];
    let b_int: [i64; 3] = [2, 8, 10];
    let exact: Vec<f64> = (0..3).map(|i| -(0..3).map(|j| g_int[i][j] * b_int[j]).sum::<i64>() as f64 / 100.0).collect();
    let grad: Vec<f64> = inst.gradient(&DVector::zeros(3)).iter().copied().collect();
    c.check(exact == vec![0.96, -0.56, -0.8], format!("rational grad phi(0) = {exact:?}"));
    c.check(max_abs_diff(&grad, &exact) < 1e-15, format!("library grad phi(0) = {grad:?}"));

    let g = [[1.0, -0.7, -0.6], [-0.7, 1.0, -0.1], [-0.6, -0.1, 1.0]];
    let bs = [0.2, 0.8, 1.0];
    let settings = TraceSettings::default();
    let modified = greedy_path(&inst, true, &settings).unwrap();
    let bps: Vec<Vec<f64>> = modified.breakpoints.iter().map(|b| b.beta.clone()).collect();
    let snaps = [normal_equations(&g, &bs, &[2]), normal_equations(&g, &bs, &[1, 2])];
    let ok = bps.len() == 2
        && max_abs_diff(&bps[0], &[0.0, 0.0, 0.8]) < 1e-3
        && max_abs_diff(&bps[1], &[0.0, 0.6465, 0.8646]) < 1e-3
        && max_abs_diff(&bps[0], &snaps[0]) < 1e-8
        && max_abs_diff(&bps[1], &snaps[1]) < 1e-8;
    c.check(ok, format!("modified breakpoints {bps:?} vs normal equations {snaps:?}"));

    let plain = greedy_path(&inst, false, &settings).unwrap();
    let bps: Vec<Vec<f64>> = plain.breakpoints.iter().map(|b| b.beta.clone()).collect();
    let ok = bps.len() == 2
        && max_abs_diff(&bps[0], &[-0.96, 0.0, 0.0]) < 1e-3
        && max_abs_diff(&bps[1], &[-0.75, 0.0, 0.35]) < 1e-3;
    c.check(ok, format!("unmodified breakpoints {bps:?}"));
    let end = &plain.endpoint().beta;
    c.check(
        matches!(plain.terminal.kind, EventKind::Stalled { .. }) && max_abs_diff(end, &[0.0, 0.0, 0.8]) < 1e-3,
        format!("unmodified path stalls at {end:?}"),
    );
}

fn ac4(c: &mut Criterion) {
    let inst = fixture("ex5d");
    let tol = Tolerances::default();
    let target = [1.0, 0.7, -0.5, 0.3, -0.1];
    let path = greedy_path(&inst, false, &TraceSettings::default()).unwrap();
    c.check(
        path.terminal.kind == EventKind::ReachedOls && max_abs_diff(&path.endpoint().beta, &target) < 1e-8,
        format!("endpoint {:?}", path.endpoint().beta),
    );
    let order: Vec<usize> = path.activation_order().iter().map(|i| i + 1).collect();
    c.check(order == vec![1, 2, 3, 4, 5], format!("activation order {order:?}"));
    let steps = omp(&inst, false, &tol).unwrap();
    let report = check_omp_coincidence(&inst, &path, &steps, &tol).unwrap();
    c.check(report.coincide, format!("OMP coincidence, deviation {:.1e}", report.max_deviation));
    // λ peak of the segment on which each coordinate entered.
    let peaks: Vec<f64> = path
        .segments
        .iter()
        .map(|s| s.points.iter().map(|p| p.lambda).fold(0.0, f64::max))
        .collect();
    let refs: Vec<f64> = target.iter().map(|&t| lambda_bar_ref(t, 0.5)).collect();
    let descending = peaks.windows(2).all(|w| w[0] > w[1]) && refs.windows(2).all(|w| w[0] > w[1]);
    c.check(
        descending && max_abs_diff(&peaks, &refs) < 1e-6,
        format!("lambda peaks {peaks:.6?} vs lambda_bar {refs:.6?}"),
    );
}

fn ac5(c: &mut Criterion) {
    let inst = fixture("exA2");
    let tol = Tolerances::default();
    let path = main_path(&inst, &TraceSettings::default()).unwrap();
    let pieces = path.decompose(Problem::P).len();
    c.check(pieces == 3, format!("{pieces} single-valued pieces in c"));
    let interior_max: Vec<(f64, f64)> = path
        .segments
        .iter()
        .flat_map(|s| s.points.windows(3).filter(|w| w[1].c > w[0].c && w[1].c > w[2].c).map(|w| (w[1].arclength, w[1].c)))
        .collect();
    let path_max: Vec<Vec<f64>> = path
        .points()
        .windows(3)
        .filter(|w| w[1].c > w[0].c && w[1].c > w[2].c)
        .map(|w| w[1].beta.clone())
        .collect();
    c.check(
        !interior_max.is_empty(),
        format!("strict local max of c inside a segment {interior_max:?}; along the whole path at {path_max:?}"),
    );

    let (crossing, jump, left, right) = global_p_jump(&inst, &GridSpec::default(), 60).unwrap();
    c.check(jump > 0.5, format!("P-global jump {jump:.6} at c = {crossing:.6}, {left:.6?} to {right:.6?} (need > 0.5)"));

    // Between the λ turning point and the c minimum: P-min but not Q-min.
    let seg = &path.segments[0];
    let triangle = seg.turning_points().next().map(|e| e.location.arclength).unwrap_or(f64::INFINITY);
    let mut p_min_q_not = 0;
    for pt in seg.points.iter().filter(|p| p.arclength > triangle) {
        let beta = pt.beta_vector();
        let (Ok(p), Ok(q)) = (classify_p(&inst, &beta, &tol), classify_q(&inst, &beta, pt.lambda, &tol)) else {
            continue;
        };
        if p.tag == Tag::LocalMin && q.tag != Tag::LocalMin {
            p_min_q_not += 1;
        }
    }
    c.check(p_min_q_not > 0, format!("{p_min_q_not} points past the turning point are P-min and not Q-min"));
}

fn ac6(c: &mut Criterion) {
    let ids: Vec<String> = ["proper-subset", "continuity", "residuals", "breakpoints", "tangency", "turning-points", "derivatives"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let report = verify::run(&FixtureSet::bundled(), Some(&ids), &TraceSettings::default()).unwrap();
    for check in &report.checks {
        c.check(check.passed, format!("{} ({})", check.id, check.detail));
    }
}

fn main() -> ExitCode {
    type Body = fn(&mut Criterion);
    let criteria: [(&str, Body, Duration); 6] = [
        ("AC1", ac1, Duration::from_secs(1)),
        ("AC2", ac2, Duration::from_secs(5)),
        ("AC3", ac3, Duration::from_secs(10)),
        ("AC4", ac4, Duration::from_secs(10)),
        ("AC5", ac5, Duration::from_secs(30)),
        ("AC6", ac6, Duration::from_secs(120)),
    ];
    let mut all_ok = true;
    for (name, body, budget) in criteria {
        let mut c = Criterion { failures: Vec::new(), notes: Vec::new() };
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| body(&mut c)));
        let elapsed = t.elapsed();
        if let Err(e) = outcome {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            c.failures.push(format!("panicked: {}", msg.unwrap_or_default()));
        }
        if elapsed > budget {
            c.failures.push(format!("runtime {elapsed:.2?} over {budget:?}"));
        }
        let ok = c.failures.is_empty();
        all_ok &= ok;
        println!("{name} {} ({:.3}s)", if ok { "PASS" } else { "FAIL" }, elapsed.as_secs_f64());
        for f in &c.failures {
            println!("    failed: {f}");
        }
        for n in &c.notes {
            println!("    ok: {n}");
        }
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
