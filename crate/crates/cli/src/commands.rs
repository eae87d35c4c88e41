use std::fmt::Write as _;
use std::path::Path as FsPath;

use lpcrit::io::{path_from_json, path_to_csv, path_to_json};
use lpcrit::scalar::{brute_force_global_p, brute_force_global_q, GridSpec};
use lpcrit::strategies::{self, OmpResult};
use lpcrit::verify::{self, FixtureSet};
use lpcrit::{
    check_omp_coincidence, classify_q, enumerate_orthogonal_critical_points, greedy_path, lambda_bar, load_instance,
    main_path, EventKind, Path, ProblemInstance, TraceSettings,
};

use crate::table::{beta_columns, Cell, Table};
use crate::{Common, Failure, Format, Scan, TraceKind};

type Outcome = Result<(), Failure>;

const GRID_KEYS: [&str; 5] = ["points_per_axis", "refinement_rounds", "max_grid_points", "tie_tolerance", "half_width"];

/// Settings after `--set` overrides.
struct Config {
    trace: TraceSettings,
    grid: GridSpec,
}

fn parse_overrides(overrides: &[String]) -> Result<Config, Failure> {
    let mut cfg = Config { trace: TraceSettings::default(), grid: GridSpec::default() };
    for item in overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let v: f64 = value
            .parse()
            .map_err(|_| Failure::Usage(format!("--set {key}: {value:?} is not a number")))?;
        let known = match key {
            "points_per_axis" => {
                cfg.grid.points_per_axis = v as usize;
                true
            }
            "refinement_rounds" => {
                cfg.grid.refinement_rounds = v as usize;
                true
            }
            "max_grid_points" => {
                cfg.grid.max_grid_points = v as usize;
                true
            }
            "tie_tolerance" => {
                cfg.grid.tie_tolerance = v;
                true
            }
            "half_width" => {
                cfg.grid.half_width = Some(v);
                true
            }
            _ => cfg.trace.set(key, v),
        };
        if !known {
            let mut keys: Vec<&str> = TraceSettings::KEYS.to_vec();
            keys.extend(lpcrit::Tolerances::KEYS);
            keys.extend(GRID_KEYS);
            return Err(Failure::Usage(format!("unknown setting {key:?}; known keys: {}", keys.join(", "))));
        }
    }
    Ok(cfg)
}

fn load(path: &FsPath) -> Result<ProblemInstance, Failure> {
    load_instance(path).map_err(|e| Failure::Usage(e.to_string()))
}

/// Data goes to the output file when given, otherwise to stdout; the
/// summary then moves to stderr so stdout stays machine-readable.
fn emit(output: Option<&FsPath>, data: &str, summary: &str) -> Outcome {
    match output {
        Some(path) => {
            std::fs::write(path, data).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
            print!("{summary}");
        }
        None => {
            print!("{data}");
            eprint!("{summary}");
        }
    }
    Ok(())
}

fn fmt_beta(beta: &[f64]) -> String {
    let parts: Vec<String> = beta.iter().map(|v| format!("{}", round_for_display(*v))).collect();
    format!("[{}]", parts.join(", "))
}

/// Trims round-off in summaries only; files keep full precision.
fn round_for_display(v: f64) -> f64 {
    let r = (v * 1e10).round() / 1e10;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn event_name(kind: &EventKind) -> String {
    match kind {
        EventKind::Stalled { reason } => format!("stalled ({reason})"),
        other => serde_json::to_value(other)
            .ok()
            .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(str::to_string))
            .unwrap_or_default(),
    }
}

fn path_summary(path: &Path) -> String {
    let mut s = String::new();
    let kind = serde_json::to_value(path.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
    let _ = writeln!(s, "kind: {kind}");
    let _ = writeln!(s, "segments: {}", path.segments.len());
    let _ = writeln!(s, "points: {}", path.points().len());
    let _ = writeln!(s, "breakpoints: {}", path.breakpoints.len());
    for bp in &path.breakpoints {
        let _ = writeln!(s, "  {}", fmt_beta(&bp.beta));
    }
    let order = path.activation_order();
    if !order.is_empty() {
        let names: Vec<String> = order.iter().map(|i| (i + 1).to_string()).collect();
        let _ = writeln!(s, "activation order: {}", names.join(" "));
    }
    let _ = writeln!(s, "terminal: {} at {}", event_name(&path.terminal.kind), fmt_beta(&path.endpoint().beta));
    if let Some(e) = &path.error {
        let _ = writeln!(s, "error: {e}");
    }
    s
}

pub fn trace(kind: TraceKind, common: &Common) -> Outcome {
    let cfg = parse_overrides(&common.overrides)?;
    let inst = load(&common.instance)?;
    let path = match kind {
        TraceKind::Main => main_path(&inst, &cfg.trace),
        TraceKind::Greedy => greedy_path(&inst, false, &cfg.trace),
        TraceKind::GreedyModified => greedy_path(&inst, true, &cfg.trace),
    }
    .map_err(|e| Failure::Numerical(e.to_string()))?;
    let data = match common.format {
        Format::Json => path_to_json(&path).map(|s| s + "\n"),
        Format::Csv => path_to_csv(&path),
    }
    .map_err(|e| Failure::Numerical(e.to_string()))?;
    emit(common.output.as_deref(), &data, &path_summary(&path))?;
    match &path.error {
        Some(e) => Err(Failure::Numerical(format!("tracing stopped early: {e}"))),
        None => Ok(()),
    }
}

fn omp_table(result: &OmpResult, n: usize) -> Table {
    let mut header = vec!["step".to_string(), "added".to_string(), "support".to_string()];
    header.extend(beta_columns(n));
    let mut t = Table::new(header);
    for (k, step) in result.steps.iter().enumerate() {
        let support: Vec<String> = step.support.indices().iter().map(|i| (i + 1).to_string()).collect();
        let mut row = vec![Cell::Int(k + 1), Cell::Int(step.added + 1), Cell::Text(support.join(";"))];
        row.extend(step.beta.iter().map(|&b| Cell::Num(b)));
        t.push(row);
    }
    t
}

pub fn omp(modified: bool, against: Option<&FsPath>, common: &Common) -> Outcome {
    let cfg = parse_overrides(&common.overrides)?;
    let inst = load(&common.instance)?;
    let tol = &cfg.trace.tolerances;
    let result = strategies::omp(&inst, modified, tol).map_err(|e| Failure::Numerical(e.to_string()))?;
    let mut summary = String::new();
    for (k, step) in result.steps.iter().enumerate() {
        let _ = writeln!(summary, "step {}: +{} -> {}", k + 1, step.added + 1, fmt_beta(&step.beta));
    }
    let status = serde_json::to_value(result.status).ok().and_then(|v| v.as_str().map(str::to_string));
    let _ = writeln!(summary, "status: {}", status.unwrap_or_default());

    let mut report = None;
    if let Some(file) = against {
        let text = std::fs::read_to_string(file)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", file.display())))?;
        let path = path_from_json(&text).map_err(|e| Failure::Usage(format!("{}: {e}", file.display())))?;
        let r = check_omp_coincidence(&inst, &path, &result, tol).map_err(|e| Failure::Usage(e.to_string()))?;
        let _ = writeln!(summary, "coincide: {}", r.coincide);
        let _ = writeln!(summary, "max deviation: {:.3e}", r.max_deviation);
        let _ = writeln!(summary, "max breakpoint lambda: {:.3e}", r.max_breakpoint_lambda);
        report = Some(r);
    }

    let data = match common.format {
        Format::Csv => omp_table(&result, inst.n()).to_csv().map_err(|e| Failure::Numerical(e.to_string()))?,
        Format::Json => {
            let value = serde_json::json!({ "omp": result, "coincidence": report });
            serde_json::to_string_pretty(&value).map_err(|e| Failure::Numerical(e.to_string()))? + "\n"
        }
    };
    emit(common.output.as_deref(), &data, &summary)?;
    match report {
        Some(r) if !r.coincide => Err(Failure::Check("OMP steps do not coincide with the path".into())),
        _ => Ok(()),
    }
}

pub fn verify(fixtures: Option<&FsPath>, only: &[String], output: Option<&FsPath>, overrides: &[String]) -> Outcome {
    let cfg = parse_overrides(overrides)?;
    let set = match fixtures {
        Some(dir) => FixtureSet::from_dir(dir).map_err(|e| Failure::Usage(e.to_string()))?,
        None => FixtureSet::bundled(),
    };
    let selection = (!only.is_empty()).then_some(only);
    let report = verify::run(&set, selection, &cfg.trace).map_err(|e| Failure::Usage(e.to_string()))?;
    for c in &report.checks {
        eprintln!("{} {} ({:.3}s): {}", if c.passed { "PASS" } else { "FAIL" }, c.id, c.seconds, c.detail);
    }
    let data = serde_json::to_string_pretty(&report).map_err(|e| Failure::Numerical(e.to_string()))? + "\n";
    match output {
        Some(path) => {
            std::fs::write(path, data).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?
        }
        None => print!("{data}"),
    }
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.failures().map(|c| c.id.as_str()).collect();
        Err(Failure::Check(format!("{} check(s) failed: {}", failed.len(), failed.join(", "))))
    }
}

fn linspace(from: f64, to: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..count).map(|k| from + (to - from) * k as f64 / (count - 1) as f64).collect(),
    }
}

fn write_table(table: &Table, common: &Common, what: &str) -> Outcome {
    let data = match common.format {
        Format::Csv => table.to_csv().map_err(|e| Failure::Numerical(e.to_string()))?,
        Format::Json => serde_json::to_string_pretty(&table.to_json()).map_err(|e| Failure::Numerical(e.to_string()))? + "\n",
    };
    emit(common.output.as_deref(), &data, &format!("{what}: {} rows\n", table.len()))
}

pub fn scan(scan: &Scan) -> Outcome {
    match scan {
        Scan::Landscape1d { lambdas, points, from, to, common } => {
            let inst = load(&common.instance)?;
            if inst.n() != 1 {
                return Err(Failure::Usage(format!("landscape-1d needs a one-dimensional instance, got n = {}", inst.n())));
            }
            let t = inst.beta_star()[0];
            let lo = from.unwrap_or(t.min(0.0) - 0.5 * t.abs());
            let hi = to.unwrap_or(t.max(0.0) + 0.5 * t.abs());
            let mut header = vec!["beta".to_string()];
            header.extend(lambdas.iter().map(|l| format!("f_{l}")));
            let mut table = Table::new(header);
            for b in linspace(lo, hi, *points) {
                let beta = nalgebra_vec(&[b]);
                let mut row = vec![Cell::Num(b)];
                row.extend(lambdas.iter().map(|&l| Cell::Num(inst.f_lambda(&beta, l))));
                table.push(row);
            }
            write_table(&table, common, &format!("landscape over {} values of lambda", lambdas.len()))
        }
        Scan::GlobalQ { from, to, count, common } => {
            let cfg = parse_overrides(&common.overrides)?;
            let inst = load(&common.instance)?;
            let top = inst.beta_star().iter().map(|&t| lambda_bar(t, inst.p())).fold(0.0, f64::max);
            let to = to.unwrap_or(1.2 * top);
            let mut header = vec!["lambda".to_string(), "value".to_string(), "ties".to_string()];
            header.extend(beta_columns(inst.n()));
            let mut table = Table::new(header);
            for l in linspace(*from, to, *count) {
                let g = brute_force_global_q(&inst, l, &cfg.grid).map_err(|e| Failure::Usage(e.to_string()))?;
                let mut row = vec![Cell::Num(l), Cell::Num(g.value), Cell::Int(g.ties.len())];
                row.extend(g.beta.iter().map(|&b| Cell::Num(b)));
                table.push(row);
            }
            write_table(&table, common, "global-q")
        }
        Scan::GlobalP { from, to, count, common } => {
            let cfg = parse_overrides(&common.overrides)?;
            let inst = load(&common.instance)?;
            let to = to.unwrap_or_else(|| inst.penalty(inst.beta_star()));
            let mut header = vec!["c".to_string(), "value".to_string(), "ties".to_string()];
            header.extend(beta_columns(inst.n()));
            let mut table = Table::new(header);
            for c in linspace(*from, to, *count) {
                let g = brute_force_global_p(&inst, c, &cfg.grid).map_err(|e| Failure::Usage(e.to_string()))?;
                let mut row = vec![Cell::Num(c), Cell::Num(g.value), Cell::Int(g.ties.len())];
                row.extend(g.beta.iter().map(|&b| Cell::Num(b)));
                table.push(row);
            }
            write_table(&table, common, "global-p")
        }
        Scan::EnumerateOrthogonal { lambda, common } => {
            let cfg = parse_overrides(&common.overrides)?;
            let inst = load(&common.instance)?;
            let tol = &cfg.trace.tolerances;
            let pts = enumerate_orthogonal_critical_points(&inst, *lambda, tol).map_err(|e| Failure::Usage(e.to_string()))?;
            let mut header = vec!["branches".to_string(), "class_Q".to_string()];
            header.extend(beta_columns(inst.n()));
            let mut table = Table::new(header);
            for pt in pts {
                let branches: Vec<String> = pt.branches.iter().map(|b| format!("{b:?}")).collect();
                let class = classify_q(&inst, &nalgebra_vec(&pt.beta), *lambda, tol)
                    .map_err(|e| Failure::Numerical(e.to_string()))?;
                let mut row = vec![Cell::Text(branches.join("")), Cell::Text(class.tag.to_string())];
                row.extend(pt.beta.iter().map(|&b| Cell::Num(b)));
                table.push(row);
            }
            write_table(&table, common, &format!("critical points at lambda = {lambda}"))
        }
    }
}

fn nalgebra_vec(v: &[f64]) -> lpcrit::nalgebra::DVector<f64> {
    lpcrit::nalgebra::DVector::from_column_slice(v)
}
