//! Path files: a versioned JSON mirror of [`Path`] and a flat CSV of points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critical::Tag;
use crate::model::{PathPoint, Support};
use crate::strategies::Path;

pub const PATH_FORMAT: &str = "lp-critpath/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unsupported path format {0:?}")]
    Format(String),
    #[error("bad CSV row {row}: {message}")]
    Row { row: usize, message: String },
}

#[derive(Serialize)]
struct PathFileOut<'a> {
    format: &'static str,
    #[serde(flatten)]
    path: &'a Path,
}

#[derive(Deserialize)]
struct PathFileIn {
    format: String,
    #[serde(flatten)]
    path: Path,
}

pub fn path_to_json(path: &Path) -> Result<String, IoError> {
    Ok(serde_json::to_string_pretty(&PathFileOut { format: PATH_FORMAT, path })?)
}

pub fn path_from_json(text: &str) -> Result<Path, IoError> {
    let file: PathFileIn = serde_json::from_str(text)?;
    if file.format != PATH_FORMAT {
        return Err(IoError::Format(file.format));
    }
    Ok(file.path)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per point: `arclength, lambda, c, class_Q, class_P, support,
/// beta_1..beta_n`. Support indices are 1-based and `;`-joined.
pub fn points_to_csv(points: &[PathPoint], n: usize) -> Result<String, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> =
        ["arclength", "lambda", "c", "class_Q", "class_P", "support"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n).map(|i| format!("beta_{i}")));
    w.write_record(&header)?;
    for pt in points {
        let support: Vec<String> = pt.support.indices().iter().map(|i| (i + 1).to_string()).collect();
        let mut rec = vec![
            num(pt.arclength),
            num(pt.lambda),
            num(pt.c),
            pt.class_q.to_string(),
            pt.class_p.to_string(),
            support.join(";"),
        ];
        rec.extend(pt.beta.iter().map(|&b| num(b)));
        w.write_record(&rec)?;
    }
    let bytes = w.into_inner().map_err(|e| IoError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is ASCII"))
}

pub fn path_to_csv(path: &Path) -> Result<String, IoError> {
    let n = path.terminal.location.beta.len();
    points_to_csv(&path.points(), n)
}

pub fn points_from_csv(text: &str) -> Result<Vec<PathPoint>, IoError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |message: String| IoError::Row { row: row + 1, message };
        let f = |k: usize| -> Result<f64, IoError> {
            rec.get(k)
                .ok_or_else(|| bad(format!("missing column {k}")))?
                .parse::<f64>()
                .map_err(|e| bad(e.to_string()))
        };
        let tag = |k: usize| -> Result<Tag, IoError> {
            let s = rec.get(k).unwrap_or("");
            Tag::parse(s).ok_or_else(|| bad(format!("unknown tag {s:?}")))
        };
        let support_field = rec.get(5).ok_or_else(|| bad("missing support".into()))?;
        let indices: Result<Vec<usize>, _> = support_field
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().map_err(|e| bad(e.to_string())).and_then(|i| {
                i.checked_sub(1).ok_or_else(|| bad("support indices are 1-based".into()))
            }))
            .collect();
        let beta: Result<Vec<f64>, IoError> = (6..rec.len()).map(f).collect();
        out.push(PathPoint {
            arclength: f(0)?,
            lambda: f(1)?,
            c: f(2)?,
            class_q: tag(3)?,
            class_p: tag(4)?,
            support: Support::new(indices?),
            beta: beta?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProblemInstance;
    use crate::strategies::greedy_path;
    use crate::tracer::TraceSettings;

    fn sample_path() -> Path {
        let inst = ProblemInstance::from_json_str(r#"{"G": [[1,0],[0,1]], "beta_star": [2,1], "p": 0.5}"#).unwrap();
        greedy_path(&inst, false, &TraceSettings::default()).unwrap()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let path = sample_path();
        let text = path_to_json(&path).unwrap();
        assert!(text.contains("\"format\": \"lp-critpath/1\""));
        let back = path_from_json(&text).unwrap();
        assert_eq!(back, path);
    }

    #[test]
    fn json_rejects_other_formats() {
        let text = path_to_json(&sample_path()).unwrap().replace(PATH_FORMAT, "lp-critpath/0");
        assert!(matches!(path_from_json(&text), Err(IoError::Format(_))));
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let path = sample_path();
        let text = path_to_csv(&path).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "arclength,lambda,c,class_Q,class_P,support,beta_1,beta_2");
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("0.0000000000000000e0,"));
        let back = points_from_csv(&text).unwrap();
        assert_eq!(back, path.points());
        assert!(text.lines().any(|l| l.contains(",1;2,")));
    }
}
