//! Reading and writing point clouds.
//!
//! JSON: `{"points": [[x1, ...], ...], "weights": [w, ...]}`.
//! CSV: one atom per row, `w,x1,...,xd`, with an optional header row.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureFile {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// Reads a measure, choosing the format by file extension (`.csv` or JSON otherwise).
pub fn read_measure(path: &Path) -> Result<DiscreteMeasure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        parse_csv(&text)
    } else {
        parse_json(&text)
    }
}

/// Reads only the point rows of a measure file, without merging
/// duplicates (weights are validated and then ignored).
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let (points, weights) = if is_csv { csv_rows(&text)? } else { json_rows(&text)? };
    DiscreteMeasure::new(points.clone(), weights)?;
    Ok(points)
}

fn json_rows(text: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let file: MeasureFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if file.points.len() != file.weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} points but {} weights",
            file.points.len(),
            file.weights.len()
        )));
    }
    Ok((file.points, file.weights))
}

pub fn parse_json(text: &str) -> Result<DiscreteMeasure> {
    let (points, weights) = json_rows(text)?;
    DiscreteMeasure::new(points, weights)
}

pub fn parse_csv(text: &str) -> Result<DiscreteMeasure> {
    let (points, weights) = csv_rows(text)?;
    DiscreteMeasure::new(points, weights)
}

fn csv_rows(text: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, column: 1, message: e.to_string() }
        })?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if k == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let mut values = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let bad = |message: String| Error::Parse { line, column: col + 1, message };
            let v: f64 = field.parse().map_err(|_| bad(format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite value `{field}`")));
            }
            values.push(v);
        }
        if values.len() < 2 {
            return Err(Error::Parse { line, column: 1, message: "expected w,x1,...,xd".into() });
        }
        weights.push(values[0]);
        points.push(values[1..].to_vec());
    }
    Ok((points, weights))
}

pub fn to_json(measure: &DiscreteMeasure) -> String {
    let file = MeasureFile {
        points: measure.points().map(<[f64]>::to_vec).collect(),
        weights: measure.weights().to_vec(),
    };
    serde_json::to_string(&file).expect("finite floats serialize")
}

pub fn write_measure(path: &Path, measure: &DiscreteMeasure) -> Result<()> {
    std::fs::write(path, to_json(measure))
        .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let m = DiscreteMeasure::new(vec![vec![0.1, 2.0], vec![-3.5, 1e-300]], vec![0.25, 0.75]).unwrap();
        assert_eq!(parse_json(&to_json(&m)).unwrap(), m);
    }

    #[test]
    fn json_reports_position() {
        let err = parse_json("{\"points\": [[0.0]],\n \"weights\": [1.0,]}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_json("{\"points\": [[1e999]], \"weights\": [1.0]}").is_err());
        assert!(parse_json("{\"points\": [[0.0]], \"weights\": [1.0, 2.0]}").is_err());
    }

    #[test]
    fn csv_with_header() {
        let m = parse_csv("w,x1,x2\n0.5,0,1\n0.5,2,3\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.point(1), &[2.0, 3.0]);
    }

    #[test]
    fn csv_rejects_non_finite_with_position() {
        let err = parse_csv("0.5,0\n0.5,NaN\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: 2, .. }), "{err}");
        let err = parse_csv("0.5,0\n0.5,inf\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let err = parse_csv("0.5,0\n0.5,abc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, column: 2, .. }));
    }
}
