//! Reading regression data from CSV.
//!
//! A header row is required. The response column is chosen by name and every
//! other column is a predictor; no intercept is added.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::GramAccumulator;
use crate::types::Dataset;

/// Rows per chunk handed to the Gram accumulator.
pub const CHUNK_ROWS: usize = 4096;

/// Column means and scales removed by `--standardize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
    pub response_mean: f64,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub predictors: Vec<String>,
    pub response: String,
    pub standardization: Option<Standardization>,
}

pub fn read_csv_path(path: &Path, response: &str, standardize: bool) -> Result<LoadedData> {
    let file = std::fs::File::open(path)?;
    read_csv(file, response, standardize)
}

/// Parses a CSV data file; ragged rows and non-numeric cells are rejected with
/// their line number.
pub fn read_csv<R: Read>(reader: R, response: &str, standardize: bool) -> Result<LoadedData> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let target = headers
        .iter()
        .position(|h| h == response)
        .ok_or_else(|| Error::InvalidConfig(format!("no column named {response:?} in header")))?;
    let predictors: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, h)| h.clone())
        .collect();
    let p = predictors.len();
    if p == 0 {
        return Err(Error::InsufficientData("no predictor columns".into()));
    }

    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != headers.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (i, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column {:?}: {cell:?} is not a number", headers[i]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column {:?}: non-finite value", headers[i]),
                });
            }
            if i == target {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = ys.len();
    if n == 0 {
        return Err(Error::InsufficientData("no data rows".into()));
    }

    let standardization = standardize.then(|| standardize_in_place(&mut xs, &mut ys, p)).transpose()?;
    let mut acc = GramAccumulator::new(p);
    for (xc, yc) in xs.chunks(CHUNK_ROWS * p).zip(ys.chunks(CHUNK_ROWS)) {
        acc.ingest_chunk(
            &DMatrix::from_row_slice(yc.len(), p, xc),
            &DVector::from_column_slice(yc),
        )?;
    }
    let dataset = Dataset::with_accumulator(
        DMatrix::from_row_slice(n, p, &xs),
        DVector::from_vec(ys),
        &acc,
    )?;
    Ok(LoadedData {
        dataset,
        predictors,
        response: response.to_owned(),
        standardization,
    })
}

// Centers every column and the response, then scales predictors to unit
// variance (divisor n).
fn standardize_in_place(xs: &mut [f64], ys: &mut [f64], p: usize) -> Result<Standardization> {
    let n = ys.len() as f64;
    let mut means = vec![0.0; p];
    for row in xs.chunks(p) {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v / n;
        }
    }
    let mut scales = vec![0.0; p];
    for row in xs.chunks(p) {
        for ((s, v), m) in scales.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m) / n;
        }
    }
    for (j, s) in scales.iter_mut().enumerate() {
        *s = s.sqrt();
        if !(*s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "predictor column {j} is constant and cannot be standardized"
            )));
        }
    }
    for row in xs.chunks_mut(p) {
        for ((v, m), s) in row.iter_mut().zip(&means).zip(&scales) {
            *v = (*v - m) / s;
        }
    }
    let response_mean = ys.iter().sum::<f64>() / n;
    ys.iter_mut().for_each(|y| *y -= response_mean);
    Ok(Standardization {
        means,
        scales,
        response_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_named_response() {
        let text = "a,y,b\n1,2,3\n4,5,6\n";
        let d = read_csv(text.as_bytes(), "y", false).unwrap();
        assert_eq!(d.predictors, vec!["a", "b"]);
        assert_eq!(d.dataset.y().as_slice(), &[2.0, 5.0]);
        assert_eq!(d.dataset.x()[(1, 1)], 6.0);
        assert_eq!(d.dataset.xty()[0], (2.0 + 20.0) / 2.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = read_csv("a,y\n1,2\n3\n".as_bytes(), "y", false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_csv("a,y\n1,2\n3,x\n".as_bytes(), "y", false).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(read_csv("a,y\n1,2\n".as_bytes(), "z", false).is_err());
        assert!(read_csv("y\n1\n".as_bytes(), "y", false).is_err());
        assert!(read_csv("a,y\n".as_bytes(), "y", false).is_err());
    }

    #[test]
    fn standardizes_columns() {
        let d = read_csv("a,y\n1,1\n3,2\n5,6\n".as_bytes(), "y", true).unwrap();
        assert!((d.dataset.gram()[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(d.dataset.x().column(0).sum().abs() < 1e-12);
        assert!(d.dataset.y().sum().abs() < 1e-12);
        assert!(read_csv("a,y\n1,1\n1,2\n".as_bytes(), "y", true).is_err());
    }
}
