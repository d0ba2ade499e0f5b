//! Streaming accumulation of the sufficient statistics XᵀX, XᵀY and YᵀY.
//!
//! Chunks can be ingested on different workers and merged afterwards; only
//! the upper triangle is summed and then mirrored, so the result is exactly
//! symmetric.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramAccumulator {
    p: usize,
    sum_xtx: DMatrix<f64>,
    sum_xty: DVector<f64>,
    sum_yy: f64,
    count: usize,
}

impl GramAccumulator {
    pub fn new(p: usize) -> Self {
        Self {
            p,
            sum_xtx: DMatrix::zeros(p, p),
            sum_xty: DVector::zeros(p),
            sum_yy: 0.0,
            count: 0,
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sum_xtx(&self) -> &DMatrix<f64> {
        &self.sum_xtx
    }

    pub fn sum_xty(&self) -> &DVector<f64> {
        &self.sum_xty
    }

    pub fn sum_yy(&self) -> f64 {
        self.sum_yy
    }

    /// Adds one observation row.
    pub fn push_row(&mut self, row: &[f64], y: f64) -> Result<()> {
        if row.len() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "row has {} predictors, accumulator expects {}",
                row.len(),
                self.p
            )));
        }
        for j in 0..self.p {
            let xj = row[j];
            for k in j..self.p {
                self.sum_xtx[(j, k)] += xj * row[k];
            }
            self.sum_xty[j] += xj * y;
        }
        self.sum_yy += y * y;
        self.count += 1;
        self.mirror();
        Ok(())
    }

    /// Adds every row of a chunk. An empty chunk leaves the accumulator unchanged.
    pub fn ingest_chunk(&mut self, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
        if x.ncols() != self.p {
            return Err(Error::DimensionMismatch(format!(
                "chunk has {} columns, accumulator expects {}",
                x.ncols(),
                self.p
            )));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "chunk has {} rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        for i in 0..x.nrows() {
            let yi = y[i];
            for j in 0..self.p {
                let xj = x[(i, j)];
                for k in j..self.p {
                    self.sum_xtx[(j, k)] += xj * x[(i, k)];
                }
                self.sum_xty[j] += xj * yi;
            }
            self.sum_yy += yi * yi;
        }
        self.count += x.nrows();
        self.mirror();
        Ok(())
    }

    /// Folds another accumulator into this one.
    pub fn merge(&mut self, other: &GramAccumulator) -> Result<()> {
        if other.p != self.p {
            return Err(Error::DimensionMismatch(format!(
                "cannot merge accumulators with p = {} and p = {}",
                self.p, other.p
            )));
        }
        for j in 0..self.p {
            for k in j..self.p {
                self.sum_xtx[(j, k)] += other.sum_xtx[(j, k)];
            }
        }
        self.sum_xty += &other.sum_xty;
        self.sum_yy += other.sum_yy;
        self.count += other.count;
        self.mirror();
        Ok(())
    }

    /// Subtracts a sub-accumulator, e.g. a held-out fold from the full data.
    pub fn without(&self, part: &GramAccumulator) -> Result<GramAccumulator> {
        if part.p != self.p || part.count > self.count {
            return Err(Error::DimensionMismatch(
                "subtracted accumulator is not a part of this one".into(),
            ));
        }
        let mut out = self.clone();
        for j in 0..self.p {
            for k in j..self.p {
                out.sum_xtx[(j, k)] -= part.sum_xtx[(j, k)];
            }
        }
        out.sum_xty -= &part.sum_xty;
        out.sum_yy -= part.sum_yy;
        out.count -= part.count;
        out.mirror();
        Ok(out)
    }

    fn mirror(&mut self) {
        for j in 0..self.p {
            for k in (j + 1)..self.p {
                self.sum_xtx[(k, j)] = self.sum_xtx[(j, k)];
            }
        }
    }
}
