use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Observed units: covariates `x` (one row per unit), binary treatment `a`
/// and scalar outcome `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: DMatrix<f64>,
    a: Vec<u8>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, a: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        let n = x.nrows();
        if a.len() != n || y.len() != n {
            return Err(Error::input(format!(
                "dataset lengths disagree: x has {n} rows, a has {}, y has {}",
                a.len(),
                y.len()
            )));
        }
        if let Some(i) = a.iter().position(|&v| v > 1) {
            return Err(Error::input(format!(
                "treatment must be 0 or 1, unit {i} has {}",
                a[i]
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("outcome of unit {i} is not finite")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("covariates contain non-finite values"));
        }
        Ok(Self { x, a, y })
    }

    /// Builds a dataset from row vectors of covariates.
    pub fn from_rows(rows: &[Vec<f64>], a: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::input(format!(
                "covariate row {i} has {} entries, expected {d}",
                rows[i].len()
            )));
        }
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(x, a, y)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn treatment(&self) -> &[u8] {
        &self.a
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn covariates_of(&self, i: usize) -> Vec<f64> {
        self.x.row(i).iter().copied().collect()
    }

    pub fn n_treated(&self) -> usize {
        self.a.iter().filter(|&&v| v == 1).count()
    }

    pub fn arm_indices(&self, arm: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.a[i] == arm).collect()
    }

    pub fn has_both_arms(&self) -> bool {
        let t = self.n_treated();
        t > 0 && t < self.n()
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let x = self.x.select_rows(indices);
        let a = indices.iter().map(|&i| self.a[i]).collect();
        let y = indices.iter().map(|&i| self.y[i]).collect();
        Dataset { x, a, y }
    }

    pub fn with_treatment(&self, a: Vec<u8>) -> Result<Dataset> {
        Dataset::new(self.x.clone(), a, self.y.clone())
    }

    pub fn with_outcomes(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(self.x.clone(), self.a.clone(), y)
    }

    pub fn into_parts(self) -> (DMatrix<f64>, Vec<u8>, Vec<f64>) {
        (self.x, self.a, self.y)
    }
}
