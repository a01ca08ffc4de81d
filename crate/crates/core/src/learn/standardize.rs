//! Per-feature standardization to zero mean and unit standard deviation.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::{Error, Result};

/// Stores per-feature mean and population standard deviation from the
/// training data. A constant column has its std treated as 1, so it maps to
/// exactly zero everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.n_rows() < 2 {
            return Err(Error::Input(format!(
                "standardizer needs at least 2 rows, got {}",
                x.n_rows()
            )));
        }
        let n = x.n_rows() as f64;
        let mut means = Vec::with_capacity(x.n_cols());
        let mut stds = Vec::with_capacity(x.n_cols());
        for j in 0..x.n_cols() {
            let mean = x.col_iter(j).sum::<f64>() / n;
            let var = x.col_iter(j).map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            means.push(mean);
            stds.push(if std > 0.0 { std } else { 1.0 });
        }
        Ok(Standardizer { means, stds })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.n_cols() != self.means.len() {
            return Err(Error::Input(format!(
                "standardizer fitted on {} features, input has {}",
                self.means.len(),
                x.n_cols()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.n_rows() {
            let row = out.row_mut(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.means[j]) / self.stds[j];
            }
        }
        Ok(out)
    }
}
