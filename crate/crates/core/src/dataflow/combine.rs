use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::Matrix;
use crate::oracle::dense_combine;
use crate::scalar::Element;

/// Weight-stationary systolic array dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystolicSpec {
    pub rows: usize,
    pub cols: usize,
}

impl Default for SystolicSpec {
    fn default() -> Self {
        SystolicSpec { rows: 32, cols: 32 }
    }
}

impl SystolicSpec {
    /// Fold model for an `(m x k) * (k x n)` product: each of the
    /// `ceil(m/R) * ceil(n/C)` folds streams `k` operands plus `R + C - 2`
    /// fill and drain cycles.
    pub fn cycles(&self, m: usize, k: usize, n: usize) -> u64 {
        if m == 0 || n == 0 {
            return 0;
        }
        let folds = m.div_ceil(self.rows) * n.div_ceil(self.cols);
        (folds * (k + self.rows + self.cols - 2)) as u64
    }
}

/// Combination phase `X * W` on the systolic array.
pub fn run_combination<T: Element>(
    features: &Matrix<T>,
    weights: &Matrix<T>,
    spec: &SystolicSpec,
) -> Result<(Matrix<T>, u64)> {
    let out = dense_combine(features, weights)?;
    let cycles = spec.cycles(features.rows(), features.cols(), weights.cols());
    Ok((out, cycles))
}
