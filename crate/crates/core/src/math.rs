//! Minimal dense numerics: row-major matrices, affine maps, softmax and
//! weighted quantiles. Everything is `f64`; the model is small enough that
//! there is no reason to trade precision for speed.

use crate::error::{PrismError, Result};
use serde::{Deserialize, Serialize};

/// Dense row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Serde-facing mirror of [`Matrix`]; deserialization re-validates the
/// shape and finiteness invariants.
#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = PrismError;
    fn try_from(raw: RawMatrix) -> Result<Matrix> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<Matrix> for RawMatrix {
    fn from(m: Matrix) -> RawMatrix {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl Matrix {
    /// Builds a matrix, checking that `data` has `rows * cols` entries and
    /// that every entry is finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(PrismError::Shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(PrismError::Numeric(format!(
                "non-finite value {} at flat index {i} of a {rows}x{cols} matrix",
                data[i]
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(PrismError::Shape(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(n, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    /// Contiguous view of row `r`.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copy of column `c`.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// `weights * input + bias` for a `[out x in]` weight matrix.
pub fn affine(weights: &Matrix, bias: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    if weights.cols() != input.len() || weights.rows() != bias.len() {
        return Err(PrismError::Shape(format!(
            "affine: weights {}x{}, bias {}, input {}",
            weights.rows(),
            weights.cols(),
            bias.len(),
            input.len()
        )));
    }
    let out = (0..weights.rows())
        .map(|o| {
            let row = weights.row(o);
            let mut acc = bias[o];
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            acc
        })
        .collect();
    Ok(out)
}

/// Numerically stable softmax: the maximum logit is subtracted before
/// exponentiation so large logits cannot overflow.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(PrismError::Shape("softmax of an empty vector".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `log(sum(exp(logits)))` with max-subtraction.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
}

/// Lower weighted quantile: sort values ascending (stable), walk the
/// cumulative weight, and return the first value whose cumulative weight
/// reaches `q`. No interpolation.
pub fn weighted_quantile(values: &[f64], weights: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || values.len() != weights.len() {
        return Err(PrismError::Shape(format!(
            "weighted_quantile: {} values, {} weights",
            values.len(),
            weights.len()
        )));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(PrismError::Validation(format!(
            "quantile level {q} outside [0, 1]"
        )));
    }
    let mut sum = 0.0;
    for &w in weights {
        if w < 0.0 {
            return Err(PrismError::Validation(format!("negative weight {w}")));
        }
        sum += w;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(PrismError::Validation(format!(
            "weights sum to {sum}, expected 1 within 1e-9"
        )));
    }

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));

    let mut cum = 0.0;
    for &i in &order {
        cum += weights[i];
        if cum >= q {
            return Ok(values[i]);
        }
    }
    // Rounding can leave the final cumulative weight a hair below q = 1.
    Ok(values[*order.last().expect("nonempty")])
}
