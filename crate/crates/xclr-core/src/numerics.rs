//! Dense row-major matrices and the probability kernels built on them.
//!
//! All math is `f64`. Operations validate their inputs and return [`Error`]
//! instead of panicking, so bad file data surfaces as a diagnosable error.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Smallest Euclidean norm treated as a usable direction.
pub const MIN_NORM: f64 = 1e-12;

/// Dense row-major matrix of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix of the given shape.
    #[must_use]
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Wraps a row-major buffer. The length must equal `rows * cols` and
    /// every entry must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DataLength {
                expected: rows * cols,
                got: data.len(),
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("matrix data"));
        }
        Ok(Matrix { rows, cols, data })
    }

    #[must_use]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[must_use]
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Entry at `(r, c)`. Panics on out-of-range indices, as slices do.
    #[inline]
    #[must_use]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        assert!(r < self.rows && c < self.cols, "index out of range");
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        assert!(r < self.rows && c < self.cols, "index out of range");
        self.data[r * self.cols + c] = v;
    }

    /// Row `r` as a contiguous slice.
    #[inline]
    #[must_use]
    pub fn row(&self, r: usize) -> &[f64] {
        assert!(r < self.rows, "row out of range");
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        assert!(r < self.rows, "row out of range");
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// The whole backing buffer in row-major order.
    #[must_use]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[must_use]
    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self * other`. Inner dimensions must agree.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch {
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        // i-k-j order keeps both inner accesses sequential.
        for i in 0..self.rows {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &aik) in a_row.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row.iter()) {
                    *o += aik * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`. Column counts must agree.
    pub fn matmul_transpose_b(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimMismatch {
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = &mut out.data[i * other.rows..(i + 1) * other.rows];
            for j in 0..other.rows {
                out_row[j] = dot(a_row, other.row(j));
            }
        }
        Ok(out)
    }

    /// Adds `scale * other` in place. Shapes must match.
    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimMismatch {
                left: (self.rows, self.cols),
                right: (other.rows, other.cols),
            });
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Sum of squared entries.
    #[must_use]
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Plain dot product of equal-length slices.
#[inline]
#[must_use]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// Euclidean norm of a slice.
#[inline]
#[must_use]
pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// Returns a copy of `m` with every row scaled to unit Euclidean norm.
///
/// Rows with norm below [`MIN_NORM`] are rejected rather than silently
/// zeroed: a zero row has no direction.
pub fn l2_normalize_rows(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let n = norm(m.row(r));
        if n < MIN_NORM {
            return Err(Error::ZeroNormRow(r));
        }
        for v in out.row_mut(r) {
            *v /= n;
        }
    }
    Ok(out)
}

/// Cosine similarity between every row of `a` and every row of `b`.
///
/// Output is `a.rows() x b.rows()` with entries clamped to `[-1, 1]` so
/// rounding can never push a similarity outside the valid range.
pub fn cosine_similarity_matrix(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::DimMismatch {
            left: (a.rows(), a.cols()),
            right: (b.rows(), b.cols()),
        });
    }
    let an = l2_normalize_rows(a)?;
    let bn = l2_normalize_rows(b)?;
    let mut out = an.matmul_transpose_b(&bn)?;
    for v in out.data_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    Ok(out)
}

/// A probability distribution over row positions, with one position
/// optionally excluded from the support (used for self-exclusion).
///
/// Invariants: values are in `[0, 1]`, sum to 1 within 1e-9, and the
/// excluded position holds exactly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbRow {
    values: Vec<f64>,
    excluded_index: Option<usize>,
}

impl ProbRow {
    /// Validates and wraps an explicit distribution.
    pub fn new(values: Vec<f64>, excluded_index: Option<usize>) -> Result<Self> {
        if let Some(e) = excluded_index {
            if e >= values.len() {
                return Err(Error::IndexOutOfRange {
                    index: e,
                    len: values.len(),
                });
            }
            if values[e] != 0.0 {
                return Err(Error::SupportMismatch);
            }
        }
        let mut sum = 0.0;
        for &v in &values {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::NonFinite("probability value"));
            }
            sum += v;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("probabilities must sum to 1"));
        }
        Ok(ProbRow {
            values,
            excluded_index,
        })
    }

    /// Uniform distribution over all positions except the excluded one.
    pub fn uniform(len: usize, excluded_index: Option<usize>) -> Result<Self> {
        let support = len - usize::from(excluded_index.is_some());
        if support == 0 {
            return Err(Error::EmptySupport);
        }
        let p = 1.0 / support as f64;
        let mut values = vec![p; len];
        if let Some(e) = excluded_index {
            if e >= len {
                return Err(Error::IndexOutOfRange { index: e, len });
            }
            values[e] = 0.0;
        }
        Ok(ProbRow {
            values,
            excluded_index,
        })
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[must_use]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    #[must_use]
    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    #[must_use]
    pub fn excluded_index(&self) -> Option<usize> {
        self.excluded_index
    }
}

/// Temperature softmax over one row, optionally excluding one position.
///
/// The maximum over the support is subtracted before exponentiation, so
/// small temperatures saturate cleanly instead of overflowing.
pub fn row_softmax(row: &[f64], temperature: f64, excluded: Option<usize>) -> Result<ProbRow> {
    if temperature.is_nan() || temperature <= 0.0 {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    if !row.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("softmax input"));
    }
    if let Some(e) = excluded {
        if e >= row.len() {
            return Err(Error::IndexOutOfRange {
                index: e,
                len: row.len(),
            });
        }
    }
    let in_support = |j: usize| Some(j) != excluded;
    let mut max = f64::NEG_INFINITY;
    for (j, &v) in row.iter().enumerate() {
        if in_support(j) && v > max {
            max = v;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptySupport);
    }
    let mut values = vec![0.0; row.len()];
    let mut sum = 0.0;
    for (j, &v) in row.iter().enumerate() {
        if in_support(j) {
            let e = libm::exp((v - max) / temperature);
            values[j] = e;
            sum += e;
        }
    }
    for v in &mut values {
        *v /= sum;
    }
    Ok(ProbRow {
        values,
        excluded_index: excluded,
    })
}

/// Cross-entropy `H(target, predicted) = -sum_j target_j ln predicted_j`.
///
/// The two rows must agree on length and excluded position, and the target
/// may only place mass where the prediction is strictly positive.
pub fn cross_entropy_row(target: &ProbRow, predicted: &ProbRow) -> Result<f64> {
    if target.len() != predicted.len() {
        return Err(Error::SizeMismatch {
            left: target.len(),
            right: predicted.len(),
        });
    }
    if target.excluded_index() != predicted.excluded_index() {
        return Err(Error::SupportMismatch);
    }
    let mut acc = 0.0;
    for (t, p) in target.values().iter().zip(predicted.values().iter()) {
        if *t > 0.0 {
            if *p <= 0.0 {
                return Err(Error::SupportMismatch);
            }
            acc -= t * libm::log(*p);
        }
    }
    Ok(acc)
}
