//! Dense row-major f64 matrix with the handful of operations the rest of the
//! crate needs. Not a general linear-algebra library.

use crate::error::{ColtError, Result};

/// Dense matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data, validating shape and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ColtError::Parameter(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(ColtError::DegenerateInput(format!(
                "non-finite entry at row {} col {}",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Stacks equal-length rows into a matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(ColtError::Parameter(format!(
                    "row {} has length {}, expected {}",
                    i,
                    r.len(),
                    cols
                )));
            }
            data.extend_from_slice(r);
        }
        Matrix::from_vec(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = other.row(k);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`. Both operands are scanned row-wise, which keeps the
    /// similarity-matrix computation cache friendly.
    pub fn matmul_transpose(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_transpose shape mismatch");
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            for j in 0..other.rows {
                let b_row = other.row(j);
                let dot: f64 = a_row.iter().zip(b_row).map(|(a, b)| a * b).sum();
                out.set(i, j, dot);
            }
        }
        out
    }

    /// `self^T * other`.
    pub fn transpose_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "transpose_matmul shape mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// L2 norm of each row.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

/// Scales every row of `m` to unit L2 norm.
///
/// Fails with the offending row index when a row has zero norm.
pub fn row_normalize(m: &Matrix) -> Result<Matrix> {
    let mut out = m.clone();
    for i in 0..m.rows() {
        let norm: f64 = m.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(ColtError::DegenerateInput(format!(
                "zero-norm row {} cannot be normalized",
                i
            )));
        }
        for v in out.row_mut(i) {
            *v /= norm;
        }
    }
    Ok(out)
}

/// Cosine similarity of two nonzero vectors; result clamped to [-1, 1].
pub fn cosine_sim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(ColtError::Parameter(format!(
            "cosine_sim length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let norm_a: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(ColtError::DegenerateInput(
            "cosine_sim on zero vector".to_string(),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

/// Temperature softmax with max-subtraction for stability.
pub fn softmax_temp(v: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(ColtError::Parameter(format!(
            "softmax temperature must be positive, got {}",
            tau
        )));
    }
    if v.is_empty() {
        return Err(ColtError::Parameter("softmax of empty vector".to_string()));
    }
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| ((x - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;
    use proptest::prelude::*;

    #[test]
    fn row_normalize_three_four_five() {
        let m = Matrix::from_vec(1, 2, vec![3.0, 4.0]).unwrap();
        let n = row_normalize(&m).unwrap();
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((n.get(0, 1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn row_normalize_already_unit() {
        let m = Matrix::from_vec(1, 3, vec![1.0, 0.0, 0.0]).unwrap();
        let n = row_normalize(&m).unwrap();
        assert_eq!(n.row(0), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn row_normalize_random_matrix_unit_norms() {
        let mut rng = RngStream::new(7);
        let data: Vec<f64> = (0..40).map(|_| rng.normal()).collect();
        let m = Matrix::from_vec(5, 8, data).unwrap();
        let n = row_normalize(&m).unwrap();
        // independent recomputation of each norm
        for i in 0..5 {
            let norm: f64 = n.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12, "row {} norm {}", i, norm);
        }
    }

    #[test]
    fn row_normalize_zero_row_errors_with_index() {
        let m = Matrix::from_vec(2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let err = row_normalize(&m).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn cosine_identical_and_orthogonal() {
        assert_eq!(cosine_sim(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_hand_value() {
        // 4 / (sqrt(5) * sqrt(5)) = 0.8
        let v = cosine_sim(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        assert!((v - 0.8).abs() < 1e-15);
    }

    #[test]
    fn cosine_zero_vector_errors() {
        assert!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn softmax_equal_inputs_uniform() {
        for tau in [0.01, 1.0, 100.0] {
            let p = softmax_temp(&[2.5, 2.5, 2.5], tau).unwrap();
            for v in &p {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn softmax_log3_case() {
        let p = softmax_temp(&[0.0, 3.0f64.ln()], 1.0).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12);
        assert!((p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_no_overflow() {
        let p = softmax_temp(&[1000.0, 0.0], 1.0).unwrap();
        assert_eq!(p[0], 1.0);
        assert_eq!(p[1], 0.0);
    }

    #[test]
    fn softmax_rejects_bad_tau() {
        assert!(softmax_temp(&[1.0], 0.0).is_err());
        assert!(softmax_temp(&[1.0], -1.0).is_err());
    }

    #[test]
    fn softmax_sums_to_one_many_random_vectors() {
        let mut rng = RngStream::new(42);
        for tau in [0.01, 0.5, 1.0, 100.0] {
            for _ in 0..2_500 {
                let len = 1 + rng.range(12);
                let v: Vec<f64> = (0..len).map(|_| rng.normal() * 10.0).collect();
                let p = softmax_temp(&v, tau).unwrap();
                let sum: f64 = p.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
                assert!(p.iter().all(|&x| x >= 0.0));
            }
        }
    }

    #[test]
    fn matmul_against_hand_product() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
        let d = a.matmul_transpose(&a);
        assert_eq!(d.get(0, 1), 32.0);
        let e = a.transpose_matmul(&a);
        assert_eq!(e.get(0, 0), 17.0);
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_bounded(
            a in prop::collection::vec(-100.0f64..100.0, 2..6),
            b in prop::collection::vec(-100.0f64..100.0, 2..6),
        ) {
            let n = a.len().min(b.len());
            let (a, b) = (&a[..n], &b[..n]);
            if a.iter().any(|&x| x != 0.0) && b.iter().any(|&x| x != 0.0) {
                let ab = cosine_sim(a, b).unwrap();
                let ba = cosine_sim(b, a).unwrap();
                prop_assert!((ab - ba).abs() < 1e-12);
                prop_assert!(ab.abs() <= 1.0);
            }
        }
    }
}
