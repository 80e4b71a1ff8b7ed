//! Dense row-major matrices and the handful of kernels everything else
//! builds on.
//!
//! All arithmetic is f64. Kernels are written so that the accumulation
//! order of every output element is fixed by the loop structure alone:
//! results are bit-identical run to run and independent of the SIMD width
//! the compiler picks (no reassociation, no FMA contraction).

use crate::error::{Error, Result};

/// Tile size over the shared dimension; keeps the streamed operand resident
/// in L2 while a full pass over the output runs.
const K_TILE: usize = 128;
/// Row tile for the transposed-operand kernels.
const I_TILE: usize = 32;

/// Dense 2-D array of f64 in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Zero matrix of the given shape.
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from row-major data, validating length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::BadDataLength {
                rows,
                cols,
                len: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Build from nested rows; rows must be equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::BadDataLength {
                    rows: r,
                    cols: c,
                    len: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Matrix::from_vec(r, c, data)
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub(crate) fn new_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Matrix {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Matrix product `self * other`.
    ///
    /// ikj loop order with tiling over the shared dimension; each output
    /// element accumulates its terms in increasing-k order.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let (m, p, n) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        let mut k0 = 0;
        while k0 < p {
            let k1 = (k0 + K_TILE).min(p);
            for i in 0..m {
                let a_row = self.row(i);
                let c_row = &mut out[i * n..(i + 1) * n];
                for k in k0..k1 {
                    let a_ik = a_row[k];
                    if a_ik == 0.0 {
                        continue;
                    }
                    let b_row = &other.data[k * n..(k + 1) * n];
                    for (c, &b) in c_row.iter_mut().zip(b_row) {
                        *c += a_ik * b;
                    }
                }
            }
            k0 = k1;
        }
        Ok(Matrix::new_unchecked(m, n, out))
    }

    /// `self * other^T` without materializing the transpose.
    pub(crate) fn matmul_transpose_b(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::ShapeMismatch {
                op: "matmul_transpose_b",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let (m, n) = (self.rows, other.rows);
        let mut out = vec![0.0; m * n];
        let mut i0 = 0;
        while i0 < m {
            let i1 = (i0 + I_TILE).min(m);
            for j in 0..n {
                let b_row = other.row(j);
                for i in i0..i1 {
                    out[i * n + j] = dot(self.row(i), b_row);
                }
            }
            i0 = i1;
        }
        Ok(Matrix::new_unchecked(m, n, out))
    }

    /// `self^T * other` without materializing the transpose.
    pub(crate) fn matmul_transpose_a(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul_transpose_a",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let (m, p, n) = (self.cols, self.rows, other.cols);
        let mut out = vec![0.0; m * n];
        let mut t0 = 0;
        while t0 < p {
            let t1 = (t0 + I_TILE).min(p);
            for k in 0..m {
                let c_row = &mut out[k * n..(k + 1) * n];
                for i in t0..t1 {
                    let a_ik = self.data[i * m + k];
                    if a_ik == 0.0 {
                        continue;
                    }
                    let b_row = &other.data[i * n..(i + 1) * n];
                    for (c, &b) in c_row.iter_mut().zip(b_row) {
                        *c += a_ik * b;
                    }
                }
            }
            t0 = t1;
        }
        Ok(Matrix::new_unchecked(m, n, out))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix::new_unchecked(self.cols, self.rows, out)
    }

    /// Square root of the sum of squared entries.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Elementwise max(0, x).
    pub fn relu(&self) -> Matrix {
        let data = self.data.iter().map(|&x| x.max(0.0)).collect();
        Matrix::new_unchecked(self.rows, self.cols, data)
    }

    /// Elementwise product, in place.
    pub(crate) fn hadamard_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a *= b;
        }
    }

    /// `self += alpha * other`.
    pub(crate) fn add_scaled_assign(&mut self, alpha: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub(crate) fn scale_assign(&mut self, alpha: f64) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    /// Difference `self - other`.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op: "sub",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: other.rows,
                right_cols: other.cols,
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Matrix::new_unchecked(self.rows, self.cols, data))
    }

    /// Add a row vector to every row.
    pub(crate) fn add_row_broadcast_assign(&mut self, bias: &[f64]) {
        debug_assert_eq!(self.cols, bias.len());
        for i in 0..self.rows {
            for (a, &b) in self.row_mut(i).iter_mut().zip(bias) {
                *a += b;
            }
        }
    }

    /// Euclidean norm of column `j`.
    pub(crate) fn col_norm(&self, j: usize) -> f64 {
        let mut s = 0.0;
        for i in 0..self.rows {
            let x = self.data[i * self.cols + j];
            s += x * x;
        }
        s.sqrt()
    }

    /// Rescale any column whose norm exceeds `c` down to norm `c`.
    pub(crate) fn clamp_col_norms(&mut self, c: f64) {
        for j in 0..self.cols {
            let norm = self.col_norm(j);
            if norm > c {
                let scale = c / norm;
                for i in 0..self.rows {
                    self.data[i * self.cols + j] *= scale;
                }
            }
        }
    }

    /// Index of the row maximum; ties break toward the lowest index.
    pub fn argmax_row(&self, i: usize) -> usize {
        let row = self.row(i);
        let mut best = 0;
        let mut best_v = row[0];
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > best_v {
                best_v = v;
                best = j;
            }
        }
        best
    }
}

/// Dot product with four fixed-order accumulator lanes.
///
/// The lane layout makes the summation order explicit so the result does
/// not depend on compiler vectorization choices.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for t in 0..chunks {
        let i = 4 * t;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix {
        let data = (0..rows * cols).map(|_| rng.next_gaussian()).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// Triple-loop reference product.
    fn matmul_oracle(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut s = 0.0;
                for k in 0..a.cols() {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, s);
            }
        }
        c
    }

    #[test]
    fn identity_times_a_is_a() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let i2 = Matrix::identity(2);
        let prod = i2.matmul(&a).unwrap();
        assert_eq!(prod, a);
    }

    #[test]
    fn hand_product_1x2_2x1() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), (1, 1));
        assert_eq!(c.get(0, 0), 11.0);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = Rng::new(20240301);
        let a = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let fast = a.matmul(&b).unwrap();
        let slow = matmul_oracle(&a, &b);
        for (x, y) in fast.data().iter().zip(slow.data()) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(4, 2);
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("2x3") && msg.contains("4x2"), "{msg}");
    }

    #[test]
    fn matmul_identity_is_exact() {
        let mut rng = Rng::new(5);
        let a = random_matrix(&mut rng, 7, 7);
        let i = Matrix::identity(7);
        let prod = a.matmul(&i).unwrap();
        assert_eq!(prod.shape(), a.shape());
        for (x, y) in prod.data().iter().zip(a.data()) {
            assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn matmul_associativity() {
        let mut rng = Rng::new(99);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 6, 9);
            let b = random_matrix(&mut rng, 9, 5);
            let c = random_matrix(&mut rng, 5, 8);
            let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
            let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
            let denom = left.frobenius_norm().max(1e-30);
            let diff = left.sub(&right).unwrap().frobenius_norm();
            assert!(diff / denom < 1e-10, "relative {}", diff / denom);
        }
    }

    #[test]
    fn transpose_kernels_match_explicit_transpose() {
        let mut rng = Rng::new(7);
        let a = random_matrix(&mut rng, 37, 19);
        let b = random_matrix(&mut rng, 41, 19);
        let fast = a.matmul_transpose_b(&b).unwrap();
        let slow = a.matmul(&b.transpose()).unwrap();
        let diff = fast.sub(&slow).unwrap().frobenius_norm();
        assert!(diff / slow.frobenius_norm() < 1e-13);

        let c = random_matrix(&mut rng, 37, 23);
        let fast = a.matmul_transpose_a(&c).unwrap();
        let slow = a.transpose().matmul(&c).unwrap();
        let diff = fast.sub(&slow).unwrap().frobenius_norm();
        assert!(diff / slow.frobenius_norm() < 1e-13);
    }

    #[test]
    fn frobenius_zero_matrix() {
        assert_eq!(Matrix::zeros(3, 4).frobenius_norm(), 0.0);
    }

    #[test]
    fn frobenius_three_four_five() {
        let m = Matrix::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(m.frobenius_norm(), 5.0);
    }

    #[test]
    fn frobenius_matches_brute_force() {
        let mut rng = Rng::new(11);
        let m = random_matrix(&mut rng, 4, 4);
        let brute: f64 = m
            .data()
            .iter()
            .map(|x| x * x)
            .fold(0.0, |acc, x| acc + x)
            .sqrt();
        assert!((m.frobenius_norm() - brute).abs() < 1e-12);
    }

    #[test]
    fn relu_elementwise() {
        let m = Matrix::from_rows(&[vec![-1.0, 0.0, 2.0]]).unwrap();
        assert_eq!(m.relu().data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_all_negative_gives_zero_matrix() {
        let m = Matrix::from_rows(&[vec![-1.0, -5.0], vec![-0.5, -2.0]]).unwrap();
        assert_eq!(m.relu(), Matrix::zeros(2, 2));
    }

    #[test]
    fn relu_idempotent() {
        let mut rng = Rng::new(17);
        let m = random_matrix(&mut rng, 5, 6);
        let once = m.relu();
        assert_eq!(once.relu(), once);
    }

    #[test]
    fn from_vec_rejects_bad_length_and_nan() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn clamp_col_norms_bounds_every_column() {
        let mut rng = Rng::new(23);
        let mut m = random_matrix(&mut rng, 10, 6);
        m.scale_assign(10.0);
        m.clamp_col_norms(0.5);
        for j in 0..6 {
            assert!(m.col_norm(j) <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn argmax_ties_break_low() {
        let m = Matrix::from_rows(&[vec![1.0, 3.0, 3.0, 0.0]]).unwrap();
        assert_eq!(m.argmax_row(0), 1);
    }
}
