//! Dense matrices and the factorizations behind the log-density formulas.
//!
//! Two routes to a log-determinant live here: a column-pivot-free Householder
//! QR for the thin `m x n` case (the product path), and an LU with partial
//! pivoting for square matrices (the cross-validation path). Keeping them
//! algorithmically distinct is what makes the square-map equivalence check a
//! real test rather than a tautology.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Mat<F> {
    pub fn new(rows: usize, cols: usize, data: Vec<F>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape(format!(
                "{}x{} matrix needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = F::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: F) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [F] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat<F> {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat<F>) -> Result<Mat<F>> {
        if self.cols != other.rows {
            return Err(Error::shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == F::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    /// Gram matrix `A^T A` (the metric tensor when `A` is a Jacobian).
    pub fn gram(&self) -> Mat<F> {
        let mut g = Mat::zeros(self.cols, self.cols);
        for j in 0..self.cols {
            for k in j..self.cols {
                let mut s = F::zero();
                for i in 0..self.rows {
                    s += self.get(i, j) * self.get(i, k);
                }
                g.set(j, k, s);
                g.set(k, j, s);
            }
        }
        g
    }
}

/// Overflow-safe Euclidean norm of a column segment.
fn col_norm<F: Scalar>(a: &Mat<F>, col: usize, from_row: usize) -> F {
    let mut max = F::zero();
    for i in from_row..a.rows() {
        let v = a.get(i, col).abs();
        if v > max {
            max = v;
        }
    }
    if max == F::zero() {
        return F::zero();
    }
    let mut s = F::zero();
    for i in from_row..a.rows() {
        let v = a.get(i, col) / max;
        s += v * v;
    }
    max * s.sqrt()
}

/// Absolute values of the diagonal of `R` in the thin QR factorization
/// `A = QR`, computed by Householder reflections without column pivoting.
///
/// Requires `rows >= cols`. A zero column segment yields a zero diagonal
/// entry rather than an error; rank handling is the caller's concern.
pub fn householder_r_diag<F: Scalar>(a: &Mat<F>) -> Result<Vec<F>> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::shape(format!(
            "QR log-det needs rows >= cols, got {}x{}",
            m, n
        )));
    }
    let mut work = a.clone();
    let mut diag = Vec::with_capacity(n);
    let mut v = vec![F::zero(); m];

    for k in 0..n {
        let norm = col_norm(&work, k, k);
        diag.push(norm);
        if norm == F::zero() {
            continue;
        }
        // Reflector v = x - alpha*e_k with alpha = -sign(x_k)*||x||, which
        // keeps v_k = x_k - alpha free of cancellation.
        let xk = work.get(k, k);
        let alpha = if xk > F::zero() { -norm } else { norm };
        v[k] = xk - alpha;
        for i in (k + 1)..m {
            v[i] = work.get(i, k);
        }
        let mut beta = F::zero();
        for i in k..m {
            beta += v[i] * v[i];
        }
        if beta == F::zero() {
            continue;
        }
        // Apply H = I - 2 v v^T / beta to the remaining columns.
        for j in (k + 1)..n {
            let mut dot = F::zero();
            for i in k..m {
                dot += v[i] * work.get(i, j);
            }
            let scale = (dot + dot) / beta;
            for i in k..m {
                let w = work.get(i, j) - scale * v[i];
                work.set(i, j, w);
            }
        }
        work.set(k, k, alpha);
        for i in (k + 1)..m {
            work.set(i, k, F::zero());
        }
    }
    Ok(diag)
}

/// `sum_i log |r_ii|` over the thin-QR diagonal; `-inf` when any entry is
/// exactly zero. The smallest `|r_ii|` is returned alongside for rank checks.
pub fn qr_log_abs_det<F: Scalar>(a: &Mat<F>) -> Result<(F, F)> {
    let diag = householder_r_diag(a)?;
    let mut sum = F::zero();
    let mut min = F::infinity();
    for r in &diag {
        if *r < min {
            min = *r;
        }
        sum = sum + r.ln();
    }
    Ok((sum, min))
}

/// `log |det A|` of a square matrix via LU with partial pivoting.
///
/// Errors when a pivot is exactly zero (structurally singular).
pub fn lu_log_abs_det<F: Scalar>(a: &Mat<F>) -> Result<F> {
    if a.rows() != a.cols() {
        return Err(Error::shape(format!(
            "LU determinant needs a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let mut work = a.clone();
    let mut log_det = F::zero();
    for k in 0..n {
        let mut pivot_row = k;
        let mut pivot_val = work.get(k, k).abs();
        for i in (k + 1)..n {
            let v = work.get(i, k).abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = i;
            }
        }
        if pivot_val == F::zero() {
            return Err(Error::numerical("singular matrix in LU determinant"));
        }
        if pivot_row != k {
            for j in 0..n {
                let a = work.get(k, j);
                let b = work.get(pivot_row, j);
                work.set(k, j, b);
                work.set(pivot_row, j, a);
            }
        }
        let pivot = work.get(k, k);
        log_det = log_det + pivot.abs().ln();
        for i in (k + 1)..n {
            let factor = work.get(i, k) / pivot;
            if factor == F::zero() {
                continue;
            }
            for j in (k + 1)..n {
                let v = work.get(i, j) - factor * work.get(k, j);
                work.set(i, j, v);
            }
        }
    }
    Ok(log_det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rows: usize, cols: usize, seed: u64) -> Mat<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Mat::new(rows, cols, data).unwrap()
    }

    #[test]
    fn qr_diag_of_orthonormal_columns_is_unit() {
        // [[1,0],[0,1],[0,0]] has J^T J = I, so every |r_ii| = 1.
        let j = Mat::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let (log_det, min) = qr_log_abs_det(&j).unwrap();
        assert_eq!(log_det, 0.0);
        assert_eq!(min, 1.0);
    }

    #[test]
    fn qr_diag_of_scaled_identity() {
        let mut j = Mat::zeros(3, 3);
        for i in 0..3 {
            j.set(i, i, 2.0);
        }
        let (log_det, _) = qr_log_abs_det(&j).unwrap();
        assert!((log_det - 3.0 * 2.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_wide_matrices() {
        let j = Mat::<f64>::zeros(2, 3);
        assert!(householder_r_diag(&j).is_err());
    }

    #[test]
    fn zero_column_gives_zero_diag_entry() {
        let j = Mat::new(3, 2, vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0]).unwrap();
        let diag = householder_r_diag(&j).unwrap();
        assert_eq!(diag[1], 0.0);
        let (log_det, min): (f64, f64) = qr_log_abs_det(&j).unwrap();
        assert!(log_det.is_infinite() && log_det < 0.0);
        assert_eq!(min, 0.0);
    }

    #[test]
    fn lu_matches_hand_determinant() {
        let a = Mat::new(2, 2, vec![3.0, 1.0, 4.0, 2.0]).unwrap();
        let ld = lu_log_abs_det(&a).unwrap();
        assert!((ld - 2.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn lu_rejects_singular() {
        let a = Mat::new(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(lu_log_abs_det(&a).is_err());
    }

    #[test]
    fn qr_agrees_with_gram_lu_route() {
        // det(J^T J) = (prod r_ii)^2, checked through the independent LU path.
        for seed in 0..8u64 {
            let j = random_mat(12, 5, seed);
            let (qr_ld, _) = qr_log_abs_det(&j).unwrap();
            let gram_ld = lu_log_abs_det(&j.gram()).unwrap();
            let rel = (2.0 * qr_ld - gram_ld).abs() / gram_ld.abs().max(1.0);
            assert!(rel < 1e-12, "seed {seed}: rel error {rel}");
        }
    }

    #[test]
    fn pivot_free_qr_is_deterministic() {
        let j = random_mat(16, 4, 99);
        let a = householder_r_diag(&j).unwrap();
        let b = householder_r_diag(&j).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn square_qr_matches_lu(seed in 0u64..64) {
            let n = 2 + (seed % 5) as usize;
            let a = random_mat(n, n, seed.wrapping_mul(7919));
            if let Ok(lu) = lu_log_abs_det(&a) {
                let (qr, _) = qr_log_abs_det(&a).unwrap();
                prop_assert!((qr - lu).abs() < 1e-10 * lu.abs().max(1.0));
            }
        }
    }
}
