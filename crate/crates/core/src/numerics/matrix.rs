use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Dense row-major matrix of finite `f64` values.
///
/// Sized for the small systems this crate works with (design matrices and
/// Gram matrices of at most a few dozen rows), so every operation is a plain
/// loop over the backing vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn scaled_identity(n: usize, scale: f64) -> Self {
        let mut m = Self::identity(n);
        m.data.iter_mut().for_each(|v| *v *= scale);
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting a length mismatch or
    /// any non-finite entry.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(NumericsError::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), cols, data)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] += value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if self.cols != v.len() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                found: v.len(),
            });
        }
        Ok((0..self.rows).map(|i| dot(self.row(i), v)).collect())
    }

    /// `selfᵀ v` without materialising the transpose.
    pub fn tr_mul_vec(&self, v: &[f64]) -> Result<Vec<f64>, NumericsError> {
        if self.rows != v.len() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.rows,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * vi;
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Elementwise (Hadamard) product.
    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix, NumericsError> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    fn zip_with(
        &self,
        other: &Matrix,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix, NumericsError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Symmetric within `tol` relative to the largest absolute entry.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let scale = self
            .data
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(1.0);
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                if (self.get(i, j) - self.get(j, i)).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Principal submatrix on the given (ordered) index set.
    pub fn select(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outer-product accumulation `A + x xᵀ`.
pub fn rank1_update(a: &Matrix, x: &[f64]) -> Result<Matrix, NumericsError> {
    let mut out = a.clone();
    rank1_update_in_place(&mut out, x, 1.0)?;
    Ok(out)
}

/// `A += weight · x xᵀ`, written so that the result stays exactly symmetric.
pub fn rank1_update_in_place(a: &mut Matrix, x: &[f64], weight: f64) -> Result<(), NumericsError> {
    if !a.is_square() || a.rows() != x.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: a.rows(),
            found: x.len(),
        });
    }
    let n = x.len();
    for i in 0..n {
        let wi = weight * x[i];
        for j in i..n {
            let v = wi * x[j];
            a.add_to(i, j, v);
            if i != j {
                a.add_to(j, i, v);
            }
        }
    }
    Ok(())
}

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    lower: Matrix,
    min_pivot: f64,
}

impl Cholesky {
    /// Factorizes a symmetric matrix. A pivot (the quantity under the square
    /// root on the diagonal) that is not strictly positive is reported as
    /// [`NumericsError::NotPositiveDefinite`].
    pub fn factor(a: &Matrix) -> Result<Self, NumericsError> {
        Self::factor_with_threshold(a, 0.0)
    }

    /// Like [`Cholesky::factor`] but rejects pivots `<= threshold`.
    pub fn factor_with_threshold(a: &Matrix, threshold: f64) -> Result<Self, NumericsError> {
        if !a.is_square() {
            return Err(NumericsError::DimensionMismatch {
                expected: a.rows(),
                found: a.cols(),
            });
        }
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let mut pivot = a.get(j, j);
            for k in 0..j {
                pivot -= l.get(j, k) * l.get(j, k);
            }
            if !pivot.is_finite() || pivot <= threshold {
                return Err(NumericsError::NotPositiveDefinite { index: j, pivot });
            }
            min_pivot = min_pivot.min(pivot);
            let diag = pivot.sqrt();
            l.set(j, j, diag);
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, s / diag);
            }
        }
        Ok(Self {
            lower: l,
            min_pivot: if n == 0 { 0.0 } else { min_pivot },
        })
    }

    pub fn lower(&self) -> &Matrix {
        &self.lower
    }

    /// Smallest pivot encountered during factorization.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
        let n = self.dim();
        if b.len() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l.get(k, i) * y[k];
            }
            y[i] = s / l.get(i, i);
        }
        Ok(y)
    }

    /// Explicit inverse, column by column.
    pub fn inverse(&self) -> Matrix {
        let n = self.dim();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e).expect("dimension checked");
            for (i, v) in col.into_iter().enumerate() {
                inv.set(i, j, v);
            }
        }
        inv
    }

    /// `xᵀ A⁻¹ x` computed as `‖L⁻¹x‖²`.
    pub fn inverse_quad_form(&self, x: &[f64]) -> Result<f64, NumericsError> {
        let n = self.dim();
        if x.len() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        let l = &self.lower;
        let mut y = x.to_vec();
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l.get(i, k) * y[k];
            }
            y[i] = s / l.get(i, i);
            acc += y[i] * y[i];
        }
        Ok(acc)
    }
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if !a.is_square() || a.rows() != b.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: a.rows(),
            found: b.len(),
        });
    }
    if !a.is_symmetric(1e-10) {
        return Err(NumericsError::NotSymmetric);
    }
    Cholesky::factor(a)?.solve(b)
}

/// `sqrt(xᵀ A_inv x)`; tiny negative round-off in `[-1e-12, 0]` clamps to 0.
pub fn weighted_norm(x: &[f64], a_inv: &Matrix) -> Result<f64, NumericsError> {
    let q = quad_form(x, a_inv)?;
    if q < -1e-12 {
        return Err(NumericsError::NegativeQuadraticForm(q));
    }
    Ok(q.max(0.0).sqrt())
}

/// `xᵀ A x`.
pub fn quad_form(x: &[f64], a: &Matrix) -> Result<f64, NumericsError> {
    if !a.is_square() || a.rows() != x.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: a.rows(),
            found: x.len(),
        });
    }
    Ok((0..x.len()).map(|i| x[i] * dot(a.row(i), x)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spd_from(seed_entries: &[f64], n: usize) -> Matrix {
        let m = Matrix::from_row_major(n, n, seed_entries.to_vec()).unwrap();
        m.transpose()
            .matmul(&m)
            .unwrap()
            .add(&Matrix::identity(n))
            .unwrap()
    }

    fn rel_residual(a: &Matrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul_vec(x).unwrap();
        let r: Vec<f64> = ax.iter().zip(b).map(|(p, q)| p - q).collect();
        norm2(&r) / norm2(b).max(1e-300)
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let x = solve_spd(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
        let x = solve_spd(&Matrix::from_diagonal(&[2.0, 4.0]), &[2.0, 4.0]).unwrap();
        assert!(x.iter().all(|v| (v - 1.0).abs() <= f64::EPSILON), "{x:?}");
    }

    #[test]
    fn solve_rejects_indefinite() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(
            solve_spd(&a, &[1.0, 1.0]),
            Err(NumericsError::NotPositiveDefinite { index: 1, .. })
        ));
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            solve_spd(&a, &[1.0, 1.0]),
            Err(NumericsError::NotSymmetric)
        ));
    }

    #[test]
    fn solve_random_5x5_residual() {
        let entries: Vec<f64> = (0..25)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0)
            .collect();
        let a = spd_from(&entries, 5);
        let b = vec![1.0, -2.0, 0.5, 3.0, -1.0];
        let x = solve_spd(&a, &b).unwrap();
        assert!(rel_residual(&a, &x, &b) < 1e-8);
    }

    #[test]
    fn rank1_examples() {
        let a = rank1_update(&Matrix::zeros(2, 2), &[1.0, 0.0]).unwrap();
        assert_eq!(a.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let a = rank1_update(&Matrix::identity(2), &[1.0, 1.0]).unwrap();
        assert_eq!(a.as_slice(), &[2.0, 1.0, 1.0, 2.0]);
        assert!(rank1_update(&Matrix::identity(2), &[1.0]).is_err());
    }

    #[test]
    fn weighted_norm_examples() {
        assert_eq!(
            weighted_norm(&[3.0, 4.0], &Matrix::identity(2)).unwrap(),
            5.0
        );
        assert_eq!(
            weighted_norm(&[0.0, 0.0], &Matrix::identity(2)).unwrap(),
            0.0
        );
        let neg = Matrix::from_diagonal(&[-1.0, 1.0]);
        assert!(matches!(
            weighted_norm(&[1.0, 0.0], &neg),
            Err(NumericsError::NegativeQuadraticForm(_))
        ));
        let tiny = Matrix::from_diagonal(&[-1e-13, 1.0]);
        assert_eq!(weighted_norm(&[1.0, 0.0], &tiny).unwrap(), 0.0);
    }

    #[test]
    fn from_row_major_validates() {
        assert!(Matrix::from_row_major(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            Matrix::from_row_major(1, 1, vec![f64::NAN]),
            Err(NumericsError::NonFinite)
        ));
    }

    proptest! {
        #[test]
        fn solve_spd_residual_up_to_20(n in 1usize..=20, seed in proptest::collection::vec(-3.0f64..3.0, 400), rhs in proptest::collection::vec(-5.0f64..5.0, 20)) {
            let a = spd_from(&seed[..n * n], n);
            let b = &rhs[..n];
            prop_assume!(norm2(b) > 1e-6);
            let x = solve_spd(&a, b).unwrap();
            prop_assert!(rel_residual(&a, &x, b) < 1e-8);
        }

        #[test]
        fn rank1_matches_elementwise(n in 1usize..=6, a in proptest::collection::vec(-3.0f64..3.0, 36), x in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let base = Matrix::from_row_major(n, n, a[..n * n].to_vec()).unwrap();
            let out = rank1_update(&base, &x[..n]).unwrap();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((out.get(i, j) - (base.get(i, j) + x[i] * x[j])).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn weighted_norm_matches_triple_loop_and_solve(n in 1usize..=6, seed in proptest::collection::vec(-2.0f64..2.0, 36), x in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let a = spd_from(&seed[..n * n], n);
            let chol = Cholesky::factor(&a).unwrap();
            let a_inv = chol.inverse();
            let x = &x[..n];
            let mut naive = 0.0;
            for i in 0..n {
                for j in 0..n {
                    naive += x[i] * a_inv.get(i, j) * x[j];
                }
            }
            let wn = weighted_norm(x, &a_inv).unwrap();
            prop_assert!((wn * wn - naive).abs() <= 1e-8 * naive.abs().max(1e-12));
            let via_solve = dot(&solve_spd(&a, x).unwrap(), x);
            prop_assert!((wn * wn - via_solve).abs() <= 1e-8 * via_solve.abs().max(1e-12));
            let via_chol = chol.inverse_quad_form(x).unwrap();
            prop_assert!((via_chol - via_solve).abs() <= 1e-8 * via_solve.abs().max(1e-12));
        }
    }
}
