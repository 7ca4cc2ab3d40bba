//! Tridiagonal matrices and the Thomas algorithm.
//!
//! All 1D P1 operators are tridiagonal, so this is the only sparse format
//! the crate needs. Dense reduced quantities use `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Square tridiagonal matrix.
///
/// Row `i` holds `lower[i - 1]` at column `i - 1`, `diag[i]` at column `i` and
/// `upper[i]` at column `i + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(lower: Vec<f64>, diag: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        let off = n.saturating_sub(1);
        if lower.len() != off || upper.len() != off {
            return Err(Error::DimensionMismatch(format!(
                "tridiagonal of size {n} needs off-diagonals of length {off}, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        Ok(Self { lower, diag, upper })
    }

    pub fn zeros(n: usize) -> Self {
        let off = n.saturating_sub(1);
        Self {
            lower: vec![0.0; off],
            diag: vec![0.0; n],
            upper: vec![0.0; off],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        m.diag.fill(1.0);
        m
    }

    pub fn size(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if row == col {
            self.diag[row]
        } else if col + 1 == row {
            self.lower[col]
        } else if row + 1 == col {
            self.upper[row]
        } else {
            0.0
        }
    }

    /// Adds `value` to entry `(row, col)`; the entry must lie on the band.
    pub(crate) fn add_to(&mut self, row: usize, col: usize, value: f64) {
        if row == col {
            self.diag[row] += value;
        } else if col + 1 == row {
            self.lower[col] += value;
        } else if row + 1 == col {
            self.upper[row] += value;
        } else {
            panic!("entry ({row}, {col}) is outside the tridiagonal band");
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.lower == self.upper
    }

    /// `out = self * x`
    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.size();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(out.len(), n);
        if n == 0 {
            return;
        }
        if n == 1 {
            out[0] = self.diag[0] * x[0];
            return;
        }
        out[0] = self.diag[0] * x[0] + self.upper[0] * x[1];
        for i in 1..n - 1 {
            out[i] = self.lower[i - 1] * x[i - 1] + self.diag[i] * x[i] + self.upper[i] * x[i + 1];
        }
        out[n - 1] = self.lower[n - 2] * x[n - 2] + self.diag[n - 1] * x[n - 1];
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.size()];
        self.mul_into(x, &mut out);
        out
    }

    /// `self * X` applied column by column.
    pub fn mul_mat(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.size(), "row count must match operator size");
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for (src, mut dst) in x.column_iter().zip(out.column_iter_mut()) {
            self.mul_into(src.as_slice(), dst.as_mut_slice());
        }
        out
    }

    /// `xᵀ self y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.mul_vec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// Returns `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Tridiagonal) -> Tridiagonal {
        assert_eq!(self.size(), other.size());
        let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + alpha * y).collect();
        Tridiagonal {
            lower: zip(&self.lower, &other.lower),
            diag: zip(&self.diag, &other.diag),
            upper: zip(&self.upper, &other.upper),
        }
    }

    pub fn scaled(&self, alpha: f64) -> Tridiagonal {
        Tridiagonal::zeros(self.size()).add_scaled(alpha, self)
    }

    /// Drops the first `skip` rows and columns.
    pub fn trailing_block(&self, skip: usize) -> Tridiagonal {
        let n = self.size();
        assert!(skip < n);
        Tridiagonal {
            lower: self.lower[skip..].to_vec(),
            diag: self.diag[skip..].to_vec(),
            upper: self.upper[skip..].to_vec(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.size();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// Verifies positive definiteness of a symmetric tridiagonal matrix via
    /// its LDLᵀ pivots.
    pub fn check_positive_definite(&self) -> Result<()> {
        if !self.is_symmetric() {
            return Err(Error::InvalidArgument("product matrix is not symmetric".into()));
        }
        let scale = self.diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut d_prev = 0.0;
        for i in 0..self.size() {
            let d = if i == 0 {
                self.diag[0]
            } else {
                self.diag[i] - self.lower[i - 1] * self.lower[i - 1] / d_prev
            };
            if !(d > f64::EPSILON * scale) {
                return Err(Error::NotPositiveDefinite { row: i, pivot: d });
            }
            d_prev = d;
        }
        Ok(())
    }
}

/// Tridiagonal LU factorization (Thomas algorithm without pivoting).
///
/// Factor once, then call [`TridiagonalLu::solve_in_place`] for every
/// right-hand side.
#[derive(Clone, Debug)]
pub struct TridiagonalLu {
    multipliers: Vec<f64>,
    inv_pivots: Vec<f64>,
    upper: Vec<f64>,
}

impl TridiagonalLu {
    pub fn factor(a: &Tridiagonal) -> Result<Self> {
        let n = a.size();
        let scale = a
            .diag
            .iter()
            .chain(&a.lower)
            .chain(&a.upper)
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
        let mut multipliers = vec![0.0; n];
        let mut inv_pivots = vec![0.0; n];
        let mut pivot = 0.0;
        for i in 0..n {
            if i == 0 {
                pivot = a.diag[0];
            } else {
                let l = a.lower[i - 1] / pivot;
                multipliers[i] = l;
                pivot = a.diag[i] - l * a.upper[i - 1];
            }
            if !pivot.is_finite() || pivot.abs() <= tiny {
                return Err(Error::SingularSystem { row: i });
            }
            inv_pivots[i] = 1.0 / pivot;
        }
        Ok(Self {
            multipliers,
            inv_pivots,
            upper: a.upper.clone(),
        })
    }

    pub fn size(&self) -> usize {
        self.inv_pivots.len()
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.size();
        debug_assert_eq!(rhs.len(), n);
        if n == 0 {
            return;
        }
        for i in 1..n {
            rhs[i] -= self.multipliers[i] * rhs[i - 1];
        }
        rhs[n - 1] *= self.inv_pivots[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.upper[i] * rhs[i + 1]) * self.inv_pivots[i];
        }
    }
}

/// Euclidean norm of a slice.
pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves `A x = b` for a dense square system with partial-pivoting LU.
pub(crate) fn dense_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.lu();
    lu.solve(b).ok_or(Error::SingularSystem { row: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tridiagonal {
        Tridiagonal::new(vec![-1.0, 2.0, 0.5], vec![4.0, 5.0, 6.0, 3.0], vec![1.0, -2.0, 1.5]).unwrap()
    }

    #[test]
    fn matvec_matches_dense() {
        let a = sample();
        let x = [1.0, -2.0, 0.5, 3.0];
        let dense = a.to_dense() * DVector::from_column_slice(&x);
        for (u, v) in a.mul_vec(&x).iter().zip(dense.iter()) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn thomas_solves_system() {
        let a = sample();
        let lu = TridiagonalLu::factor(&a).unwrap();
        let x = vec![0.3, -1.0, 2.0, 0.7];
        let mut b = a.mul_vec(&x);
        lu.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_pivot_is_reported() {
        let a = Tridiagonal::new(vec![1.0], vec![1.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(TridiagonalLu::factor(&a), Err(Error::SingularSystem { row: 1 })));
    }

    #[test]
    fn positive_definite_check() {
        let lap = Tridiagonal::new(vec![-1.0; 3], vec![2.0; 4], vec![-1.0; 3]).unwrap();
        lap.check_positive_definite().unwrap();
        let indefinite = Tridiagonal::new(vec![-3.0; 3], vec![2.0; 4], vec![-3.0; 3]).unwrap();
        assert!(indefinite.check_positive_definite().is_err());
        assert!(sample().check_positive_definite().is_err());
    }

    #[test]
    fn rejects_bad_band_lengths() {
        assert!(Tridiagonal::new(vec![1.0], vec![1.0; 3], vec![1.0; 2]).is_err());
    }
}
