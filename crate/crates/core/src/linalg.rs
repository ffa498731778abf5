//! Small dense and tridiagonal helpers shared by the solvers.

use nalgebra::{ComplexField, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Solves `A x = rhs` for tridiagonal `A` given by its sub-, main and super-diagonal.
pub fn solve_tridiagonal<T: ComplexField + Copy>(
    lower: &[T],
    diag: &[T],
    upper: &[T],
    rhs: &[T],
) -> Result<Vec<T>> {
    let n = diag.len();
    assert!(lower.len() + 1 == n && upper.len() + 1 == n && rhs.len() == n);
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut beta = diag[0];
    if beta == T::zero() {
        return Err(Error::Singular);
    }
    d[0] = rhs[0] / beta;
    for i in 1..n {
        c[i - 1] = upper[i - 1] / beta;
        beta = diag[i] - lower[i - 1] * c[i - 1];
        if beta == T::zero() {
            return Err(Error::Singular);
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] = d[i] - c[i] * d[i + 1];
    }
    Ok(d)
}

/// Eigen-decomposition of the symmetric part of `a`, eigenvalues ascending.
pub fn sym_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut v: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn solve_dense(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.lu().solve(b).ok_or(Error::Singular)
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn thomas_matches_dense() {
        let n = 7;
        let lower: Vec<f64> = (0..n - 1).map(|i| -0.3 - 0.01 * i as f64).collect();
        let upper: Vec<f64> = (0..n - 1).map(|i| 0.2 + 0.02 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.1 * i as f64).collect();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        let a = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if j + 1 == i {
                lower[j]
            } else if i + 1 == j {
                upper[i]
            } else {
                0.0
            }
        });
        let r = &a * DVector::from_vec(x) - DVector::from_vec(rhs);
        assert!(r.amax() < 1e-14);
    }

    #[test]
    fn thomas_complex() {
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let x = solve_tridiagonal(&[i], &[one * 2.0, one * 2.0], &[-i], &[one, i]).unwrap();
        let r0 = one * 2.0 * x[0] - i * x[1] - one;
        let r1 = i * x[0] + one * 2.0 * x[1] - i;
        assert!(r0.norm() < 1e-15 && r1.norm() < 1e-15);
    }
}
