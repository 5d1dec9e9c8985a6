//! Small dense linear algebra helpers.
//!
//! Matrices are row-major `Vec`s. The generic solver works over any
//! [`Scalar`] so projections and metric inverses stay differentiable; the
//! `f64` diagnostics (singular values, eigenvalues) go through nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::dual::Scalar;
use crate::error::{Error, Result};

/// Solve `a · x = b` for a square `a` (row-major) by Gaussian elimination
/// with partial pivoting on the real parts.
pub fn solve<T: Scalar>(a: &[T], b: &[T]) -> Result<Vec<T>> {
    let k = b.len();
    assert_eq!(a.len(), k * k, "solve: matrix is not {k}x{k}");
    let mut m = a.to_vec();
    let mut rhs = b.to_vec();
    let scale = a.iter().fold(0.0_f64, |s, v| s.max(v.value().abs()));
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| m[i * k + col].value().abs().total_cmp(&m[j * k + col].value().abs()))
            .expect("non-empty range");
        if m[pivot * k + col].value() == 0.0 {
            return Err(Error::Singular {
                smallest: 0.0,
                largest: scale,
            });
        }
        if pivot != col {
            for j in 0..k {
                m.swap(col * k + j, pivot * k + j);
            }
            rhs.swap(col, pivot);
        }
        let p = m[col * k + col];
        for row in col + 1..k {
            let factor = m[row * k + col] / p;
            for j in col..k {
                let v = m[col * k + j];
                m[row * k + j] = m[row * k + j] - factor * v;
            }
            let r = rhs[col];
            rhs[row] = rhs[row] - factor * r;
        }
    }
    let mut x = vec![T::zero(); k];
    for row in (0..k).rev() {
        let mut acc = rhs[row];
        for j in row + 1..k {
            acc = acc - m[row * k + j] * x[j];
        }
        x[row] = acc / m[row * k + row];
    }
    Ok(x)
}

/// Row-major matrix-vector product for an `rows × cols` matrix.
pub fn mat_vec<T: Scalar>(a: &[T], rows: usize, cols: usize, v: &[T]) -> Vec<T> {
    (0..rows)
        .map(|i| (0..cols).fold(T::zero(), |acc, j| acc + a[i * cols + j] * v[j]))
        .collect()
}

/// `aᵀ v` for an `rows × cols` matrix.
pub fn mat_t_vec<T: Scalar>(a: &[T], rows: usize, cols: usize, v: &[T]) -> Vec<T> {
    (0..cols)
        .map(|j| (0..rows).fold(T::zero(), |acc, i| acc + a[i * cols + j] * v[i]))
        .collect()
}

pub fn to_dmatrix<T: Scalar>(a: &[T], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |i, j| a[i * cols + j].value())
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|p, q| q.total_cmp(p));
    s
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Rejects matrices whose smallest singular value falls below
/// `rel · largest`.
pub fn check_regular(a: &DMatrix<f64>, rel: f64) -> Result<()> {
    let s = singular_values(a);
    let largest = s.first().copied().unwrap_or(0.0);
    let smallest = s.last().copied().unwrap_or(0.0);
    if !(smallest > rel * largest) || largest == 0.0 {
        return Err(Error::Singular { smallest, largest });
    }
    Ok(())
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}
