//! Dense complex linear algebra helpers for fiberwise computations.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_traits::Zero;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted in
/// decreasing order with matching eigenvector columns.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

/// Singular values (decreasing) and right singular vectors as columns.
pub fn right_singular(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    // right singular vectors of M are eigenvectors of M* M
    let gram = m.adjoint() * m;
    let (vals, vecs) = hermitian_eigen(&gram);
    (vals.into_iter().map(|v| v.max(0.0).sqrt()).collect(), vecs)
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.iter().copied().fold(0.0, f64::max)
}

/// Orthonormal basis (columns) of the span of the given columns, computed by
/// twice-iterated modified Gram–Schmidt with a relative drop threshold.
pub fn orthonormal_columns(cols: &[CVector], tol: f64) -> Vec<CVector> {
    let mut basis: Vec<CVector> = Vec::new();
    for c in cols {
        let mut v = c.clone();
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let coef = b.dotc(&v);
                v -= b * coef;
            }
        }
        let n = v.norm();
        if n > tol * scale.max(1.0) {
            basis.push(v / Complex64::new(n, 0.0));
        }
    }
    basis
}

/// Numerical rank of a set of column vectors.
pub fn rank(cols: &[CVector], tol: f64) -> usize {
    orthonormal_columns(cols, tol).len()
}

/// Incrementally maintained orthonormal basis of a growing span.
#[derive(Debug, Clone)]
pub struct SpanBuilder {
    dim: usize,
    tol: f64,
    basis: Vec<CVector>,
}

impl SpanBuilder {
    pub fn new(dim: usize, tol: f64) -> Self {
        Self { dim, tol, basis: Vec::new() }
    }

    /// Adds `v` to the span; returns true when the span grew.
    pub fn push(&mut self, v: &CVector) -> bool {
        if self.is_full() {
            return false;
        }
        let scale = v.norm();
        if scale == 0.0 {
            return false;
        }
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &self.basis {
                let coef = b.dotc(&w);
                w -= b * coef;
            }
        }
        let n = w.norm();
        if n > self.tol * scale.max(1.0) {
            self.basis.push(w / Complex64::new(n, 0.0));
            true
        } else {
            false
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() >= self.dim
    }

    pub fn basis(&self) -> &[CVector] {
        &self.basis
    }

    pub fn into_basis(self) -> Vec<CVector> {
        self.basis
    }
}

pub fn cvec(values: &[Complex64]) -> CVector {
    CVector::from_column_slice(values)
}

pub fn czero(n: usize) -> CVector {
    CVector::from_element(n, Complex64::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_decreasing() {
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[Complex64::new(2.0, 0.0), Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0), Complex64::new(2.0, 0.0)],
        );
        let (vals, vecs) = hermitian_eigen(&m);
        assert!((vals[0] - 3.0).abs() < 1e-12 && (vals[1] - 1.0).abs() < 1e-12);
        let v = vecs.column(0).into_owned();
        assert!((&m * &v - &v * Complex64::new(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rank_of_dependent_columns() {
        let a = cvec(&[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)]);
        let b = a.clone() * Complex64::new(0.0, 2.0);
        assert_eq!(rank(&[a, b], 1e-10), 1);
    }
}
