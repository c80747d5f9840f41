//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

/// Row-major `C = A (m x k) * B (k x n) + beta * C`.
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64], beta: f64) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    // SAFETY: slice lengths are checked against the strides above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn invert_complex(m: DMatrix<Complex64>) -> Option<DMatrix<Complex64>> {
    m.try_inverse()
}

/// Solves `F C = S C e` for symmetric `F` and positive-definite `S`; returns
/// ascending eigenvalues and S-orthonormal eigenvectors.
pub fn generalized_eigh(f: &DMatrix<f64>, s: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig_s = SymmetricEigen::new(s.clone());
    let x = &eig_s.eigenvectors
        * DMatrix::from_diagonal(&eig_s.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig_s.eigenvectors.transpose();
    let fp = &x * f * &x;
    let (e, c) = sorted_eigh(&((&fp + fp.transpose()) * 0.5));
    (e, x * c)
}

/// Symmetric eigendecomposition with ascending eigenvalues.
pub fn sorted_eigh(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let e = DVector::from_iterator(idx.len(), idx.iter().map(|&i| eig.eigenvalues[i]));
    let mut c = DMatrix::zeros(m.nrows(), idx.len());
    for (col, &i) in idx.iter().enumerate() {
        c.set_column(col, &eig.eigenvectors.column(i));
    }
    (e, c)
}

/// Fermi function `1 / (1 + exp(beta x))` without overflow.
pub fn fermi(beta: f64, x: f64) -> f64 {
    if x > 0.0 {
        let e = (-beta * x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + (beta * x).exp())
    }
}

pub fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Largest element modulus of a complex matrix.
pub fn cmax(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}
