//! Dense real matrix kernel: vec/vech, Kronecker and Hadamard products,
//! commutation matrices, matrix exponential and phi-functions, spectra and
//! Sylvester solves. Everything here is pure and thread-safe.

mod eig;
mod expm;
mod sylvester;

pub use eig::{
    eigenvalues, ordered_schur, poly_roots, real_schur, spectral_bound, spectral_projectors,
    SpectralSplit2,
};
pub use expm::{expm, phi1};
pub use sylvester::{lyapunov_solve, sylvester_solve};

use crate::error::{McarmaError, Result};
use nalgebra::{Complex, DMatrix, DVector};

/// Dense real matrix, column-major storage.
pub type Mat = DMatrix<f64>;
/// Dense complex matrix.
pub type CMat = DMatrix<Complex<f64>>;
/// Dense real vector.
pub type Vecf = DVector<f64>;

pub fn check_square(a: &Mat) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(McarmaError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(())
}

pub fn check_finite(a: &Mat, what: &'static str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(McarmaError::NonFinite(what))
    }
}

/// Column-stacking vectorization.
pub fn vec_of(a: &Mat) -> Vecf {
    Vecf::from_column_slice(a.as_slice())
}

/// Inverse of [`vec_of`]: rebuild an n x m matrix from its column stack.
pub fn unvec(v: &Vecf, n: usize, m: usize) -> Result<Mat> {
    if v.len() != n * m {
        return Err(McarmaError::DimensionMismatch(format!(
            "unvec: vector of length {} cannot fill a {}x{} matrix",
            v.len(),
            n,
            m
        )));
    }
    Ok(Mat::from_column_slice(n, m, v.as_slice()))
}

/// Half-vectorization of a symmetric matrix: stacks the lower triangle.
pub fn vech(a: &Mat) -> Result<Vecf> {
    check_square(a)?;
    let d = a.nrows();
    let mut out = Vecf::zeros(d * (d + 1) / 2);
    let mut k = 0;
    for j in 0..d {
        for i in j..d {
            out[k] = a[(i, j)];
            k += 1;
        }
    }
    Ok(out)
}

/// Commutation matrix `K^{(n,m)}`: the unique permutation with
/// `K vec(A) = vec(A^T)` for every n x m matrix A. Its inverse is its
/// transpose, `K^{(m,n)}`.
pub fn commutation_matrix(n: usize, m: usize) -> Mat {
    let nm = n * m;
    let mut k = Mat::zeros(nm, nm);
    for i in 0..n {
        for j in 0..m {
            // vec(A) puts A[i,j] at i + j*n; vec(A^T) puts it at j + i*m.
            k[(j + i * m, i + j * n)] = 1.0;
        }
    }
    k
}

/// Kronecker product.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    a.kronecker(b)
}

/// Hadamard (entrywise) product; shapes must match.
pub fn hadamard(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.shape() != b.shape() {
        return Err(McarmaError::DimensionMismatch(format!(
            "hadamard: {}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a.component_mul(b))
}

/// Frobenius norm shortcut used for relative tolerances.
pub fn fro(a: &Mat) -> f64 {
    a.norm()
}
