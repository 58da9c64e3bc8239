//! Spectra: real Schur form, eigenvalues, spectral bound, ordered Schur
//! reordering and the stable/unstable spectral projectors built from it.

use super::{check_square, sylvester_solve, Mat};
use crate::error::{McarmaError, Result};
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};

const MAX_SCHUR_ITER: usize = 30_000;

/// Real Schur decomposition `A = Q T Q^T` with orthogonal Q and
/// quasi-upper-triangular T.
///
/// nalgebra's Francis iteration can stall on unlucky inputs at machine
/// epsilon; retries conjugate by a seeded random rotation (Schur form is
/// similarity-covariant) and relax the tolerance one bit per attempt.
pub fn real_schur(a: &Mat) -> Result<(Mat, Mat)> {
    check_square(a)?;
    let n = a.nrows();
    let scale = a.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-300);
    for attempt in 0..8u32 {
        let q0 = if attempt == 0 {
            Mat::identity(n, n)
        } else {
            random_orthogonal(n, attempt as u64)
        };
        let m = q0.transpose() * a * &q0;
        let eps = f64::EPSILON * (1u64 << attempt.min(20)) as f64;
        if let Some(s) = nalgebra::linalg::Schur::try_new(m, eps, MAX_SCHUR_ITER) {
            let (q1, mut t) = s.unpack();
            let q = &q0 * q1;
            clean_subdiagonal(&mut t);
            let resid = (&q * &t * q.transpose() - a).norm();
            if resid <= 1e-10 * (n as f64) * scale {
                return Ok((q, t));
            }
        }
    }
    Err(McarmaError::EigenFailure)
}

fn random_orthogonal(n: usize, seed: u64) -> Mat {
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(0x5eed_0000 ^ seed);
    let g = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
    nalgebra::linalg::QR::new(g).q()
}

/// Eigenvalues as a complex vector (from the real Schur diagonal blocks).
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex<f64>>> {
    let (_, t) = real_schur(a)?;
    let mut out = Vec::with_capacity(a.nrows());
    for (s, z) in blocks_of(&t) {
        let (l1, l2) = block_eigs(&t, s, z);
        out.push(l1);
        if z == 2 {
            out.push(l2);
        }
    }
    Ok(out)
}

/// Spectral bound tau(A) = max Re(lambda).
pub fn spectral_bound(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

fn clean_subdiagonal(t: &mut Mat) {
    let n = t.nrows();
    for i in 0..n.saturating_sub(1) {
        let scale = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
        if t[(i + 1, i)].abs() <= f64::EPSILON * scale {
            t[(i + 1, i)] = 0.0;
        }
    }
}

/// Diagonal block layout of a quasi-triangular matrix: (start, size) pairs.
fn blocks_of(t: &Mat) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            out.push((i, 2));
            i += 2;
        } else {
            out.push((i, 1));
            i += 1;
        }
    }
    out
}

/// Eigenvalues of the (start,size) diagonal block of T.
fn block_eigs(t: &Mat, start: usize, size: usize) -> (Complex<f64>, Complex<f64>) {
    if size == 1 {
        let l = Complex::new(t[(start, start)], 0.0);
        return (l, l);
    }
    let (a, b, c, d) = (
        t[(start, start)],
        t[(start, start + 1)],
        t[(start + 1, start)],
        t[(start + 1, start + 1)],
    );
    let mean = 0.5 * (a + d);
    let disc = 0.25 * (a - d) * (a - d) + b * c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        (Complex::new(mean + r, 0.0), Complex::new(mean - r, 0.0))
    } else {
        let im = (-disc).sqrt();
        (Complex::new(mean, im), Complex::new(mean, -im))
    }
}

/// Extend the thin QR factor of `w` to a full orthogonal basis.
fn full_orthogonal(w: &Mat) -> Mat {
    let rows = w.nrows();
    let thin = nalgebra::linalg::QR::new(w.clone()).q();
    let mut cols: Vec<nalgebra::DVector<f64>> = thin.column_iter().map(|c| c.into_owned()).collect();
    let mut k = 0;
    while cols.len() < rows {
        let mut v = nalgebra::DVector::zeros(rows);
        v[k % rows] = 1.0;
        k += 1;
        for c in &cols {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        // repeat once for numerical orthogonality
        for c in &cols {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        let nrm = v.norm();
        if nrm > 1e-8 {
            cols.push(v / nrm);
        }
        assert!(k <= 4 * rows, "orthogonal completion failed");
    }
    Mat::from_columns(&cols)
}

/// Swap two adjacent diagonal blocks of sizes p1, p2 starting at row `i`,
/// updating T and accumulating the rotation into Q (dlaexc-style direct swap).
fn swap_adjacent(t: &mut Mat, q: &mut Mat, i: usize, p1: usize, p2: usize) -> Result<()> {
    let p = p1 + p2;
    let a11 = t.view((i, i), (p1, p1)).into_owned();
    let a12 = t.view((i, i + p1), (p1, p2)).into_owned();
    let a22 = t.view((i + p1, i + p1), (p2, p2)).into_owned();

    // Solve A11 X - X A22 = -A12; then [X; I] spans the A22-invariant subspace.
    let mut sys = Mat::zeros(p1 * p2, p1 * p2);
    for jj in 0..p2 {
        for ii in 0..p1 {
            let row = ii + jj * p1;
            for kk in 0..p1 {
                sys[(row, kk + jj * p1)] += a11[(ii, kk)];
            }
            for kk in 0..p2 {
                sys[(row, ii + kk * p1)] -= a22[(kk, jj)];
            }
        }
    }
    let rhs = nalgebra::DVector::from_column_slice((-&a12).as_slice());
    let x = sys
        .lu()
        .solve(&rhs)
        .ok_or(McarmaError::SylvesterSingular)?;
    let mut w = Mat::zeros(p, p2);
    for jj in 0..p2 {
        for ii in 0..p1 {
            w[(ii, jj)] = x[ii + jj * p1];
        }
        w[(p1 + jj, jj)] = 1.0;
    }
    let u = full_orthogonal(&w);

    let n = t.nrows();
    let t_rows = u.transpose() * t.view((i, 0), (p, n));
    t.view_mut((i, 0), (p, n)).copy_from(&t_rows);
    let t_cols = t.view((0, i), (n, p)) * &u;
    t.view_mut((0, i), (n, p)).copy_from(&t_cols);
    let q_cols = q.view((0, i), (n, p)) * &u;
    q.view_mut((0, i), (n, p)).copy_from(&q_cols);

    // The swapped window is block upper-triangular again; remove roundoff below.
    for col in i..i + p2 {
        for row in (i + p2).max(col + 1)..i + p {
            t[(row, col)] = 0.0;
        }
    }
    clean_subdiagonal(t);
    Ok(())
}

/// Ordered real Schur form: reorders `A = Q T Q^T` so that every eigenvalue
/// satisfying `select` occupies the leading diagonal blocks. Returns
/// `(Q, T, k)` with `k` the dimension of the selected invariant subspace.
pub fn ordered_schur<F>(a: &Mat, select: F) -> Result<(Mat, Mat, usize)>
where
    F: Fn(Complex<f64>) -> bool,
{
    let (mut q, mut t) = real_schur(a)?;
    let mut guard = 0usize;
    loop {
        let blocks = blocks_of(&t);
        let sel: Vec<bool> = blocks
            .iter()
            .map(|&(s, z)| select(block_eigs(&t, s, z).0))
            .collect();
        let mut swapped = false;
        for j in 0..blocks.len().saturating_sub(1) {
            if !sel[j] && sel[j + 1] {
                let (s1, z1) = blocks[j];
                let (_, z2) = blocks[j + 1];
                swap_adjacent(&mut t, &mut q, s1, z1, z2)?;
                swapped = true;
                break;
            }
        }
        if !swapped {
            break;
        }
        guard += 1;
        assert!(guard <= t.nrows() * t.nrows() + 4, "schur reordering did not terminate");
    }
    let k = blocks_of(&t)
        .iter()
        .filter(|&&(s, z)| select(block_eigs(&t, s, z).0))
        .map(|&(_, z)| z)
        .sum();
    Ok((q, t, k))
}

/// Stable/unstable spectral splitting data for a matrix with no eigenvalue
/// within `margin` of the imaginary axis.
#[derive(Debug, Clone)]
pub struct SpectralSplit2 {
    /// Projector onto the invariant subspace of eigenvalues with Re < 0.
    pub p_stable: Mat,
    /// Complementary projector (Re > 0); `p_stable + p_unstable = I` exactly.
    pub p_unstable: Mat,
    /// Dimension of the stable subspace.
    pub k_stable: usize,
    /// max Re over stable eigenvalues (negative); decay rate of the stable flow.
    pub tau_stable: f64,
    /// min Re over unstable eigenvalues (positive); backward decay rate.
    pub rho_unstable: f64,
}

/// Spectral projectors via ordered Schur separation: the same spectral
/// subspaces a contour integral around each half-plane would produce.
pub fn spectral_projectors(a: &Mat, margin: f64) -> Result<SpectralSplit2> {
    let eigs = eigenvalues(a)?;
    let min_re = eigs.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
    if min_re < margin {
        return Err(McarmaError::ImaginaryAxisEigenvalue { margin, min_re });
    }
    let tau_stable = eigs
        .iter()
        .filter(|l| l.re < 0.0)
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let rho_unstable = eigs
        .iter()
        .filter(|l| l.re > 0.0)
        .map(|l| l.re)
        .fold(f64::INFINITY, f64::min);

    let n = a.nrows();
    let (q, t, k) = ordered_schur(a, |l| l.re < 0.0)?;
    let p_stable = if k == 0 {
        Mat::zeros(n, n)
    } else if k == n {
        Mat::identity(n, n)
    } else {
        let t11 = t.view((0, 0), (k, k)).into_owned();
        let t12 = t.view((0, k), (k, n - k)).into_owned();
        let t22 = t.view((k, k), (n - k, n - k)).into_owned();
        // T11 X - X T22 = -T12 decouples the triangular form.
        let x = sylvester_solve(&t11, &(-&t22), &(-&t12))?;
        let mut pt = Mat::zeros(n, n);
        pt.view_mut((0, 0), (k, k)).copy_from(&Mat::identity(k, k));
        pt.view_mut((0, k), (k, n - k)).copy_from(&(-&x));
        &q * pt * q.transpose()
    };
    let p_unstable = Mat::identity(n, n) - &p_stable;
    Ok(SpectralSplit2 { p_stable, p_unstable, k_stable: k, tau_stable, rho_unstable })
}

/// Roots of a complex polynomial `c_0 + c_1 z + ... + c_d z^d` via the
/// companion matrix (complex Schur). Leading coefficient must be nonzero.
pub fn poly_roots(coeffs: &[Complex<f64>]) -> Result<Vec<Complex<f64>>> {
    let d = coeffs.len().saturating_sub(1);
    if d == 0 {
        return Ok(vec![]);
    }
    let lead = coeffs[d];
    if lead.norm() == 0.0 {
        return Err(McarmaError::Precondition("poly_roots: zero leading coefficient".into()));
    }
    let mut comp = DMatrix::<Complex<f64>>::zeros(d, d);
    for i in 1..d {
        comp[(i, i - 1)] = Complex::new(1.0, 0.0);
    }
    for i in 0..d {
        comp[(i, d - 1)] = -coeffs[i] / lead;
    }
    for attempt in 0..8u32 {
        let eps = f64::EPSILON * (1u64 << attempt.min(20)) as f64;
        if let Some(s) = nalgebra::linalg::Schur::try_new(comp.clone(), eps, MAX_SCHUR_ITER) {
            let (_, t) = s.unpack();
            return Ok((0..d).map(|i| t[(i, i)]).collect());
        }
    }
    Err(McarmaError::EigenFailure)
}
