//! Dense Sylvester/Lyapunov solver (Bartels-Stewart on real Schur forms).

use super::{check_square, eigenvalues, fro, real_schur, Mat};
use crate::error::{McarmaError, Result};

/// Solve `A X + X B = C` for X. Requires `sigma(A)` and `sigma(-B)` disjoint.
pub fn sylvester_solve(a: &Mat, b: &Mat, c: &Mat) -> Result<Mat> {
    check_square(a)?;
    check_square(b)?;
    let (n, m) = (a.nrows(), b.nrows());
    if c.nrows() != n || c.ncols() != m {
        return Err(McarmaError::DimensionMismatch(format!(
            "sylvester: C is {}x{}, expected {}x{}",
            c.nrows(),
            c.ncols(),
            n,
            m
        )));
    }

    let ea = eigenvalues(a)?;
    let eb = eigenvalues(b)?;
    let scale = spectral_scale(a) + spectral_scale(b);
    let sep = ea
        .iter()
        .flat_map(|la| eb.iter().map(move |lb| (la + lb).norm()))
        .fold(f64::INFINITY, f64::min);
    if sep < 1e-12 * scale.max(1.0) {
        return Err(McarmaError::SylvesterSingular);
    }

    let (u, s) = real_schur(a)?;
    let (v, g) = real_schur(&b.transpose())?; // B = V G^T V^T
    let f = u.transpose() * c * &v;
    let y = solve_quasi(&s, &g, &f)?;
    let x = &u * y * v.transpose();

    let resid = fro(&(a * &x + &x * b - c));
    let denom = fro(c) + (fro(a) + fro(b)) * fro(&x);
    if !resid.is_finite() || resid > 1e-8 * denom.max(1e-300) {
        return Err(McarmaError::SylvesterSingular);
    }
    Ok(x)
}

/// Solve the Lyapunov equation `A X + X A^T = W`.
pub fn lyapunov_solve(a: &Mat, w: &Mat) -> Result<Mat> {
    sylvester_solve(a, &a.transpose(), w)
}

fn spectral_scale(a: &Mat) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max) * a.nrows() as f64
}

fn block_starts(t: &Mat) -> Vec<(usize, usize)> {
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

/// Solve S Y + Y G^T = F with S, G quasi-upper-triangular.
fn solve_quasi(s: &Mat, g: &Mat, f: &Mat) -> Result<Mat> {
    let n = s.nrows();
    let m = g.nrows();
    let s_blocks = block_starts(s);
    let g_blocks = block_starts(g);
    let mut y = Mat::zeros(n, m);

    // Columns of Y G^T at block l couple Y columns k >= l, so sweep right to left.
    for &(l0, lz) in g_blocks.iter().rev() {
        // rhs column block: F_l - sum_{k>l} Y_k (G_{l,k})^T
        let mut rhs = f.view((0, l0), (n, lz)).into_owned();
        for &(k0, kz) in g_blocks.iter() {
            if k0 > l0 {
                let gblk = g.view((l0, k0), (lz, kz)).into_owned();
                rhs -= y.view((0, k0), (n, kz)) * gblk.transpose();
            }
        }
        let nblk = g.view((l0, l0), (lz, lz)).transpose().into_owned(); // Y_l N, N = G_ll^T

        // quasi-triangular back-substitution over S row blocks, bottom-up
        for &(i0, iz) in s_blocks.iter().rev() {
            let mut r = rhs.view((i0, 0), (iz, lz)).into_owned();
            for &(j0, jz) in s_blocks.iter() {
                if j0 > i0 {
                    let sblk = s.view((i0, j0), (iz, jz)).into_owned();
                    r -= sblk * y.view((j0, l0), (jz, lz));
                }
            }
            // (I (x) S_ii + N^T (x) I) vec(Y_il) = vec(r)
            let sii = s.view((i0, i0), (iz, iz)).into_owned();
            let dim = iz * lz;
            let mut small = Mat::zeros(dim, dim);
            for jj in 0..lz {
                for ii in 0..iz {
                    let row = ii + jj * iz;
                    for kk in 0..iz {
                        small[(row, kk + jj * iz)] += sii[(ii, kk)];
                    }
                    for kk in 0..lz {
                        small[(row, ii + kk * iz)] += nblk[(kk, jj)];
                    }
                }
            }
            let rv = nalgebra::DVector::from_column_slice(r.as_slice());
            let sol = small.lu().solve(&rv).ok_or(McarmaError::SylvesterSingular)?;
            for jj in 0..lz {
                for ii in 0..iz {
                    y[(i0 + ii, l0 + jj)] = sol[ii + jj * iz];
                }
            }
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_case() {
        let a = Mat::from_element(1, 1, 1.0);
        let c = Mat::from_element(1, 1, 2.0);
        let x = sylvester_solve(&a, &a, &c).unwrap();
        assert_relative_eq!(x[(0, 0)], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn identity_case() {
        let i2 = Mat::identity(2, 2);
        let x = sylvester_solve(&i2, &i2, &i2).unwrap();
        assert_relative_eq!(x, Mat::identity(2, 2) * 0.5, epsilon = 1e-14);
    }

    #[test]
    fn residual_bound_random() {
        for k in 0..20 {
            let n = 3 + (k % 3);
            let a = Mat::from_fn(n, n, |i, j| ((i * 5 + j * 13 + k) as f64 * 0.71).sin())
                - Mat::identity(n, n) * 3.0;
            let b = Mat::from_fn(n, n, |i, j| ((i * 3 + j * 7 + 2 * k) as f64 * 0.41).cos())
                - Mat::identity(n, n) * 2.5;
            let c = Mat::from_fn(n, n, |i, j| ((i + 2 * j + k) as f64 * 0.9).sin());
            let x = sylvester_solve(&a, &b, &c).unwrap();
            let resid = fro(&(&a * &x + &x * &b - &c));
            assert!(resid <= 1e-10 * fro(&c).max(1.0), "residual {resid}");
        }
    }

    #[test]
    fn complex_spectrum_blocks() {
        // A with a complex pair exercises the 2x2 block path
        let a = Mat::from_row_slice(3, 3, &[-1.0, 2.0, 0.3, -2.0, -1.0, 0.1, 0.0, 0.0, -0.5]);
        let c = Mat::from_fn(3, 3, |i, j| (i + j) as f64 - 1.5);
        let x = sylvester_solve(&a, &a.transpose(), &c).unwrap();
        let resid = fro(&(&a * &x + &x * a.transpose() - &c));
        assert!(resid <= 1e-10 * fro(&c));
    }

    #[test]
    fn overlapping_spectra_rejected() {
        let a = Mat::from_element(1, 1, 1.0);
        let b = Mat::from_element(1, 1, -1.0);
        let c = Mat::from_element(1, 1, 1.0);
        assert!(matches!(
            sylvester_solve(&a, &b, &c),
            Err(McarmaError::SylvesterSingular)
        ));
    }
}
