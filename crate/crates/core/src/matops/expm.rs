//! Matrix exponential and the phi_1 function.

use super::{check_finite, check_square, Mat};
use crate::error::Result;

/// Matrix exponential via Higham's scaling-and-squaring with a degree-13
/// Pade approximant (nalgebra's implementation).
pub fn expm(a: &Mat) -> Result<Mat> {
    check_square(a)?;
    check_finite(a, "expm input")?;
    let e = a.clone().exp();
    check_finite(&e, "expm output")?;
    Ok(e)
}

/// phi_1(A) = integral of e^{sA} over s in [0,1].
///
/// Computed through the exponential of the bordered block matrix
/// [[A, I], [0, 0]] whose top-right block is phi_1(A); valid for singular A,
/// where the explicit `A^{-1}(e^A - I)` form breaks down.
pub fn phi1(a: &Mat) -> Result<Mat> {
    check_square(a)?;
    let n = a.nrows();
    let mut big = Mat::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((0, n), (n, n)).copy_from(&Mat::identity(n, n));
    let e = expm(&big)?;
    Ok(e.view((0, n), (n, n)).into_owned())
}
