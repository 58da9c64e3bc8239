//! Adaptive Gauss-Kronrod (G7/K15) quadrature for matrix-valued integrands.

use crate::error::{McarmaError, Result};
use crate::matops::Mat;

// 15-point Kronrod nodes on [0,1]-half of [-1,1] plus weights; the embedded
// 7-point Gauss rule reuses nodes 1, 3, 5 (and 0 via XK[0]).
const XK: [f64; 8] = [
    0.000000000000000,
    0.207784955007898,
    0.405845151377397,
    0.586087235467691,
    0.741531185599394,
    0.864864423359769,
    0.949107912342759,
    0.991455371120813,
];
const WK: [f64; 8] = [
    0.209482141084728,
    0.204432940075298,
    0.190350578064785,
    0.169004726639267,
    0.140653259715525,
    0.104790010322250,
    0.063092092629979,
    0.022935322010529,
];
const WG: [f64; 4] = [
    0.417959183673469,
    0.381830050505119,
    0.279705391489277,
    0.129484966168870,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadParams {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadParams {
    fn default() -> Self {
        QuadParams { abs_tol: 1e-9, rel_tol: 1e-7, max_intervals: 4000 }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Mat,
    err: f64,
}

fn gk15<F: Fn(f64) -> Mat>(f: &F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let f0 = f(c);
    let mut k = &f0 * (WK[0] * h);
    let mut g = &f0 * (WG[0] * h);
    for j in 1..8 {
        let fp = f(c + h * XK[j]);
        let fm = f(c - h * XK[j]);
        let s = fp + fm;
        k += &s * (WK[j] * h);
        if j % 2 == 0 {
            g += &s * (WG[j / 2] * h);
        }
    }
    let err = (&k - &g).norm();
    Segment { a, b, value: k, err }
}

/// Adaptive integral of a matrix-valued function over [a, b].
pub fn integrate_mat<F: Fn(f64) -> Mat>(f: F, a: f64, b: f64, p: &QuadParams) -> Result<Mat> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(McarmaError::QuadratureFailure(format!("bad interval [{a}, {b}]")));
    }
    if a == b {
        let probe = f(a);
        return Ok(Mat::zeros(probe.nrows(), probe.ncols()));
    }
    let mut segs = vec![gk15(&f, a, b)];
    loop {
        let total_err: f64 = segs.iter().map(|s| s.err).sum();
        let total_norm: f64 = segs.iter().fold(0.0, |acc, s| acc + s.value.norm());
        if total_err <= p.abs_tol.max(p.rel_tol * total_norm) {
            break;
        }
        if segs.len() >= p.max_intervals {
            return Err(McarmaError::QuadratureFailure(format!(
                "error {total_err:e} after {} intervals",
                segs.len()
            )));
        }
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.err.total_cmp(&y.1.err))
            .map(|(i, _)| i)
            .unwrap();
        let s = segs.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            return Err(McarmaError::QuadratureFailure("interval underflow".into()));
        }
        segs.push(gk15(&f, s.a, mid));
        segs.push(gk15(&f, mid, s.b));
    }
    let mut total = Mat::zeros(segs[0].value.nrows(), segs[0].value.ncols());
    for s in &segs {
        total += &s.value;
    }
    Ok(total)
}

/// Scalar convenience wrapper.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, p: &QuadParams) -> Result<f64> {
    let m = integrate_mat(|x| Mat::from_element(1, 1, f(x)), a, b, p)?;
    Ok(m[(0, 0)])
}
