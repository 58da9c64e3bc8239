//! Closed-form second-order structure of causal MCARMA output processes,
//! Ornstein-Uhlenbeck and well-balanced OU covariance models, the double
//! time-integral r++ of the autocovariance and realized-covariance /
//! squared-return autocovariances.
//!
//! Conventions: the OU and well-balanced formulas take the operator A of
//! dX = -A X dt + dL (so stability means tau(-A) < 0) through its nm x nm
//! vec representation `a`, and the noise covariance rep `q` = Cov[vec L_1].

use crate::error::{McarmaError, Result};
use crate::levy::LevySpec;
use crate::matops::{expm, fro, lyapunov_solve, phi1, spectral_bound, unvec, vec_of, Mat};
use crate::model::{classify, CompanionForm, MCARMAModel, ModelKind};
use crate::quad::{integrate_mat, QuadParams};
use serde::Serialize;

/// How a reported moment was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    ClosedForm,
    Quadrature,
    MonteCarlo,
}

/// Second-order structure report: mean, Var[vec X] and autocovariances.
#[derive(Debug, Clone, Serialize)]
pub struct MomentReport {
    pub rows: usize,
    pub cols: usize,
    pub mean: Vec<f64>,
    pub var0: Vec<Vec<f64>>,
    pub acov: Vec<(f64, Vec<Vec<f64>>)>,
    pub method: MomentMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<Vec<(f64, Vec<Vec<f64>>)>>,
}

impl MomentReport {
    pub fn from_mats(mean: &Mat, var0: &Mat, acov: &[(f64, Mat)], method: MomentMethod) -> Self {
        let rows = mean.nrows();
        let cols = mean.ncols();
        let to_rows = |m: &Mat| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect()
        };
        MomentReport {
            rows,
            cols,
            mean: vec_of(mean).as_slice().to_vec(),
            var0: to_rows(var0),
            acov: acov.iter().map(|(h, m)| (*h, to_rows(m))).collect(),
            method,
            standard_errors: None,
        }
    }

    /// Lag rows x vectorized entries, one line per lag.
    pub fn acov_csv(&self) -> String {
        let nm = self.rows * self.cols;
        let mut out = String::new();
        out.push_str("lag");
        for i in 0..nm {
            for j in 0..nm {
                out.push_str(&format!(",c_{}_{}", i + 1, j + 1));
            }
        }
        out.push('\n');
        for (h, m) in &self.acov {
            out.push_str(&format!("{h}"));
            for row in m {
                for v in row {
                    out.push_str(&format!(",{v}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn require_causal(form: &CompanionForm) -> Result<f64> {
    let cls = classify(form)?;
    match cls.kind {
        ModelKind::Causal => Ok(cls.tau),
        other => Err(McarmaError::NotCausal(format!("{other:?}, tau = {}", cls.tau))),
    }
}

/// Stationary mean -C A^{-1} E mu_L of a causal model.
pub fn stationary_mean(model: &MCARMAModel, form: &CompanionForm) -> Result<Mat> {
    require_causal(form)?;
    let mu = model.levy().mean_mu();
    let rhs = &form.evec * vec_of(&mu);
    let sol = form
        .avec
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| McarmaError::SingularResolvent("A_p is singular".into()))?;
    unvec(&(-(&form.cvec * sol)), form.n, form.m)
}

/// Stationary state covariance: solves A S + S A^T = -E Q E^T.
pub fn stationary_state_variance(model: &MCARMAModel, form: &CompanionForm) -> Result<Mat> {
    require_causal(form)?;
    let qrep = model.levy().covariance_operator()?.rep().clone();
    let w = &form.evec * qrep * form.evec.transpose();
    let sigma = lyapunov_solve(&form.avec, &(-w))?;
    // the solution must be PSD up to roundoff
    let scale = fro(&sigma).max(1.0);
    let eig = nalgebra::SymmetricEigen::new((&sigma + sigma.transpose()) * 0.5);
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-10 * scale {
        return Err(McarmaError::Precondition(format!(
            "stationary covariance not PSD (min eig {min_eig:e})"
        )));
    }
    Ok(sigma)
}

/// Var[vec X] = C Sigma_inf C^T.
pub fn stationary_variance(model: &MCARMAModel, form: &CompanionForm) -> Result<Mat> {
    let sigma = stationary_state_variance(model, form)?;
    Ok(&form.cvec * sigma * form.cvec.transpose())
}

/// Cov[vec X_{t+h}, vec X_t] = C e^{h A} Sigma_inf C^T for h >= 0.
pub fn autocovariance(model: &MCARMAModel, form: &CompanionForm, h: f64) -> Result<Mat> {
    if h < 0.0 {
        return Err(McarmaError::Precondition("autocovariance needs h >= 0".into()));
    }
    let sigma = stationary_state_variance(model, form)?;
    let e = expm(&(&form.avec * h))?;
    Ok(&form.cvec * e * sigma * form.cvec.transpose())
}

/// Conditional variance over a window of length `dt`:
/// C (integral_0^dt e^{uA} E Q E^T e^{uA^T} du) C^T, evaluated through a
/// bordered-block exponential (Van Loan), so it is valid for any
/// classification including singular A.
pub fn conditional_variance(model: &MCARMAModel, form: &CompanionForm, dt: f64) -> Result<Mat> {
    if dt < 0.0 {
        return Err(McarmaError::Precondition("conditional_variance needs t > s".into()));
    }
    let qrep = model.levy().covariance_operator()?.rep().clone();
    let w = &form.evec * qrep * form.evec.transpose();
    let sigma = gramian(&form.avec, &w, dt)?;
    Ok(&form.cvec * sigma * form.cvec.transpose())
}

/// integral_0^T e^{uA} W e^{uA^T} du via exp([[-A, W],[0, A^T]] T).
pub fn gramian(a: &Mat, w: &Mat, t: f64) -> Result<Mat> {
    let n = a.nrows();
    let mut big = Mat::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(-a));
    big.view_mut((0, n), (n, n)).copy_from(w);
    big.view_mut((n, n), (n, n)).copy_from(&a.transpose());
    let e = expm(&(big * t))?;
    let f = e.view((0, n), (n, n)).into_owned();
    Ok(expm(&(a * t))? * f)
}

fn check_ou_stable(a: &Mat) -> Result<()> {
    let tau = spectral_bound(&(-a))?;
    if tau >= 0.0 {
        return Err(McarmaError::UnstableGenerator(tau));
    }
    Ok(())
}

/// OU stationary covariance D^{-1} Q: solves A S + S A^T = Q.
pub fn ou_stationary_variance(a: &Mat, q: &Mat) -> Result<Mat> {
    check_ou_stable(a)?;
    lyapunov_solve(a, q)
}

/// OU autocovariance acov(h) = e^{-h A} D^{-1} Q.
pub fn ou_acov(a: &Mat, q: &Mat, h: f64) -> Result<Mat> {
    if h < 0.0 {
        return Err(McarmaError::Precondition("ou_acov needs h >= 0".into()));
    }
    let sigma = ou_stationary_variance(a, q)?;
    Ok(expm(&(-a * h))? * sigma)
}

/// r++ for the OU model: ((A^{-2})(e^{-At} - I) + A^{-1} t) D^{-1} Q.
pub fn r_pp_ou(a: &Mat, q: &Mat, t: f64) -> Result<Mat> {
    let n = a.nrows();
    let sigma = ou_stationary_variance(a, q)?;
    let lu = a.clone().lu();
    let em = expm(&(-a * t))? - Mat::identity(n, n);
    let inv1 = lu
        .solve(&em)
        .ok_or_else(|| McarmaError::SingularResolvent("A".into()))?;
    let inv2 = lu
        .solve(&inv1)
        .ok_or_else(|| McarmaError::SingularResolvent("A".into()))?;
    let lin = lu
        .solve(&Mat::identity(n, n))
        .ok_or_else(|| McarmaError::SingularResolvent("A".into()))?
        * t;
    Ok((inv2 + lin) * sigma)
}

/// Commutator generator of e^{t D_hat}(X) = e^{tA} X e^{-tA^T} on vec
/// coordinates: I (x) A - A (x) I.
fn dhat_big(a: &Mat) -> Mat {
    let n = a.nrows();
    let i = Mat::identity(n, n);
    i.kronecker(a) - a.kronecker(&i)
}

/// Well-balanced OU autocovariance
/// acov(h) = e^{-hA} Sigma + Sigma e^{-hA^T} + e^{-hA}(e^{h D_hat} - I) D_hat^{-1} Q,
/// with the singular last factor evaluated as h phi_1(h D_hat) applied to Q.
///
/// The forward-smoothing part contributes e^{-hA} Sigma, the
/// backward-smoothing part its TRANSPOSE Sigma e^{-hA^T} (their overlap over
/// (t, t+h] is the D_hat term); the two coincide only for symmetric A. The
/// value at h = 0 is 2 Sigma either way.
pub fn wb_acov(a: &Mat, q: &Mat, h: f64) -> Result<Mat> {
    if h < 0.0 {
        return Err(McarmaError::Precondition("wb_acov needs h >= 0".into()));
    }
    check_ou_stable(a)?;
    let n = a.nrows();
    let big = dhat_big(a);
    let conv = phi1(&(&big * h))? * vec_of(q) * h;
    let cross = expm(&(-a * h))? * unvec(&conv, n, n)?;
    let fwd = ou_acov(a, q, h)?;
    Ok(&fwd + fwd.transpose() + cross)
}

/// r++ for the well-balanced OU model: the double time-integral of
/// [`wb_acov`], so r++_OU(t) + r++_OU(t)^T plus the cross part.
///
/// The cross part's displayed closed form involves D_hat^{-1}, which never
/// exists (the kernel of X -> AX - XA^T contains everything commuting with
/// A); the combination is finite and is evaluated exactly through a 4-block
/// bordered exponential integrating the cross autocovariance term twice.
pub fn r_pp_wb(a: &Mat, q: &Mat, t: f64) -> Result<Mat> {
    check_ou_stable(a)?;
    let n = a.nrows();
    let fwd = r_pp_ou(a, q, t)?;
    Ok(unvec(&wb_first_double_integral(a, q, t)?, n, n)? + &fwd + fwd.transpose())
}

/// vec of integral_0^t integral_0^s [first wb acov term](u) du ds, computed as
/// the last block of e^{tM} applied to (vec Q, 0, 0, 0) with the chain
/// x' = -(I(x)A) x, y' = -(A(x)I) y + x, z1' = y, z2' = z1.
fn wb_first_double_integral(a: &Mat, q: &Mat, t: f64) -> Result<nalgebra::DVector<f64>> {
    let n = a.nrows();
    let nn = n * n;
    let i = Mat::identity(n, n);
    let al = i.kronecker(a); // left multiplication by A
    let ar = a.kronecker(&i); // right multiplication by A^T
    let mut big = Mat::zeros(4 * nn, 4 * nn);
    big.view_mut((0, 0), (nn, nn)).copy_from(&(-&al));
    big.view_mut((nn, 0), (nn, nn)).copy_from(&Mat::identity(nn, nn));
    big.view_mut((nn, nn), (nn, nn)).copy_from(&(-&ar));
    big.view_mut((2 * nn, nn), (nn, nn)).copy_from(&Mat::identity(nn, nn));
    big.view_mut((3 * nn, 2 * nn), (nn, nn)).copy_from(&Mat::identity(nn, nn));
    let e = expm(&(big * t))?;
    let mut init = nalgebra::DVector::zeros(4 * nn);
    init.rows_mut(0, nn).copy_from(&vec_of(q));
    let out = e * init;
    Ok(out.rows(3 * nn, nn).into_owned())
}

/// Generic double time-integral of an autocovariance function by nested
/// adaptive quadrature (the independent oracle for the closed forms).
pub fn r_plus_plus<F>(acov_fn: F, t: f64, params: &QuadParams) -> Result<Mat>
where
    F: Fn(f64) -> Result<Mat>,
{
    if t < 0.0 {
        return Err(McarmaError::Precondition("r++ needs t >= 0".into()));
    }
    let probe = acov_fn(0.0)?;
    let (n, m) = (probe.nrows(), probe.ncols());
    if t == 0.0 {
        return Ok(Mat::zeros(n, m));
    }
    let inner_params = QuadParams {
        abs_tol: params.abs_tol * 0.1,
        rel_tol: params.rel_tol * 0.1,
        ..*params
    };
    integrate_mat(
        |s| {
            integrate_mat(|u| acov_fn(u).expect("acov evaluation failed"), 0.0, s, &inner_params)
                .expect("inner quadrature failed")
        },
        0.0,
        t,
        params,
    )
}

/// Autocovariance of integrated-process increments at lag h >= 1 from any
/// r++ function: r++((h+1)D) - 2 r++(hD) + r++((h-1)D).
pub fn acov_realized<F>(r_pp_fn: F, delta: f64, h: usize) -> Result<Mat>
where
    F: Fn(f64) -> Result<Mat>,
{
    if h < 1 {
        return Err(McarmaError::Precondition("acov_realized needs lag h >= 1".into()));
    }
    if delta <= 0.0 {
        return Err(McarmaError::Precondition("acov_realized needs Delta > 0".into()));
    }
    let hd = h as f64 * delta;
    Ok(r_pp_fn(hd + delta)? - r_pp_fn(hd)? * 2.0 + r_pp_fn(hd - delta)?)
}

/// Squared-return autocovariance for the OU covariance model:
/// e^{-A Delta (h-1)} A^{-2} (I - e^{-A Delta})^2 D^{-1} Q.
pub fn acov_sqret_ou(a: &Mat, q: &Mat, delta: f64, h: usize) -> Result<Mat> {
    if h < 1 {
        return Err(McarmaError::Precondition("squared-return lag must be >= 1".into()));
    }
    let n = a.nrows();
    let sigma = ou_stationary_variance(a, q)?;
    let lu = a.clone().lu();
    let em = Mat::identity(n, n) - expm(&(-a * delta))?;
    let sq = &em * &em;
    let inv1 = lu.solve(&sq).ok_or_else(|| McarmaError::SingularResolvent("A".into()))?;
    let inv2 = lu.solve(&inv1).ok_or_else(|| McarmaError::SingularResolvent("A".into()))?;
    Ok(expm(&(-a * (delta * (h - 1) as f64)))? * inv2 * sigma)
}

/// Squared-return autocovariance for the well-balanced OU covariance model:
/// exact second differences of the regularized wb r++ (no D_hat inverse).
pub fn acov_sqret_wb(a: &Mat, q: &Mat, delta: f64, h: usize) -> Result<Mat> {
    if h < 1 {
        return Err(McarmaError::Precondition("squared-return lag must be >= 1".into()));
    }
    let n = a.nrows();
    let hd = h as f64 * delta;
    let first = unvec(
        &(wb_first_double_integral(a, q, hd + delta)?
            - wb_first_double_integral(a, q, hd)? * 2.0
            + wb_first_double_integral(a, q, hd - delta)?),
        n,
        n,
    )?;
    let fwd = acov_sqret_ou(a, q, delta, h)?;
    Ok(first + &fwd + fwd.transpose())
}

/// Full closed-form report for a causal model.
pub fn moment_report(model: &MCARMAModel, form: &CompanionForm, lags: &[f64]) -> Result<MomentReport> {
    let mean = stationary_mean(model, form)?;
    let var0 = stationary_variance(model, form)?;
    let mut acov = Vec::with_capacity(lags.len());
    for &h in lags {
        acov.push((h, autocovariance(model, form, h)?));
    }
    Ok(MomentReport::from_mats(&mean, &var0, &acov, MomentMethod::ClosedForm))
}

/// Mean of the stationary OU model: A^{-1} mu_L.
pub fn ou_mean(a: &Mat, levy: &LevySpec) -> Result<Mat> {
    check_ou_stable(a)?;
    let (n, m) = levy.dims();
    let mu = levy.mean_mu();
    let sol = a
        .clone()
        .lu()
        .solve(&vec_of(&mu))
        .ok_or_else(|| McarmaError::SingularResolvent("A".into()))?;
    unvec(&sol, n, m)
}

/// Mean of the well-balanced OU model: 2 A^{-1} mu_L.
pub fn wb_mean(a: &Mat, levy: &LevySpec) -> Result<Mat> {
    Ok(ou_mean(a, levy)? * 2.0)
}
