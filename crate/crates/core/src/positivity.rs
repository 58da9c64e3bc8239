//! Positivity certification engines: kernel sampling and complete
//! monotonicity for causal models, coefficient conditions for non-stable
//! ones, positive-model builders from quasi-positive factors, the sampled
//! Hadamard sufficient condition on the orthant, and the empirical path
//! validation backstop.

use crate::cones::{
    contains, is_positive_operator, is_quasi_positive, ConeSpec, PositivityVerdict, SampleParams,
    Witness,
};
use crate::error::{McarmaError, Result};
use crate::levy::LevySpec;
use crate::linop::LinOpNM;
use crate::matops::{expm, fro, spectral_bound, Mat};
use crate::model::{classify, kernel, CompanionForm, MCARMAModel, ModelKind};
use crate::simulate::PathBundle;
use nalgebra::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Log-spaced grid with `count` points in [lo, hi].
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (l0 + (l1 - l0) * k as f64 / (count - 1).max(1) as f64).exp())
        .collect()
}

/// One named certification outcome, JSON-serializable.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check_name: String,
    pub verdict: PositivityVerdict,
    pub grid_len: usize,
    pub elapsed_ms: u128,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn model_cone(model: &MCARMAModel) -> Result<&ConeSpec> {
    model
        .cone()
        .ok_or_else(|| McarmaError::Precondition("model has no cone attached".into()))
}

/// Sample positivity of the kernel g(s) over an s-grid. This is the direct
/// (Bernstein) side of the causal positivity criterion; usable on any model
/// whose kernel exists on the grid.
pub fn kernel_positivity_on_grid<R: Rng + ?Sized>(
    form: &CompanionForm,
    cone: &ConeSpec,
    s_grid: &[f64],
    params: &SampleParams,
    rng_for: impl Fn(usize) -> R + Sync,
) -> Result<PositivityVerdict>
where
    R: Sized + Send,
{
    let verdicts: Vec<Result<(f64, PositivityVerdict)>> = s_grid
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let mut rng = rng_for(i);
            let g = kernel(form, s)?;
            let v = is_positive_operator(&g, cone, params, &mut rng)?;
            Ok((s, v))
        })
        .collect();
    let mut combined = PositivityVerdict::certified(f64::INFINITY);
    for item in verdicts {
        let (s, mut v) = item?;
        if v.is_refuted() {
            if let Some(w) = &mut v.witness {
                w.location = Some(s);
            }
            return Ok(v);
        }
        combined = combined.combine(v);
    }
    Ok(combined)
}

/// Certify the kernel of a causal model on a default or supplied s-grid
/// (200 log-spaced points in [1e-3, 20/|tau|]).
pub fn certify_causal_kernel(
    model: &MCARMAModel,
    form: &CompanionForm,
    s_grid: Option<&[f64]>,
    params: &SampleParams,
    master_seed: u64,
) -> Result<PositivityVerdict> {
    let cone = model_cone(model)?;
    let cls = classify(form)?;
    if cls.kind != ModelKind::Causal {
        return Err(McarmaError::NotCausal(format!("{:?}", cls.kind)));
    }
    let default_grid;
    let grid = match s_grid {
        Some(g) => g,
        None => {
            default_grid = log_grid(1e-3, 20.0 / cls.tau.abs(), 200);
            &default_grid
        }
    };
    let factory = crate::rng::StreamFactory::new(master_seed);
    kernel_positivity_on_grid(form, cone, grid, params, |i| factory.stream(0x6B00 + i as u64))
}

fn qp_at(model: &MCARMAModel, lambda: f64) -> Result<Mat> {
    model.qp_eval_real(lambda)
}

/// Central finite-difference derivative of order `order` with step h.
fn fd_derivative(model: &MCARMAModel, lambda: f64, order: usize, h: f64) -> Result<(Mat, f64)> {
    let f = |x: f64| qp_at(model, x);
    let (stencil, denom): (Vec<(f64, f64)>, f64) = match order {
        0 => (vec![(0.0, 1.0)], 1.0),
        1 => (vec![(1.0, 0.5), (-1.0, -0.5)], h),
        2 => (vec![(1.0, 1.0), (0.0, -2.0), (-1.0, 1.0)], h * h),
        3 => (
            vec![(2.0, 0.5), (1.0, -1.0), (-1.0, 1.0), (-2.0, -0.5)],
            h * h * h,
        ),
        4 => (
            vec![(2.0, 1.0), (1.0, -4.0), (0.0, 6.0), (-1.0, -4.0), (-2.0, 1.0)],
            h * h * h * h,
        ),
        _ => {
            return Err(McarmaError::Precondition(
                "derivative orders above 4 are numerically meaningless in double precision".into(),
            ))
        }
    };
    let probe = f(lambda)?;
    let mut acc = Mat::zeros(probe.nrows(), probe.ncols());
    let mut scale: f64 = 0.0;
    for (k, w) in stencil {
        let v = f(lambda + k * h)?;
        scale = scale.max(fro(&v));
        acc += v * w;
    }
    Ok((acc / denom, scale / denom))
}

/// Complete-monotonicity check of lambda -> Q(lambda) P(lambda)^{-1} by
/// central finite differences (h = lambda 1e-3 2^n) on a lambda-grid.
///
/// The sign test at order n carries a roundoff-aware tolerance proportional
/// to eps * scale / h^n: high orders at small lambda become uninformative
/// rather than falsely refuted.
pub fn check_complete_monotonicity(
    model: &MCARMAModel,
    cone: &ConeSpec,
    lambda_grid: Option<&[f64]>,
    max_order: usize,
    params: &SampleParams,
    master_seed: u64,
) -> Result<PositivityVerdict> {
    if max_order > 4 {
        return Err(McarmaError::Precondition(
            "derivative orders above 4 are numerically meaningless in double precision".into(),
        ));
    }
    let default_grid;
    let grid = match lambda_grid {
        Some(g) => g,
        None => {
            default_grid = log_grid(0.01, 100.0, 30);
            &default_grid
        }
    };
    let factory = crate::rng::StreamFactory::new(master_seed);
    let (n, m) = model.dims();
    let mut combined = PositivityVerdict::certified(f64::INFINITY);
    for (i, &lambda) in grid.iter().enumerate() {
        let mut rng = factory.stream(0xC300 + i as u64);
        for order in 0..=max_order {
            let h = lambda * 1e-3 * (1u64 << order) as f64;
            if h <= f64::EPSILON * lambda {
                return Err(McarmaError::Precondition(format!(
                    "differencing step underflow at lambda = {lambda}"
                )));
            }
            let (deriv, stencil_scale) = match fd_derivative(model, lambda, order, h) {
                Ok(v) => v,
                Err(McarmaError::SingularResolvent(_)) => continue, // grid point on spectrum
                Err(e) => return Err(e),
            };
            let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
            let candidate = deriv * sign;
            let fd_noise = 64.0 * f64::EPSILON * stencil_scale;
            let point_params = SampleParams {
                samples: params.samples,
                tol: params.tol.max(fd_noise) + 1e-9 * fro(&candidate),
            };
            let op = LinOpNM::general(n, m, candidate)?;
            let mut v = is_positive_operator(&op, cone, &point_params, &mut rng)?;
            if v.is_refuted() {
                if let Some(w) = &mut v.witness {
                    w.location = Some(lambda);
                }
                v.reason = Some(format!("(-1)^{order} f^({order})({lambda}) leaves pi(C)"));
                return Ok(v);
            }
            combined = combined.combine(v);
        }
    }
    Ok(combined)
}

/// Expand P(lambda) = prod_i (lambda I - F_i) into monic coefficients and the
/// autoregressive operators A_1..A_p; the expansion is validated against the
/// factored product at p+1 sample points within 1e-10.
pub fn expand_factors(factors: &[LinOpNM]) -> Result<Vec<LinOpNM>> {
    let p = factors.len();
    if p == 0 {
        return Err(McarmaError::Precondition("need at least one factor".into()));
    }
    let (n, m) = factors[0].dims();
    let nm = n * m;
    // coeffs[k] multiplies lambda^k; start with the constant polynomial I
    let mut coeffs: Vec<Mat> = vec![Mat::identity(nm, nm)];
    for f in factors {
        if f.dims() != (n, m) {
            return Err(McarmaError::DimensionMismatch("factor dims differ".into()));
        }
        let mut next = vec![Mat::zeros(nm, nm); coeffs.len() + 1];
        for (k, c) in coeffs.iter().enumerate() {
            next[k + 1] += c; // lambda * c(lambda)
            next[k] -= c * f.rep(); // - c(lambda) F
        }
        coeffs = next;
    }
    // P(lambda) = lambda^p I - sum A_i lambda^{p-i}  =>  A_i = -coeffs[p-i]
    let mut a_ops = Vec::with_capacity(p);
    for i in 1..=p {
        a_ops.push(LinOpNM::general(n, m, -&coeffs[p - i])?);
    }

    // verify the expansion at p+1 complex sample points
    for k in 0..=p {
        let lam = Complex::new(0.37 + 0.61 * k as f64, 0.29 - 0.41 * k as f64);
        let mut direct = nalgebra::DMatrix::<Complex<f64>>::identity(nm, nm);
        for f in factors {
            let mut fac = nalgebra::DMatrix::<Complex<f64>>::identity(nm, nm) * lam;
            for i in 0..nm {
                for j in 0..nm {
                    fac[(i, j)] -= Complex::new(f.rep()[(i, j)], 0.0);
                }
            }
            direct *= fac;
        }
        let mut expanded = nalgebra::DMatrix::<Complex<f64>>::zeros(nm, nm);
        for (kk, c) in coeffs.iter().enumerate() {
            let w = lam.powu(kk as u32);
            for i in 0..nm {
                for j in 0..nm {
                    expanded[(i, j)] += Complex::new(c[(i, j)], 0.0) * w;
                }
            }
        }
        let err = (&direct - &expanded).norm();
        if err > 1e-10 * (1.0 + direct.norm()) {
            return Err(McarmaError::Precondition(format!(
                "factor expansion mismatch: {err:e}"
            )));
        }
    }
    Ok(a_ops)
}

/// Build a positive causal MCARMA model from quasi-positive stable factors
/// (the constructive direction of the causal positivity theorem).
///
/// Every factor must be quasi-positive (verdict at least sampled) with
/// negative spectral bound; the moving-average polynomial must be completely
/// monotone, which for polynomials forces a constant Q = C_0 in pi(C).
pub fn build_positive_mcar<R: Rng + ?Sized>(
    factors: &[LinOpNM],
    c_ops: Vec<LinOpNM>,
    cone: ConeSpec,
    levy: LevySpec,
    params: &SampleParams,
    rng: &mut R,
) -> Result<(MCARMAModel, PositivityVerdict)> {
    let mut verdict = PositivityVerdict::certified(f64::INFINITY);
    for (i, f) in factors.iter().enumerate() {
        let tau = spectral_bound(f.rep())?;
        if tau >= 0.0 {
            return Err(McarmaError::Precondition(format!(
                "factor {} is not stable (tau = {tau})",
                i + 1
            )));
        }
        let v = is_quasi_positive(f, &cone, params, rng)?;
        if !v.is_positive() {
            return Err(McarmaError::Precondition(format!(
                "factor {} is not quasi-positive",
                i + 1
            )));
        }
        verdict = verdict.combine(v);
    }
    for (j, c) in c_ops.iter().enumerate().skip(1) {
        if fro(c.rep()) > 0.0 {
            return Err(McarmaError::Precondition(format!(
                "C_{j} must vanish: a non-constant operator polynomial cannot be completely monotone"
            )));
        }
    }
    let v0 = is_positive_operator(&c_ops[0], &cone, params, rng)?;
    if !v0.is_positive() {
        return Err(McarmaError::Precondition("C_0 is not a positive operator".into()));
    }
    verdict = verdict.combine(v0);

    let a_ops = expand_factors(factors)?;
    let model = MCARMAModel::new(a_ops, c_ops, Some(cone), levy)?;
    Ok((model, verdict))
}

/// Sampled sufficient positivity condition on the orthant from two
/// commutative families of positive matrices: checks entrywise
/// sum_i (e^{s A_{i+1}} - e^{s C_i}) >= -tol over an s-grid.
///
/// Hypothesis violations (non-commuting or negative-entry factors, unstable
/// surplus factors) yield Indeterminate: the criterion does not apply.
pub fn check_hadamard_sufficient(
    c_factors: &[Mat],
    a_factors: &[Mat],
    s_grid: Option<&[f64]>,
    tol: f64,
) -> Result<PositivityVerdict> {
    let q1 = c_factors.len();
    if a_factors.len() < q1 {
        return Err(McarmaError::Precondition(format!(
            "need at least {q1} autoregressive factors, got {}",
            a_factors.len()
        )));
    }
    let all: Vec<&Mat> = c_factors.iter().chain(a_factors.iter()).collect();
    let d = all[0].nrows();
    for m in &all {
        if m.nrows() != d || m.ncols() != d {
            return Err(McarmaError::DimensionMismatch("factor shapes differ".into()));
        }
        let min_entry = m.iter().copied().fold(f64::INFINITY, f64::min);
        if min_entry < -tol {
            return Ok(PositivityVerdict::indeterminate(format!(
                "factor has a negative entry ({min_entry:e}); families must be positive matrices"
            )));
        }
    }
    for i in 0..all.len() {
        for j in (i + 1)..all.len() {
            let comm = fro(&(all[i] * all[j] - all[j] * all[i]));
            let scale = fro(all[i]) * fro(all[j]);
            if comm > 1e-10 * scale.max(1.0) {
                return Ok(PositivityVerdict::indeterminate(format!(
                    "families do not commute (||[F_{i}, F_{j}]|| = {comm:e})"
                )));
            }
        }
    }
    for (i, extra) in a_factors.iter().enumerate().skip(q1) {
        let tau = spectral_bound(extra)?;
        if tau >= 0.0 {
            return Ok(PositivityVerdict::indeterminate(format!(
                "surplus factor A_{} must satisfy tau < 0 (got {tau})",
                i + 1
            )));
        }
    }

    let default_grid;
    let grid = match s_grid {
        Some(g) => g,
        None => {
            default_grid = (1..=200).map(|k| 50.0 * k as f64 / 200.0).collect::<Vec<_>>();
            &default_grid
        }
    };
    let mut worst = f64::INFINITY;
    for &s in grid {
        let mut diff = Mat::zeros(d, d);
        for i in 0..q1 {
            diff += expm(&(&a_factors[i] * s))? - expm(&(&c_factors[i] * s))?;
        }
        let (mut min_entry, mut arg) = (f64::INFINITY, (0, 0));
        for i in 0..d {
            for j in 0..d {
                if diff[(i, j)] < min_entry {
                    min_entry = diff[(i, j)];
                    arg = (i, j);
                }
            }
        }
        if min_entry < -tol {
            let mut e = vec![0.0; d * d];
            e[arg.0 + arg.1 * d] = 1.0;
            return Ok(PositivityVerdict::refuted(Witness {
                element: e,
                direction: None,
                location: Some(s),
                margin: min_entry,
            }));
        }
        worst = worst.min(min_entry);
    }
    Ok(PositivityVerdict::sampled(grid.len(), worst))
}

/// Coefficient conditions for non-stable output processes: A_1 quasi-positive
/// and A_2..A_p, C_0..C_q positive operators. On the orthant this is the
/// exact entrywise characterization; on the PSD cone structural tags certify.
pub fn certify_internal_positivity<R: Rng + ?Sized>(
    model: &MCARMAModel,
    params: &SampleParams,
    rng: &mut R,
) -> Result<(PositivityVerdict, Vec<String>)> {
    let cone = model_cone(model)?;
    let mut notes = Vec::new();
    let form = model.build_companion();
    let cls = classify(&form)?;
    if cls.kind == ModelKind::Causal {
        notes.push(format!(
            "model is causal (tau = {:.3e}); the internal-positivity conditions force tau >= 0, so they cannot all hold",
            cls.tau
        ));
    }
    let mut verdict = is_quasi_positive(&model.a_ops()[0], cone, params, rng)?;
    if verdict.is_refuted() {
        verdict.reason = Some("A_1 is not quasi-positive".into());
        return Ok((verdict, notes));
    }
    for (i, op) in model.a_ops().iter().enumerate().skip(1) {
        let mut v = is_positive_operator(op, cone, params, rng)?;
        if v.is_refuted() {
            v.reason = Some(format!("A_{} is not a positive operator", i + 1));
            return Ok((v, notes));
        }
        verdict = verdict.combine(v);
    }
    for (j, op) in model.c_ops().iter().enumerate() {
        let mut v = is_positive_operator(op, cone, params, rng)?;
        if v.is_refuted() {
            v.reason = Some(format!("C_{j} is not a positive operator"));
            return Ok((v, notes));
        }
        verdict = verdict.combine(v);
    }
    Ok((verdict, notes))
}

/// Empirical falsification backstop: cone margins over every simulated path.
#[derive(Debug, Clone, Serialize)]
pub struct PathValidation {
    pub min_margin: f64,
    pub worst_path: usize,
    pub worst_time: f64,
    pub scale: f64,
    pub pass: bool,
}

pub fn validate_paths(bundle: &PathBundle, cone: &ConeSpec) -> Result<PathValidation> {
    let mut min_margin = f64::INFINITY;
    let mut worst = (0usize, 0usize);
    let mut scale: f64 = 1.0;
    for (pid, path) in bundle.x_paths.iter().enumerate() {
        for (ti, x) in path.iter().enumerate() {
            scale = scale.max(fro(x));
            let m = contains(cone, x)?;
            if m.margin < min_margin {
                min_margin = m.margin;
                worst = (pid, ti);
            }
        }
    }
    let pass = min_margin >= -1e-8 * scale;
    Ok(PathValidation {
        min_margin,
        worst_path: worst.0,
        worst_time: bundle.grid[worst.1],
        scale,
        pass,
    })
}
