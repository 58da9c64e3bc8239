//! Stochastic covariance models: a d-dimensional log-price driven by a
//! cone-valued spot covariance path (OU, well-balanced OU or a general
//! MCARMA model), realized returns, and empirical vs theoretical
//! autocovariance of squared returns.

use crate::error::{McarmaError, Result};
use crate::levy::LevySpec;
use crate::linop::LinOpNM;
use crate::matops::{fro, vec_of, Mat, Vecf};
use crate::model::{classify, MCARMAModel, ModelKind};
use crate::moments::{acov_sqret_ou, acov_sqret_wb, ou_mean, wb_mean};
use crate::rng::StreamFactory;
use crate::simulate::{
    simulate_stationary_causal, simulate_stationary_noncausal, simulate_wellbalanced_ou,
    PathBundle,
};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

/// Spot covariance process choice.
#[derive(Debug, Clone)]
pub enum CovProcess {
    /// dX = -A X dt + dL.
    Ou { a: LinOpNM, levy: LevySpec },
    /// Two-sided exponential smoothing with kernel e^{-|t|A}.
    WellBalanced { a: LinOpNM, levy: LevySpec },
    /// Any cone-valued MCARMA model (simulated by classification).
    Mcarma(Box<MCARMAModel>),
}

/// Log-price model dY = (alpha + X beta) dt + X^{1/2} dW with spot
/// covariance X; Delta is the return horizon, Delta_sim the Euler step.
#[derive(Debug, Clone)]
pub struct StochCovModel {
    pub d: usize,
    pub alpha: Vecf,
    pub beta: Vecf,
    pub cov: CovProcess,
    pub delta: f64,
    pub delta_sim: f64,
}

impl StochCovModel {
    pub fn validate(&self) -> Result<()> {
        if self.alpha.len() != self.d || self.beta.len() != self.d {
            return Err(McarmaError::InvalidModel("alpha/beta must have length d".into()));
        }
        if !(self.delta > 0.0 && self.delta_sim > 0.0) {
            return Err(McarmaError::InvalidModel("Delta and Delta_sim must be positive".into()));
        }
        let ratio = self.delta / self.delta_sim;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(McarmaError::InvalidModel(
                "Delta must be an integer multiple of Delta_sim".into(),
            ));
        }
        let dims = match &self.cov {
            CovProcess::Ou { a, .. } | CovProcess::WellBalanced { a, .. } => a.dims(),
            CovProcess::Mcarma(m) => m.dims(),
        };
        if dims != (self.d, self.d) {
            return Err(McarmaError::InvalidModel(format!(
                "covariance process lives on {dims:?}, price needs {0}x{0}",
                self.d
            )));
        }
        Ok(())
    }

    pub fn steps_per_return(&self) -> usize {
        (self.delta / self.delta_sim).round() as usize
    }

    /// Stationary mean of the spot covariance (closed form).
    pub fn cov_mean_theory(&self) -> Result<Mat> {
        match &self.cov {
            CovProcess::Ou { a, levy } => ou_mean(a.rep(), levy),
            CovProcess::WellBalanced { a, levy } => wb_mean(a.rep(), levy),
            CovProcess::Mcarma(m) => {
                let form = m.build_companion();
                crate::moments::stationary_mean(m, &form)
            }
        }
    }

    /// Closed-form autocovariance of squared returns at lag h >= 1.
    pub fn sqret_acov_theory(&self, h: usize) -> Result<Mat> {
        match &self.cov {
            CovProcess::Ou { a, levy } => {
                let q = levy.covariance_operator()?.rep().clone();
                acov_sqret_ou(a.rep(), &q, self.delta, h)
            }
            CovProcess::WellBalanced { a, levy } => {
                let q = levy.covariance_operator()?.rep().clone();
                acov_sqret_wb(a.rep(), &q, self.delta, h)
            }
            CovProcess::Mcarma(_) => Err(McarmaError::Precondition(
                "no closed-form squared-return autocovariance for general MCARMA".into(),
            )),
        }
    }

    /// Simulate stationary spot covariance paths on the inner grid covering
    /// `n_returns` return horizons.
    pub fn simulate_cov(
        &self,
        n_paths: usize,
        n_returns: usize,
        factory: &StreamFactory,
        base_id: u64,
        tol: f64,
    ) -> Result<PathBundle> {
        let steps = self.steps_per_return() * n_returns;
        let grid: Vec<f64> = (0..=steps).map(|k| k as f64 * self.delta_sim).collect();
        match &self.cov {
            CovProcess::Ou { a, levy } => {
                let model = MCARMAModel::ou(a, None, levy.clone())?;
                simulate_stationary_causal(&model, &grid, n_paths, factory, base_id, tol)
            }
            CovProcess::WellBalanced { a, levy } => {
                simulate_wellbalanced_ou(a, levy, &grid, n_paths, factory, base_id, tol)
            }
            CovProcess::Mcarma(m) => {
                let form = m.build_companion();
                match classify(&form)?.kind {
                    ModelKind::Causal => {
                        simulate_stationary_causal(m, &grid, n_paths, factory, base_id, tol)
                    }
                    ModelKind::NonCausalStationary => {
                        simulate_stationary_noncausal(m, &grid, n_paths, factory, base_id, tol)
                    }
                    ModelKind::NonStationary => Err(McarmaError::Precondition(
                        "covariance process must be stationary".into(),
                    )),
                }
            }
        }
    }
}

/// Eigenvalue-clamp telemetry of the matrix square roots.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ClampStats {
    pub clamped_eigenvalues: usize,
    pub total_eigenvalues: usize,
}

impl ClampStats {
    pub fn fraction(&self) -> f64 {
        if self.total_eigenvalues == 0 {
            0.0
        } else {
            self.clamped_eigenvalues as f64 / self.total_eigenvalues as f64
        }
    }
}

/// PSD square root with negative eigenvalues clamped to zero. Errors when an
/// eigenvalue falls below -1e-8 * scale (the path is not PSD to tolerance).
fn sqrt_psd_clamped(x: &Mat, stats: &mut ClampStats) -> Result<Mat> {
    let sym = (x + x.transpose()) * 0.5;
    let scale = fro(&sym).max(1.0);
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        stats.total_eigenvalues += 1;
        if *v < -1e-8 * scale {
            return Err(McarmaError::Precondition(format!(
                "covariance path leaves the PSD cone (eigenvalue {v:e})"
            )));
        }
        if *v < 0.0 {
            stats.clamped_eigenvalues += 1;
            *v = 0.0;
        }
    }
    let sqrt_diag = Mat::from_diagonal(&vals.map(f64::sqrt));
    Ok(&eig.eigenvectors * sqrt_diag * eig.eigenvectors.transpose())
}

/// Euler-Maruyama log-price paths over the covariance bundle's grid.
/// Price path k uses stream `base_id + k`. Returns (paths, clamp telemetry).
pub fn simulate_price(
    model: &StochCovModel,
    cov: &PathBundle,
    factory: &StreamFactory,
    base_id: u64,
) -> Result<(Vec<Vec<Vecf>>, ClampStats)> {
    model.validate()?;
    if cov.n != model.d || cov.m != model.d {
        return Err(McarmaError::DimensionMismatch("covariance paths vs price dim".into()));
    }
    let d = model.d;
    let results: Vec<Result<(Vec<Vecf>, ClampStats)>> = cov
        .x_paths
        .par_iter()
        .enumerate()
        .map(|(k, xpath)| {
            let mut rng = factory.stream(base_id + k as u64);
            let mut stats = ClampStats::default();
            let mut y = Vecf::zeros(d);
            let mut out = Vec::with_capacity(xpath.len());
            out.push(y.clone());
            for t in 0..xpath.len() - 1 {
                let dt = cov.grid[t + 1] - cov.grid[t];
                let x = &xpath[t];
                let root = sqrt_psd_clamped(x, &mut stats)?;
                let noise = Vecf::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                y += (&model.alpha + x * &model.beta) * dt + root * noise * dt.sqrt();
                out.push(y.clone());
            }
            Ok((out, stats))
        })
        .collect();
    let mut paths = Vec::with_capacity(cov.n_paths());
    let mut stats = ClampStats::default();
    for r in results {
        let (p, s) = r?;
        paths.push(p);
        stats.clamped_eigenvalues += s.clamped_eigenvalues;
        stats.total_eigenvalues += s.total_eigenvalues;
    }
    Ok((paths, stats))
}

/// Log-returns over horizon Delta: Y_{n Delta} - Y_{(n-1) Delta}.
pub fn realized_returns(
    prices: &[Vec<Vecf>],
    steps_per_return: usize,
) -> Result<Vec<Vec<Vecf>>> {
    if steps_per_return == 0 {
        return Err(McarmaError::Precondition("steps_per_return must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(prices.len());
    for path in prices {
        let n_ret = (path.len() - 1) / steps_per_return;
        if n_ret == 0 {
            return Err(McarmaError::InsufficientData("grid shorter than one return horizon".into()));
        }
        let mut rets = Vec::with_capacity(n_ret);
        for n in 1..=n_ret {
            rets.push(&path[n * steps_per_return] - &path[(n - 1) * steps_per_return]);
        }
        out.push(rets);
    }
    Ok(out)
}

/// Increments of the integrated covariance X_n = X+(n Delta) - X+((n-1) Delta)
/// as vec sequences, from per-path running integrals.
pub fn integrated_cov_increments(
    integrals: &[Vec<Mat>],
    steps_per_return: usize,
) -> Result<Vec<Vec<Vecf>>> {
    let mut out = Vec::with_capacity(integrals.len());
    for path in integrals {
        let n_ret = (path.len() - 1) / steps_per_return;
        let mut v = Vec::with_capacity(n_ret);
        for n in 1..=n_ret {
            v.push(vec_of(&(&path[n * steps_per_return] - &path[(n - 1) * steps_per_return])));
        }
        out.push(v);
    }
    Ok(out)
}

/// Series of vec(Y_n Y_n^T) per path.
pub fn squared_return_series(returns: &[Vec<Vecf>]) -> Vec<Vec<Vecf>> {
    returns
        .iter()
        .map(|path| path.iter().map(|y| vec_of(&(y * y.transpose()))).collect())
        .collect()
}

fn global_mean(series: &[Vec<Vecf>], dim: usize) -> Vecf {
    let mut mean = Vecf::zeros(dim);
    let mut count = 0usize;
    for path in series {
        for v in path {
            mean += v;
            count += 1;
        }
    }
    mean / count.max(1) as f64
}

/// Sample autocovariance at integer lag h of a vector-valued stationary
/// series, pooled over paths, with standard errors.
///
/// Centering uses the GLOBAL mean (per-chunk demeaning biases the estimate
/// by O(correlation time / chunk length)). With >= 8 paths the SE comes from
/// across-path replicates; a single long path uses batch means with a fixed
/// small batch count, so batches get longer (not more numerous) with the
/// sample size.
pub fn acov_vec_series(series: &[Vec<Vecf>], h: usize) -> Result<(Mat, Mat)> {
    if series.is_empty() || series[0].is_empty() {
        return Err(McarmaError::InsufficientData("empty series".into()));
    }
    let dim = series[0][0].len();
    let shortest = series.iter().map(Vec::len).min().unwrap();
    if shortest < 2 * (h + 1) {
        return Err(McarmaError::InsufficientData(format!(
            "need at least {} observations for lag {h}, got {shortest}",
            2 * (h + 1)
        )));
    }
    let mean = global_mean(series, dim);
    let acov_of = |chunk: &[Vecf]| -> Mat {
        let n = chunk.len();
        let mut acc = Mat::zeros(dim, dim);
        for t in 0..n - h {
            let a = &chunk[t + h] - &mean;
            let b = &chunk[t] - &mean;
            acc += a * b.transpose();
        }
        acc / (n - h) as f64
    };

    if series.len() >= 8 {
        let reps: Vec<Mat> = series.iter().map(|p| acov_of(p)).collect();
        Ok(mean_and_se(&reps))
    } else {
        let path = &series[0];
        let n_batches = 32.min(path.len() / (2 * (h + 1)).max(1)).max(1);
        if n_batches < 4 {
            return Err(McarmaError::InsufficientData("too few observations for batch means".into()));
        }
        let blen = path.len() / n_batches;
        let reps: Vec<Mat> = (0..n_batches)
            .map(|b| acov_of(&path[b * blen..(b + 1) * blen]))
            .collect();
        Ok(mean_and_se(&reps))
    }
}

/// Sample mean of a vector-valued series with standard errors (same
/// replicate logic as [`acov_vec_series`]).
pub fn mean_vec_series(series: &[Vec<Vecf>]) -> Result<(Vecf, Vecf)> {
    if series.is_empty() || series[0].is_empty() {
        return Err(McarmaError::InsufficientData("empty series".into()));
    }
    let dim = series[0][0].len();
    let mean_of = |chunk: &[Vecf]| -> Vecf {
        let mut m = Vecf::zeros(dim);
        for v in chunk {
            m += v;
        }
        m / chunk.len() as f64
    };
    let reps: Vec<Vecf> = if series.len() >= 8 {
        series.iter().map(|p| mean_of(p)).collect()
    } else {
        let path = &series[0];
        let n_batches = 32.min(path.len() / 4).max(1);
        let blen = (path.len() / n_batches).max(1);
        (0..n_batches)
            .map(|b| mean_of(&path[b * blen..((b + 1) * blen).min(path.len())]))
            .collect()
    };
    let b = reps.len() as f64;
    let mut mean = Vecf::zeros(dim);
    for r in &reps {
        mean += r;
    }
    mean /= b;
    let mut var = Vecf::zeros(dim);
    for r in &reps {
        let d = r - &mean;
        var += d.component_mul(&d);
    }
    let se = (var / (b * (b - 1.0).max(1.0))).map(f64::sqrt);
    Ok((mean, se))
}

fn mean_and_se(reps: &[Mat]) -> (Mat, Mat) {
    let b = reps.len() as f64;
    let (r, c) = (reps[0].nrows(), reps[0].ncols());
    let mut mean = Mat::zeros(r, c);
    for m in reps {
        mean += m;
    }
    mean /= b;
    let mut var = Mat::zeros(r, c);
    for m in reps {
        let d = m - &mean;
        var += d.component_mul(&d);
    }
    let se = (var / (b * (b - 1.0).max(1.0))).map(f64::sqrt);
    (mean, se)
}

/// One theory-vs-estimate line of the validation report.
#[derive(Debug, Clone, Serialize)]
pub struct MetricEntry {
    pub metric: String,
    pub theory: f64,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StochvolReport {
    pub schema_version: u32,
    pub entries: Vec<MetricEntry>,
    pub clamp_fraction: f64,
    pub max_abs_z: f64,
    pub pass: bool,
}

fn push_matrix_metrics(
    entries: &mut Vec<MetricEntry>,
    name: &str,
    theory: &Mat,
    estimate: &Mat,
    se: &Mat,
) {
    for j in 0..theory.ncols() {
        for i in 0..theory.nrows() {
            let s = se[(i, j)].max(1e-300);
            let z = (estimate[(i, j)] - theory[(i, j)]) / s;
            entries.push(MetricEntry {
                metric: format!("{name}[{},{}]", i + 1, j + 1),
                theory: theory[(i, j)],
                estimate: estimate[(i, j)],
                se: se[(i, j)],
                z,
            });
        }
    }
}

/// Monte Carlo validation of the squared-return second-order structure
/// against the closed forms, reported as z-scores (pass: all |z| < 4).
pub fn compare_report(
    model: &StochCovModel,
    n_paths: usize,
    n_returns_per_path: usize,
    lags: &[usize],
    factory: &StreamFactory,
) -> Result<StochvolReport> {
    model.validate()?;
    let cov = model.simulate_cov(n_paths, n_returns_per_path, factory, 0, 1e-10)?;
    let (prices, clamp) = simulate_price(model, &cov, factory, 1_000_000)?;
    let returns = realized_returns(&prices, model.steps_per_return())?;
    let sq = squared_return_series(&returns);

    let mut entries = Vec::new();

    // E[Y_n Y_n^T] = Delta E[X] + (alpha Delta + E[X] beta Delta)(...)^T second
    // order in Delta; compare only the driftless case exactly
    if model.alpha.iter().all(|v| *v == 0.0) && model.beta.iter().all(|v| *v == 0.0) {
        let theory_mean = model.cov_mean_theory()? * model.delta;
        let (est, se) = mean_vec_series(&sq)?;
        let dsq = model.d * model.d;
        let est_m = Mat::from_fn(model.d, model.d, |i, j| est[i + j * model.d]);
        let se_m = Mat::from_fn(model.d, model.d, |i, j| se[i + j * model.d]);
        let _ = dsq;
        push_matrix_metrics(&mut entries, "mean_sqret", &theory_mean, &est_m, &se_m);
    }

    for &h in lags {
        let theory = model.sqret_acov_theory(h)?;
        let (est, se) = acov_vec_series(&sq, h)?;
        push_matrix_metrics(&mut entries, &format!("acov_sqret(h={h})"), &theory, &est, &se);
    }

    let max_abs_z = entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max);
    Ok(StochvolReport {
        schema_version: 1,
        entries,
        clamp_fraction: clamp.fraction(),
        max_abs_z,
        pass: max_abs_z < 4.0,
    })
}

/// Returns CSV: n, path_id, vec(Y) entries, then vec(Y Y^T) entries.
pub fn write_returns_csv<W: Write>(returns: &[Vec<Vecf>], d: usize, w: &mut W) -> std::io::Result<()> {
    let mut header = String::from("n,path_id");
    for i in 0..d {
        header.push_str(&format!(",y_{}", i + 1));
    }
    for j in 0..d {
        for i in 0..d {
            header.push_str(&format!(",yy_{}_{}", i + 1, j + 1));
        }
    }
    writeln!(w, "{header}")?;
    for (pid, path) in returns.iter().enumerate() {
        for (n, y) in path.iter().enumerate() {
            let mut line = format!("{},{}", n + 1, pid);
            for v in y.iter() {
                line.push_str(&format!(",{v}"));
            }
            let yy = y * y.transpose();
            for v in yy.iter() {
                line.push_str(&format!(",{v}"));
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}
