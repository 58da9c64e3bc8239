//! Convex cone specifications (positive orthant, PSD cone, finite products)
//! and the positive/quasi-positive operator predicates.
//!
//! Orthant verdicts are exact (entrywise characterizations). For the PSD cone
//! no finite entrywise test decides membership of pi(C); structural tags get
//! certified verdicts, everything else is sampled on random extreme rays and
//! can only be Refuted (with a concrete witness) or SampledPositive.

use crate::error::{McarmaError, Result};
use crate::linop::{LinOpNM, OpTag};
use crate::matops::{expm, fro, Mat};
use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

pub const DEFAULT_CONE_TOL: f64 = 1e-9;
pub const DEFAULT_RAY_SAMPLES: usize = 2000;

/// A convex cone in a real matrix space.
#[derive(Debug, Clone, PartialEq)]
pub enum ConeSpec {
    /// Nonnegative orthant in R^d (column vectors, m = 1).
    Orthant { d: usize, tol: f64 },
    /// Symmetric positive semidefinite d x d matrices.
    Psd { d: usize, tol: f64 },
    /// p-fold Cartesian product of a base cone, stacked vertically.
    Product { base: Box<ConeSpec>, copies: usize, tol: f64 },
}

impl ConeSpec {
    pub fn orthant(d: usize) -> Self {
        ConeSpec::Orthant { d, tol: DEFAULT_CONE_TOL }
    }

    pub fn psd(d: usize) -> Self {
        ConeSpec::Psd { d, tol: DEFAULT_CONE_TOL }
    }

    /// Product cone; products of products flatten.
    pub fn product(base: ConeSpec, copies: usize) -> Self {
        match base {
            ConeSpec::Product { base: inner, copies: c0, tol } => {
                ConeSpec::Product { base: inner, copies: c0 * copies, tol }
            }
            other => {
                let tol = other.tol();
                ConeSpec::Product { base: Box::new(other), copies, tol }
            }
        }
    }

    pub fn tol(&self) -> f64 {
        match self {
            ConeSpec::Orthant { tol, .. }
            | ConeSpec::Psd { tol, .. }
            | ConeSpec::Product { tol, .. } => *tol,
        }
    }

    pub fn with_tol(self, tol: f64) -> Self {
        match self {
            ConeSpec::Orthant { d, .. } => ConeSpec::Orthant { d, tol },
            ConeSpec::Psd { d, .. } => ConeSpec::Psd { d, tol },
            ConeSpec::Product { base, copies, .. } => ConeSpec::Product { base, copies, tol },
        }
    }

    /// Shape (rows, cols) of the matrices the cone lives in.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            ConeSpec::Orthant { d, .. } => (*d, 1),
            ConeSpec::Psd { d, .. } => (*d, *d),
            ConeSpec::Product { base, copies, .. } => {
                let (n, m) = base.dims();
                (n * copies, m)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ConeSpec::Orthant { d, .. } => format!("orthant({d})"),
            ConeSpec::Psd { d, .. } => format!("psd({d})"),
            ConeSpec::Product { base, copies, .. } => format!("{}^{}", base.describe(), copies),
        }
    }
}

/// Signed distance-like membership margin: nonnegative inside the cone.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Membership {
    pub inside: bool,
    pub margin: f64,
}

/// Cone membership with margin. Orthant: min entry. PSD: min eigenvalue of
/// the symmetric part, provided the asymmetry is within tolerance.
pub fn contains(cone: &ConeSpec, x: &Mat) -> Result<Membership> {
    let (n, m) = cone.dims();
    if x.nrows() != n || x.ncols() != m {
        return Err(McarmaError::DimensionMismatch(format!(
            "cone {} expects {}x{}, got {}x{}",
            cone.describe(),
            n,
            m,
            x.nrows(),
            x.ncols()
        )));
    }
    let margin = membership_margin(cone, x)?;
    Ok(Membership { inside: margin >= -cone.tol(), margin })
}

fn membership_margin(cone: &ConeSpec, x: &Mat) -> Result<f64> {
    match cone {
        ConeSpec::Orthant { .. } => Ok(x.iter().copied().fold(f64::INFINITY, f64::min)),
        ConeSpec::Psd { tol, .. } => {
            let asym = fro(&(x - x.transpose())) * 0.5;
            let scale = fro(x).max(1.0);
            let sym = (x + x.transpose()) * 0.5;
            let eig = nalgebra::SymmetricEigen::new(sym);
            let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            if asym > tol * scale {
                // asymmetric matrices are outside; report through the margin
                Ok(min_eig.min(-asym))
            } else {
                Ok(min_eig)
            }
        }
        ConeSpec::Product { base, copies, .. } => {
            let (bn, _) = base.dims();
            let mut worst = f64::INFINITY;
            for k in 0..*copies {
                let blk = x.view((k * bn, 0), (bn, x.ncols())).into_owned();
                worst = worst.min(membership_margin(base, &blk)?);
            }
            Ok(worst)
        }
    }
}

/// Outcome levels of a positivity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum VerdictStatus {
    CertifiedPositive,
    SampledPositive { samples: usize },
    Refuted,
    Indeterminate,
}

/// A concrete element demonstrating a violation.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    /// Cone element (ray) on which the violation occurs.
    pub element: Vec<f64>,
    /// Image or pairing direction exhibiting the violation, when applicable.
    pub direction: Option<Vec<f64>>,
    /// Grid location (time/decay variable) for kernel-type checks.
    pub location: Option<f64>,
    /// Numeric margin of the violation (negative).
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityVerdict {
    #[serde(flatten)]
    pub status: VerdictStatus,
    pub margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl PositivityVerdict {
    pub fn certified(margin: f64) -> Self {
        PositivityVerdict { status: VerdictStatus::CertifiedPositive, margin, witness: None, reason: None }
    }

    pub fn sampled(samples: usize, margin: f64) -> Self {
        PositivityVerdict {
            status: VerdictStatus::SampledPositive { samples },
            margin,
            witness: None,
            reason: None,
        }
    }

    pub fn refuted(witness: Witness) -> Self {
        let margin = witness.margin;
        PositivityVerdict { status: VerdictStatus::Refuted, margin, witness: Some(witness), reason: None }
    }

    pub fn indeterminate(reason: impl Into<String>) -> Self {
        PositivityVerdict {
            status: VerdictStatus::Indeterminate,
            margin: f64::NAN,
            witness: None,
            reason: Some(reason.into()),
        }
    }

    pub fn is_refuted(&self) -> bool {
        matches!(self.status, VerdictStatus::Refuted)
    }

    pub fn is_certified(&self) -> bool {
        matches!(self.status, VerdictStatus::CertifiedPositive)
    }

    /// At least SampledPositive (i.e. not Refuted, not Indeterminate).
    pub fn is_positive(&self) -> bool {
        matches!(
            self.status,
            VerdictStatus::CertifiedPositive | VerdictStatus::SampledPositive { .. }
        )
    }

    fn rank(&self) -> u8 {
        match self.status {
            VerdictStatus::CertifiedPositive => 0,
            VerdictStatus::SampledPositive { .. } => 1,
            VerdictStatus::Indeterminate => 2,
            VerdictStatus::Refuted => 3,
        }
    }

    /// Verdict ordering under composition/conjunction: Certified only if all
    /// certified, any Sampled degrades to Sampled, Refuted dominates.
    pub fn combine(self, other: PositivityVerdict) -> PositivityVerdict {
        let (mut worst, better) = if self.rank() >= other.rank() { (self, other) } else { (other, self) };
        if let (VerdictStatus::SampledPositive { samples: a }, VerdictStatus::SampledPositive { samples: b }) =
            (&mut worst.status, &better.status)
        {
            *a = (*a).min(*b);
        }
        if worst.margin.is_nan() || better.margin < worst.margin {
            if !better.margin.is_nan() && !worst.is_refuted() {
                worst.margin = worst.margin.min(better.margin);
            }
        }
        worst
    }
}

/// Sampling configuration for the undecidable PSD checks.
#[derive(Debug, Clone, Copy)]
pub struct SampleParams {
    pub samples: usize,
    pub tol: f64,
}

impl Default for SampleParams {
    fn default() -> Self {
        SampleParams { samples: DEFAULT_RAY_SAMPLES, tol: DEFAULT_CONE_TOL }
    }
}

fn unit_gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Orthogonal unit pair via Gram-Schmidt.
fn orthogonal_pair<R: Rng + ?Sized>(d: usize, rng: &mut R) -> (DVector<f64>, DVector<f64>) {
    loop {
        let x = unit_gaussian(d, rng);
        let mut y = unit_gaussian(d, rng);
        y -= &x * x.dot(&y);
        let n = y.norm();
        if n > 1e-8 {
            return (x, y / n);
        }
    }
}

/// Is `op` a positive operator (maps the cone into itself)?
pub fn is_positive_operator<R: Rng + ?Sized>(
    op: &LinOpNM,
    cone: &ConeSpec,
    params: &SampleParams,
    rng: &mut R,
) -> Result<PositivityVerdict> {
    check_op_dims(op, cone)?;
    match cone {
        ConeSpec::Orthant { .. } => {
            // pi(R^d_+) = entrywise nonnegative matrices; exact test.
            let mut min_entry = f64::INFINITY;
            let mut arg = (0, 0);
            for (idx, v) in op.rep().iter().enumerate() {
                if *v < min_entry {
                    min_entry = *v;
                    arg = (idx % op.rep().nrows(), idx / op.rep().nrows());
                }
            }
            if min_entry >= -params.tol {
                Ok(PositivityVerdict::certified(min_entry))
            } else {
                let d = cone.dims().0;
                let mut e = vec![0.0; d];
                e[arg.1] = 1.0; // op(e_col) has the negative entry at row arg.0
                let mut dir = vec![0.0; d];
                dir[arg.0] = 1.0;
                Ok(PositivityVerdict::refuted(Witness {
                    element: e,
                    direction: Some(dir),
                    location: None,
                    margin: min_entry,
                }))
            }
        }
        ConeSpec::Psd { d, .. } => match op.tag() {
            OpTag::Conjugation(_) | OpTag::Identity | OpTag::Zero => {
                Ok(PositivityVerdict::certified(0.0))
            }
            _ => {
                // sample extreme rays x x^T
                let mut worst = f64::INFINITY;
                for _ in 0..params.samples {
                    let x = unit_gaussian(*d, rng);
                    let ray = &x * x.transpose();
                    let img = op.apply(&ray)?;
                    let margin = membership_margin(&ConeSpec::psd(*d), &img)?;
                    let scale = fro(&img).max(1.0);
                    if margin < -params.tol * scale {
                        return Ok(PositivityVerdict::refuted(Witness {
                            element: ray.as_slice().to_vec(),
                            direction: Some(img.as_slice().to_vec()),
                            location: None,
                            margin,
                        }));
                    }
                    worst = worst.min(margin);
                }
                Ok(PositivityVerdict::sampled(params.samples, worst))
            }
        },
        ConeSpec::Product { base, copies, .. } => {
            // Operators on stacked spaces: sample blockwise rays.
            let (bn, bm) = base.dims();
            let mut worst = f64::INFINITY;
            for _ in 0..params.samples {
                let x = random_cone_element(base, rng)?;
                let mut stacked = Mat::zeros(bn * copies, bm);
                for k in 0..*copies {
                    stacked.view_mut((k * bn, 0), (bn, bm)).copy_from(&x);
                }
                let img = op.apply(&stacked)?;
                let margin = membership_margin(cone, &img)?;
                let scale = fro(&img).max(1.0);
                if margin < -params.tol * scale {
                    return Ok(PositivityVerdict::refuted(Witness {
                        element: stacked.as_slice().to_vec(),
                        direction: Some(img.as_slice().to_vec()),
                        location: None,
                        margin,
                    }));
                }
                worst = worst.min(margin);
            }
            Ok(PositivityVerdict::sampled(params.samples, worst))
        }
    }
}

/// Random extreme-ish cone element (unit scale).
pub fn random_cone_element<R: Rng + ?Sized>(cone: &ConeSpec, rng: &mut R) -> Result<Mat> {
    match cone {
        ConeSpec::Orthant { d, .. } => {
            let v = unit_gaussian(*d, rng);
            Ok(Mat::from_fn(*d, 1, |i, _| v[i].abs()))
        }
        ConeSpec::Psd { d, .. } => {
            let x = unit_gaussian(*d, rng);
            Ok(&x * x.transpose())
        }
        ConeSpec::Product { base, copies, .. } => {
            let (bn, bm) = base.dims();
            let mut out = Mat::zeros(bn * copies, bm);
            for k in 0..*copies {
                let blk = random_cone_element(base, rng)?;
                out.view_mut((k * bn, 0), (bn, bm)).copy_from(&blk);
            }
            Ok(out)
        }
    }
}

/// Orthogonal pair (u, v) of cone elements with <u, v> = 0.
pub fn random_orthogonal_cone_pair<R: Rng + ?Sized>(
    cone: &ConeSpec,
    rng: &mut R,
) -> Result<(Mat, Mat)> {
    match cone {
        ConeSpec::Orthant { d, .. } => {
            // disjoint supports
            let mut u = Mat::zeros(*d, 1);
            let mut v = Mat::zeros(*d, 1);
            loop {
                let mut any_u = false;
                let mut any_v = false;
                for i in 0..*d {
                    let val: f64 = rng.sample::<f64, _>(StandardNormal);
                    if rng.gen::<bool>() {
                        u[(i, 0)] = val.abs();
                        v[(i, 0)] = 0.0;
                        any_u = true;
                    } else {
                        v[(i, 0)] = val.abs();
                        u[(i, 0)] = 0.0;
                        any_v = true;
                    }
                }
                if (any_u && any_v) || *d == 1 {
                    return Ok((u, v));
                }
            }
        }
        ConeSpec::Psd { d, .. } => {
            if *d == 1 {
                // only the trivial orthogonal pair exists; use (x, 0)
                return Ok((Mat::from_element(1, 1, 1.0), Mat::zeros(1, 1)));
            }
            let (x, y) = orthogonal_pair(*d, rng);
            Ok((&x * x.transpose(), &y * y.transpose()))
        }
        ConeSpec::Product { base, copies, .. } => {
            let (bn, bm) = base.dims();
            let mut u = Mat::zeros(bn * copies, bm);
            let mut v = Mat::zeros(bn * copies, bm);
            for k in 0..*copies {
                let (ub, vb) = random_orthogonal_cone_pair(base, rng)?;
                u.view_mut((k * bn, 0), (bn, bm)).copy_from(&ub);
                v.view_mut((k * bn, 0), (bn, bm)).copy_from(&vb);
            }
            Ok((u, v))
        }
    }
}

fn inner(a: &Mat, b: &Mat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Is `op` quasi-positive (generates a positive semigroup on the cone)?
pub fn is_quasi_positive<R: Rng + ?Sized>(
    op: &LinOpNM,
    cone: &ConeSpec,
    params: &SampleParams,
    rng: &mut R,
) -> Result<PositivityVerdict> {
    check_op_dims(op, cone)?;
    match cone {
        ConeSpec::Orthant { d, .. } => {
            // quasi-positive (Metzler): off-diagonal entries nonnegative.
            let rep = op.rep();
            let mut min_off = f64::INFINITY;
            let mut arg = (0, 0);
            for i in 0..*d {
                for j in 0..*d {
                    if i != j && rep[(i, j)] < min_off {
                        min_off = rep[(i, j)];
                        arg = (i, j);
                    }
                }
            }
            if *d == 1 || min_off >= -params.tol {
                Ok(PositivityVerdict::certified(if *d == 1 { 0.0 } else { min_off }))
            } else {
                let mut u = vec![0.0; *d];
                u[arg.1] = 1.0;
                let mut v = vec![0.0; *d];
                v[arg.0] = 1.0;
                Ok(PositivityVerdict::refuted(Witness {
                    element: u,
                    direction: Some(v),
                    location: None,
                    margin: min_off,
                }))
            }
        }
        ConeSpec::Psd { d, .. } => match op.tag() {
            OpTag::LyapunovForm(_) | OpTag::Conjugation(_) | OpTag::Identity | OpTag::Zero => {
                Ok(PositivityVerdict::certified(0.0))
            }
            _ => sampled_quasi_positive(op, cone, *d, params, rng),
        },
        ConeSpec::Product { .. } => sampled_quasi_positive(op, cone, cone.dims().0, params, rng),
    }
}

fn sampled_quasi_positive<R: Rng + ?Sized>(
    op: &LinOpNM,
    cone: &ConeSpec,
    _d: usize,
    params: &SampleParams,
    rng: &mut R,
) -> Result<PositivityVerdict> {
    let mut worst = f64::INFINITY;
    for _ in 0..params.samples {
        let (u, v) = random_orthogonal_cone_pair(cone, rng)?;
        let pairing = inner(&op.apply(&u)?, &v);
        if pairing < -params.tol {
            return Ok(PositivityVerdict::refuted(Witness {
                element: u.as_slice().to_vec(),
                direction: Some(v.as_slice().to_vec()),
                location: None,
                margin: pairing,
            }));
        }
        worst = worst.min(pairing);
    }
    // cross-check: exp(t op) should be a positive operator at a few scales
    let norm = fro(op.rep()).max(1e-12);
    let exp_samples = SampleParams { samples: (params.samples / 10).max(50), tol: params.tol };
    for t in [0.1 / norm, 1.0 / norm, 10.0 / norm] {
        let e = expm(&(op.rep() * t))?;
        let eop = LinOpNM::general(op.dims().0, op.dims().1, e)?;
        let verdict = is_positive_operator(&eop, cone, &exp_samples, rng)?;
        if verdict.is_refuted() {
            let mut w = verdict.witness.unwrap();
            w.location = Some(t);
            return Ok(PositivityVerdict::refuted(w));
        }
    }
    Ok(PositivityVerdict::sampled(params.samples, worst))
}

fn check_op_dims(op: &LinOpNM, cone: &ConeSpec) -> Result<()> {
    if op.dims() != cone.dims() {
        return Err(McarmaError::DimensionMismatch(format!(
            "operator on {:?} vs cone {} on {:?}",
            op.dims(),
            cone.describe(),
            cone.dims()
        )));
    }
    Ok(())
}
