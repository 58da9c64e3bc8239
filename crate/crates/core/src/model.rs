//! MCARMA model construction: controller canonical form, vectorized
//! representation, transfer function and matrix-fraction evaluation,
//! causality classification and stable/unstable spectral splitting.

use crate::cones::ConeSpec;
use crate::error::{McarmaError, Result};
use crate::levy::LevySpec;
use crate::linop::LinOpNM;
use crate::matops::{
    commutation_matrix, expm, eigenvalues, spectral_projectors, CMat, Mat, SpectralSplit2,
};
use nalgebra::Complex;

pub const IMAG_AXIS_MARGIN: f64 = 1e-9;

/// Matrix-valued CARMA(p, q) model on n x m matrices.
#[derive(Debug, Clone)]
pub struct MCARMAModel {
    n: usize,
    m: usize,
    p: usize,
    q: usize,
    a_ops: Vec<LinOpNM>,
    c_ops: Vec<LinOpNM>,
    cone: Option<ConeSpec>,
    levy: LevySpec,
}

impl MCARMAModel {
    pub fn new(
        a_ops: Vec<LinOpNM>,
        c_ops: Vec<LinOpNM>,
        cone: Option<ConeSpec>,
        levy: LevySpec,
    ) -> Result<Self> {
        let p = a_ops.len();
        if p == 0 {
            return Err(McarmaError::InvalidModel("need p >= 1 autoregressive operators".into()));
        }
        let q = c_ops.len().checked_sub(1).ok_or_else(|| {
            McarmaError::InvalidModel("need q + 1 >= 1 moving-average operators".into())
        })?;
        if q >= p {
            return Err(McarmaError::InvalidModel(format!("q = {q} must be < p = {p}")));
        }
        let (n, m) = levy.dims();
        for (i, op) in a_ops.iter().enumerate() {
            if op.dims() != (n, m) {
                return Err(McarmaError::InvalidModel(format!("A_{} dims mismatch", i + 1)));
            }
        }
        for (j, op) in c_ops.iter().enumerate() {
            if op.dims() != (n, m) {
                return Err(McarmaError::InvalidModel(format!("C_{j} dims mismatch")));
            }
        }
        if let Some(c) = &cone {
            if c.dims() != (n, m) {
                return Err(McarmaError::InvalidModel(format!(
                    "cone {} does not live on {}x{}",
                    c.describe(),
                    n,
                    m
                )));
            }
        }
        Ok(MCARMAModel { n, m, p, q, a_ops, c_ops, cone, levy })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n, self.m)
    }

    pub fn orders(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn a_ops(&self) -> &[LinOpNM] {
        &self.a_ops
    }

    pub fn c_ops(&self) -> &[LinOpNM] {
        &self.c_ops
    }

    pub fn cone(&self) -> Option<&ConeSpec> {
        self.cone.as_ref()
    }

    pub fn levy(&self) -> &LevySpec {
        &self.levy
    }

    /// Ornstein-Uhlenbeck model dX = -A X dt + dL as MCAR(1): A_1 = -A, C_0 = I.
    pub fn ou(a: &LinOpNM, cone: Option<ConeSpec>, levy: LevySpec) -> Result<Self> {
        let (n, m) = a.dims();
        MCARMAModel::new(vec![a.neg()], vec![LinOpNM::identity(n, m)], cone, levy)
    }

    /// Well-balanced configuration (p, q) = (2, 0): A_1 = 0, A_2 = A^2
    /// (as an operator), C_0 = -2A.
    pub fn well_balanced(a: &LinOpNM, cone: Option<ConeSpec>, levy: LevySpec) -> Result<Self> {
        let (n, m) = a.dims();
        let a2 = a.compose(a)?;
        MCARMAModel::new(
            vec![LinOpNM::zero(n, m), a2],
            vec![a.scale(-2.0)],
            cone,
            levy,
        )
    }

    pub fn build_companion(&self) -> CompanionForm {
        CompanionForm::build(self)
    }

    /// Operator polynomial P(lambda) = lambda^p I - sum A_i lambda^{p-i}
    /// evaluated through the plain vec representations.
    pub fn p_poly(&self, lambda: Complex<f64>) -> CMat {
        let nm = self.n * self.m;
        let mut out = CMat::identity(nm, nm) * lambda.powu(self.p as u32);
        for (i, op) in self.a_ops.iter().enumerate() {
            let coeff = lambda.powu((self.p - i - 1) as u32);
            out -= to_complex(op.rep()) * coeff;
        }
        out
    }

    /// Operator polynomial Q(lambda) = sum C_j lambda^j.
    pub fn q_poly(&self, lambda: Complex<f64>) -> CMat {
        let nm = self.n * self.m;
        let mut out = CMat::zeros(nm, nm);
        for (j, op) in self.c_ops.iter().enumerate() {
            out += to_complex(op.rep()) * lambda.powu(j as u32);
        }
        out
    }

    /// Q(lambda) P(lambda)^{-1}; the Laplace transform of the causal kernel.
    pub fn qp_eval(&self, lambda: Complex<f64>) -> Result<CMat> {
        let p = self.p_poly(lambda);
        let q = self.q_poly(lambda);
        let lu = p.transpose().lu();
        let sol = lu
            .solve(&q.transpose())
            .ok_or_else(|| McarmaError::SingularResolvent(format!("{lambda}")))?;
        Ok(sol.transpose())
    }

    /// Real-argument version of [`Self::qp_eval`].
    pub fn qp_eval_real(&self, lambda: f64) -> Result<Mat> {
        let c = self.qp_eval(Complex::new(lambda, 0.0))?;
        Ok(Mat::from_fn(c.nrows(), c.ncols(), |i, j| c[(i, j)].re))
    }
}

fn to_complex(a: &Mat) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| Complex::new(a[(i, j)], 0.0))
}

/// Companion (controller canonical) forms of a model.
///
/// `avec`/`cvec`/`evec` are the matrix representations of the operators
/// A_p, C_q, E_p acting on stacked plain vec blocks; they generate the true
/// dynamics for every model. `avec_hat`/`cvec_hat`/`evec_hat` carry the
/// commutation-twisted layout (super-diagonal K^{-(n,m)} blocks, bottom row
/// A_i^vec K^{-(n,m)}, input e_p (x) K^{-(n,m)}) used by the transfer
/// function and the right matrix-fraction identities.
#[derive(Debug, Clone)]
pub struct CompanionForm {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub q: usize,
    pub avec: Mat,
    pub cvec: Mat,
    pub evec: Mat,
    pub avec_hat: Mat,
    pub cvec_hat: Mat,
    pub evec_hat: Mat,
    /// K^{(n,m)}
    pub k: Mat,
    a_reps: Vec<Mat>,
    c_reps: Vec<Mat>,
}

impl CompanionForm {
    fn build(model: &MCARMAModel) -> Self {
        let (n, m) = model.dims();
        let (p, q) = model.orders();
        let nm = n * m;
        let k = commutation_matrix(n, m);
        let kinv = k.transpose();

        let mut avec = Mat::zeros(p * nm, p * nm);
        let mut avec_hat = Mat::zeros(p * nm, p * nm);
        for i in 0..p.saturating_sub(1) {
            avec.view_mut((i * nm, (i + 1) * nm), (nm, nm))
                .copy_from(&Mat::identity(nm, nm));
            avec_hat
                .view_mut((i * nm, (i + 1) * nm), (nm, nm))
                .copy_from(&kinv);
        }
        // bottom block row: [A_p, A_{p-1}, ..., A_1]
        for (i, op) in model.a_ops().iter().enumerate() {
            let col = (p - 1 - i) * nm;
            avec.view_mut(((p - 1) * nm, col), (nm, nm)).copy_from(op.rep());
            avec_hat
                .view_mut(((p - 1) * nm, col), (nm, nm))
                .copy_from(&(op.rep() * &kinv));
        }

        let mut cvec = Mat::zeros(nm, p * nm);
        let mut cvec_hat = Mat::zeros(nm, p * nm);
        for (j, op) in model.c_ops().iter().enumerate() {
            cvec.view_mut((0, j * nm), (nm, nm)).copy_from(op.rep());
            cvec_hat
                .view_mut((0, j * nm), (nm, nm))
                .copy_from(&(op.rep() * &kinv));
        }

        let mut evec = Mat::zeros(p * nm, nm);
        evec.view_mut(((p - 1) * nm, 0), (nm, nm))
            .copy_from(&Mat::identity(nm, nm));
        let mut evec_hat = Mat::zeros(p * nm, nm);
        evec_hat.view_mut(((p - 1) * nm, 0), (nm, nm)).copy_from(&kinv);

        CompanionForm {
            n,
            m,
            p,
            q,
            avec,
            cvec,
            evec,
            avec_hat,
            cvec_hat,
            evec_hat,
            k,
            a_reps: model.a_ops().iter().map(|o| o.rep().clone()).collect(),
            c_reps: model.c_ops().iter().map(|o| o.rep().clone()).collect(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.p * self.n * self.m
    }

    /// P_hat(lambda) = (lambda K)^p - sum A_i^vec (lambda K)^{p-i}.
    pub fn p_hat(&self, lambda: Complex<f64>) -> CMat {
        let nm = self.n * self.m;
        let lk = to_complex(&self.k) * lambda;
        let mut pow = CMat::identity(nm, nm);
        let mut powers = vec![pow.clone()];
        for _ in 0..self.p {
            pow = &pow * &lk;
            powers.push(pow.clone());
        }
        let mut out = powers[self.p].clone();
        for (i, a) in self.a_reps.iter().enumerate() {
            out -= to_complex(a) * &powers[self.p - i - 1];
        }
        out
    }

    /// Q_hat(lambda) = sum C_j^vec K^{-1} (lambda K)^j.
    pub fn q_hat(&self, lambda: Complex<f64>) -> CMat {
        let nm = self.n * self.m;
        let lk = to_complex(&self.k) * lambda;
        let kinv = to_complex(&self.k.transpose());
        let mut pow = CMat::identity(nm, nm);
        let mut out = CMat::zeros(nm, nm);
        for c in self.c_reps.iter() {
            out += to_complex(c) * &kinv * &pow;
            pow = &pow * &lk;
        }
        out
    }
}

/// Transfer function of the vectorized (hat) state-space form:
/// H(lambda) = C_hat (lambda I - A_hat)^{-1} E_hat.
pub fn transfer_function(form: &CompanionForm, lambda: Complex<f64>) -> Result<CMat> {
    let dim = form.state_dim();
    let a = to_complex(&form.avec_hat);
    let resolvent_arg = CMat::identity(dim, dim) * lambda - a;
    let rhs = to_complex(&form.evec_hat);
    let sol = resolvent_arg
        .lu()
        .solve(&rhs)
        .ok_or_else(|| McarmaError::SingularResolvent(format!("{lambda}")))?;
    Ok(to_complex(&form.cvec_hat) * sol)
}

/// Right matrix-fraction evaluation of the same transfer function through the
/// commutation-twisted polynomials: H(lambda) = Q_hat(lambda) (K P_hat(lambda) K^{-1})^{-1}.
///
/// The K-conjugation of P_hat makes the identity exact for arbitrary
/// operators; it reduces to Q_hat P_hat^{-1} whenever the coefficients
/// commute with transposition (structural tags, m = 1, symmetric states).
pub fn rmfd_eval(form: &CompanionForm, lambda: Complex<f64>) -> Result<CMat> {
    let p = form.p_hat(lambda);
    let kc = to_complex(&form.k);
    let kinv = to_complex(&form.k.transpose());
    // solve P_hat Z = K^{-1}, then H = Q_hat K Z
    let z = p
        .lu()
        .solve(&kinv)
        .ok_or_else(|| McarmaError::SingularResolvent(format!("det P_hat({lambda}) = 0")))?;
    Ok(form.q_hat(lambda) * kc * z)
}

/// Stationarity / causality classification.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum ModelKind {
    Causal,
    NonCausalStationary,
    NonStationary,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Classification {
    pub kind: ModelKind,
    /// Spectral bound of the state transition operator.
    pub tau: f64,
    /// min |Re(lambda)| over the companion spectrum.
    pub imag_axis_margin: f64,
}

/// Classify from the spectrum of the state transition operator A_p
/// (plain companion representation).
pub fn classify(form: &CompanionForm) -> Result<Classification> {
    let eigs = eigenvalues(&form.avec)?;
    let tau = eigs.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let margin = eigs.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
    let kind = if margin < IMAG_AXIS_MARGIN {
        ModelKind::NonStationary
    } else if tau < 0.0 {
        ModelKind::Causal
    } else {
        ModelKind::NonCausalStationary
    };
    Ok(Classification { kind, tau, imag_axis_margin: margin })
}

/// Kernel g(s) = C_q e^{s A_p} E_p as an operator on M_{n,m}.
pub fn kernel(form: &CompanionForm, s: f64) -> Result<LinOpNM> {
    if s < 0.0 {
        return Err(McarmaError::Precondition("kernel needs s >= 0".into()));
    }
    let e = expm(&(&form.avec * s))?;
    let rep = &form.cvec * e * &form.evec;
    LinOpNM::general(form.n, form.m, rep)
}

/// Spectral splitting of the companion form into forward-decaying and
/// backward-decaying kernels (ordered-Schur invariant subspaces; the same
/// projections as half-plane contour integrals).
#[derive(Debug, Clone)]
pub struct SpectralSplit {
    pub n: usize,
    pub m: usize,
    pub avec: Mat,
    pub cvec: Mat,
    pub evec: Mat,
    pub split: SpectralSplit2,
}

impl SpectralSplit {
    /// g_1(t) = e^{t A} P_stable E (decays as t -> +infinity).
    pub fn g1_state(&self, t: f64) -> Result<Mat> {
        let gen_s = &self.split.p_stable * &self.avec * &self.split.p_stable;
        Ok(expm(&(gen_s * t))? * &self.split.p_stable * &self.evec)
    }

    /// g_2(t) = e^{t A} P_unstable E (decays as t -> -infinity).
    pub fn g2_state(&self, t: f64) -> Result<Mat> {
        let gen_u = &self.split.p_unstable * &self.avec * &self.split.p_unstable;
        Ok(expm(&(gen_u * t))? * &self.split.p_unstable * &self.evec)
    }

    /// Output-level stationary kernel h(t) = C g_1(t) 1_{t>=0} - C g_2(t) 1_{t<0}.
    pub fn h_out(&self, t: f64) -> Result<Mat> {
        let state = if t >= 0.0 { self.g1_state(t)? } else { -self.g2_state(t)? };
        Ok(&self.cvec * state)
    }
}

/// Split the companion spectrum across the imaginary axis. Errors when an
/// eigenvalue lies within `IMAG_AXIS_MARGIN` of the axis.
pub fn spectral_split(form: &CompanionForm) -> Result<SpectralSplit> {
    let split = spectral_projectors(&form.avec, IMAG_AXIS_MARGIN)?;
    Ok(SpectralSplit {
        n: form.n,
        m: form.m,
        avec: form.avec.clone(),
        cvec: form.cvec.clone(),
        evec: form.evec.clone(),
        split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevySpec;
    use crate::quad::{integrate_mat, QuadParams};
    use approx::assert_relative_eq;

    fn scalar_model(a_coeffs: &[f64], c_coeffs: &[f64]) -> MCARMAModel {
        let a_ops = a_coeffs
            .iter()
            .map(|&a| LinOpNM::general(1, 1, Mat::from_element(1, 1, a)).unwrap())
            .collect();
        let c_ops = c_coeffs
            .iter()
            .map(|&c| LinOpNM::general(1, 1, Mat::from_element(1, 1, c)).unwrap())
            .collect();
        MCARMAModel::new(a_ops, c_ops, None, LevySpec::drift_only(Mat::zeros(1, 1))).unwrap()
    }

    fn random_general_model(n: usize, m: usize, p: usize, q: usize, seed: usize) -> MCARMAModel {
        let nm = n * m;
        let mk = |k: usize| {
            Mat::from_fn(nm, nm, |i, j| ((i * 7 + j * 3 + k * 13 + seed * 29) as f64 * 0.53).sin())
        };
        let a_ops = (0..p).map(|i| LinOpNM::general(n, m, mk(i)).unwrap()).collect();
        let c_ops = (0..=q).map(|j| LinOpNM::general(n, m, mk(100 + j)).unwrap()).collect();
        MCARMAModel::new(a_ops, c_ops, None, LevySpec::drift_only(Mat::zeros(n, m))).unwrap()
    }

    #[test]
    fn scalar_companion_layout() {
        let model = scalar_model(&[1.0, 2.0], &[1.0]); // A1 = a1 = 1, A2 = a2 = 2
        let form = model.build_companion();
        // [[0, 1], [a2, a1]]
        assert_eq!(form.avec, Mat::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 1.0]));
        assert_eq!(form.avec, form.avec_hat); // K = I for scalars
    }

    #[test]
    fn p1_companion_is_single_block() {
        let model = scalar_model(&[-1.5], &[1.0]);
        let form = model.build_companion();
        assert_eq!(form.avec, Mat::from_element(1, 1, -1.5));
    }

    #[test]
    fn psd_companion_bottom_row() {
        // p = 2 on 2x2 symmetric states: A1 Lyapunov, A2 conjugation; the hat
        // bottom row is [a2 (x) a2, I (x) a1 + a1 (x) I] times K^{-1}.
        let a1 = Mat::from_row_slice(2, 2, &[-1.0, 0.3, 0.2, -2.0]);
        let a2 = Mat::from_row_slice(2, 2, &[0.5, 0.1, -0.2, 0.7]);
        let ops = vec![LinOpNM::lyapunov(&a1).unwrap(), LinOpNM::conjugation(&a2).unwrap()];
        let model = MCARMAModel::new(
            ops,
            vec![LinOpNM::identity(2, 2)],
            None,
            LevySpec::drift_only(Mat::zeros(2, 2)),
        )
        .unwrap();
        let form = model.build_companion();
        let nm = 4;
        let kinv = form.k.transpose();
        let lyap = {
            let i = Mat::identity(2, 2);
            i.kronecker(&a1) + a1.kronecker(&i)
        };
        let conj = a2.kronecker(&a2);
        assert_relative_eq!(
            form.avec_hat.view((nm, 0), (nm, nm)).into_owned(),
            &conj * &kinv,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            form.avec_hat.view((nm, nm), (nm, nm)).into_owned(),
            &lyap * &kinv,
            epsilon = 1e-14
        );
        // super-diagonal block is K^{-1}
        assert_relative_eq!(
            form.avec_hat.view((0, nm), (nm, nm)).into_owned(),
            kinv,
            epsilon = 0.0
        );
    }

    #[test]
    fn scalar_transfer_function() {
        let a = -0.7;
        let model = scalar_model(&[a], &[1.0]);
        let form = model.build_companion();
        let lam = Complex::new(0.9, 0.4);
        let h = transfer_function(&form, lam).unwrap();
        let expect = (lam - Complex::new(a, 0.0)).inv();
        assert_relative_eq!(h[(0, 0)].re, expect.re, epsilon = 1e-12);
        assert_relative_eq!(h[(0, 0)].im, expect.im, epsilon = 1e-12);
    }

    #[test]
    fn transfer_decays_with_degree_gap() {
        let model = random_general_model(2, 1, 3, 1, 5);
        let form = model.build_companion();
        // ||H(lambda)|| |lambda|^{p-q} stays bounded as lambda grows
        let mut prev = f64::INFINITY;
        for r in [10.0, 100.0, 1000.0] {
            let lam = Complex::new(r, r);
            let h = transfer_function(&form, lam).unwrap();
            let scaled = h.norm() * lam.norm().powi((form.p - form.q) as i32);
            assert!(scaled < 10.0 * prev.max(1.0));
            prev = scaled;
        }
    }

    #[test]
    fn rmfd_matches_transfer_function_general_ops() {
        for seed in 0..6 {
            let (n, m, p, q) = match seed % 4 {
                0 => (1, 1, 2, 1),
                1 => (2, 1, 3, 1),
                2 => (2, 2, 2, 0),
                _ => (2, 2, 3, 2),
            };
            let model = random_general_model(n, m, p, q, seed);
            let form = model.build_companion();
            for k in 0..5 {
                let lam = Complex::new(0.6 + 0.3 * k as f64, 0.8 - 0.2 * k as f64);
                let h = transfer_function(&form, lam).unwrap();
                let rm = rmfd_eval(&form, lam).unwrap();
                let err = (&h - &rm).norm();
                assert!(
                    err <= 1e-8 * (1.0 + h.norm()),
                    "seed {seed} lambda {lam}: err {err}"
                );
            }
        }
    }

    #[test]
    fn q0_identity_qhat() {
        let model = scalar_model(&[-1.0, -0.5], &[1.0]);
        let form = model.build_companion();
        let q = form.q_hat(Complex::new(2.0, 1.0));
        assert_relative_eq!(q[(0, 0)].re, 1.0, epsilon = 1e-14);
        assert_relative_eq!(q[(0, 0)].im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn scalar_p_hat_polynomial() {
        let model = scalar_model(&[1.0, 2.0], &[1.0]);
        let form = model.build_companion();
        let lam = Complex::new(1.3, -0.4);
        let expect = lam * lam - lam - Complex::new(2.0, 0.0);
        let got = form.p_hat(lam)[(0, 0)];
        assert_relative_eq!(got.re, expect.re, epsilon = 1e-12);
        assert_relative_eq!(got.im, expect.im, epsilon = 1e-12);
    }

    #[test]
    fn det_phat_vanishes_on_companion_spectrum() {
        let model = random_general_model(2, 2, 2, 1, 3);
        let form = model.build_companion();
        // det(lambda I - A_hat) = det P_hat(lambda) exactly
        for k in 0..5 {
            let lam = Complex::new(0.4 * k as f64 - 0.7, 0.3 + 0.2 * k as f64);
            let dim = form.state_dim();
            let lhs = (CMat::identity(dim, dim) * lam - to_complex(&form.avec_hat))
                .lu()
                .determinant();
            let rhs = form.p_hat(lam).lu().determinant();
            assert_relative_eq!(lhs.re, rhs.re, max_relative = 1e-8);
            assert_relative_eq!(lhs.im, rhs.im, max_relative = 1e-8);
        }
    }

    #[test]
    fn classify_scalar_ou() {
        let model = scalar_model(&[-1.0], &[1.0]);
        let c = classify(&model.build_companion()).unwrap();
        assert_eq!(c.kind, ModelKind::Causal);
        assert_relative_eq!(c.tau, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn classify_zero_eigenvalue_nonstationary() {
        let model = scalar_model(&[0.0], &[1.0]);
        let c = classify(&model.build_companion()).unwrap();
        assert_eq!(c.kind, ModelKind::NonStationary);
    }

    #[test]
    fn classify_well_balanced_non_causal() {
        // d = 1, A = 1: spectrum of [[0,1],[1,0]] is {1, -1}
        let a = LinOpNM::general(1, 1, Mat::from_element(1, 1, 1.0)).unwrap();
        let model =
            MCARMAModel::well_balanced(&a, None, LevySpec::drift_only(Mat::zeros(1, 1))).unwrap();
        let c = classify(&model.build_companion()).unwrap();
        assert_eq!(c.kind, ModelKind::NonCausalStationary);
        assert_relative_eq!(c.tau, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn kernel_scalar_exponential() {
        let model = scalar_model(&[-0.8], &[1.0]);
        let form = model.build_companion();
        for s in [0.0, 0.5, 2.0] {
            let g = kernel(&form, s).unwrap();
            assert_relative_eq!(g.rep()[(0, 0)], (-0.8f64 * s).exp(), epsilon = 1e-13);
        }
        assert!(kernel(&form, -1.0).is_err());
    }

    #[test]
    fn laplace_transform_identity_quadrature() {
        // integral of e^{-lambda s} g(s) ds = Q(lambda) P(lambda)^{-1}
        let a1 = Mat::from_row_slice(2, 2, &[-1.2, 0.4, 0.1, -0.9]);
        let a2 = Mat::from_row_slice(2, 2, &[-0.5, 0.2, 0.0, -0.6]);
        let model = MCARMAModel::new(
            vec![
                LinOpNM::lyapunov(&a1).unwrap(),
                LinOpNM::conjugation(&a2).unwrap().scale(-1.0),
            ],
            vec![LinOpNM::identity(2, 2)],
            None,
            LevySpec::drift_only(Mat::zeros(2, 2)),
        )
        .unwrap();
        let form = model.build_companion();
        let cls = classify(&form).unwrap();
        assert_eq!(cls.kind, ModelKind::Causal);
        let t_max = (1e-12f64.ln() / cls.tau).min(400.0);
        for lam in [0.5, 1.0, 2.0] {
            let quad = integrate_mat(
                |s| kernel(&form, s).unwrap().rep() * (-lam * s).exp(),
                0.0,
                t_max,
                &QuadParams::default(),
            )
            .unwrap();
            let closed = model.qp_eval_real(lam).unwrap();
            let err = (&quad - &closed).norm();
            assert!(err <= 1e-6 * (1.0 + closed.norm()), "lambda {lam}: err {err}");
        }
    }

    #[test]
    fn spectral_split_reconstruction() {
        let a = LinOpNM::general(1, 1, Mat::from_element(1, 1, 1.0)).unwrap();
        let model =
            MCARMAModel::well_balanced(&a, None, LevySpec::drift_only(Mat::zeros(1, 1))).unwrap();
        let form = model.build_companion();
        let split = spectral_split(&form).unwrap();
        // g1 + g2 reproduces e^{tA}E for t >= 0
        for t in [0.0, 0.3, 1.0] {
            let full = expm(&(&form.avec * t)).unwrap() * &form.evec;
            let sum = split.g1_state(t).unwrap() + split.g2_state(t).unwrap();
            assert_relative_eq!(sum, full, epsilon = 1e-9);
        }
        // d = 1, A = 1: h(t) = C g = -2 sinh-split gives e^{-|t|}
        for t in [-2.0, -0.5, 0.5, 2.0] {
            let h = split.h_out(t).unwrap();
            assert_relative_eq!(h[(0, 0)], (-t.abs()).exp(), epsilon = 1e-10);
        }
    }

    #[test]
    fn spectral_split_stable_model_trivial() {
        let model = scalar_model(&[-1.0], &[1.0]);
        let split = spectral_split(&model.build_companion()).unwrap();
        assert_eq!(split.split.k_stable, 1);
        assert_relative_eq!(split.g2_state(1.0).unwrap().norm(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(split.g1_state(1.0).unwrap()[(0, 0)], (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn scalar_unstable_split() {
        let model = scalar_model(&[1.0], &[1.0]); // a = +1
        let split = spectral_split(&model.build_companion()).unwrap();
        assert_eq!(split.split.k_stable, 0);
        assert_relative_eq!(split.g1_state(1.0).unwrap().norm(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(split.g2_state(0.5).unwrap()[(0, 0)], 0.5f64.exp(), epsilon = 1e-12);
    }

    #[test]
    fn imaginary_axis_split_rejected() {
        let model = scalar_model(&[0.0], &[1.0]);
        assert!(spectral_split(&model.build_companion()).is_err());
    }

    #[test]
    fn q_must_be_less_than_p() {
        let a = LinOpNM::identity(1, 1);
        let c = vec![LinOpNM::identity(1, 1), LinOpNM::identity(1, 1)];
        assert!(MCARMAModel::new(vec![a], c, None, LevySpec::drift_only(Mat::zeros(1, 1))).is_err());
    }
}
