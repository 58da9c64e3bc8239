//! Model configuration files: a TOML document with sections [dims], [orders],
//! [[operators.A]], [[operators.C]], [cone], [levy], [simulation], [output]
//! and optional [stochvol] / [positivity] sections. The schema is versioned
//! (`spec_version = 1`) and unknown keys are rejected before any numeric
//! work.

use crate::cones::ConeSpec;
use crate::error::{McarmaError, Result};
use crate::levy::{CompoundPoisson, JumpLaw, LevySpec};
use crate::linop::{LinOpNM, OpTag};
use crate::matops::Mat;
use crate::model::MCARMAModel;
use crate::stochvol::{CovProcess, StochCovModel};
use serde::{Deserialize, Serialize};

fn default_tol() -> f64 {
    crate::cones::DEFAULT_CONE_TOL
}

fn default_warmup_tol() -> f64 {
    1e-10
}

fn default_copies() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub spec_version: u32,
    pub dims: DimsSection,
    pub orders: OrdersSection,
    pub operators: OperatorsSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cone: Option<ConeSection>,
    pub levy: LevySection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stochvol: Option<StochvolSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub positivity: Option<PositivitySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimsSection {
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrdersSection {
    pub p: usize,
    pub q: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorsSection {
    #[serde(rename = "A")]
    pub a: Vec<OperatorEntry>,
    #[serde(rename = "C")]
    pub c: Vec<OperatorEntry>,
}

/// Operator entry: a structural tag with generator matrix `a`, or a full
/// nm x nm representation under `rep`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "tag", rename_all = "snake_case")]
pub enum OperatorEntry {
    General { rep: Vec<Vec<f64>> },
    Conjugation { a: Vec<Vec<f64>> },
    Lyapunov { a: Vec<Vec<f64>> },
    Zero,
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConeSection {
    pub kind: ConeKind,
    pub d: usize,
    #[serde(default = "default_copies")]
    pub copies: usize,
    #[serde(default = "default_tol")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    Orthant,
    Psd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    pub drift: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gaussian_rep: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jumps: Option<JumpsSection>,
    #[serde(default)]
    pub cone_increasing: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpsSection {
    pub rate: f64,
    pub law: LawSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum LawSection {
    Atoms { atoms: Vec<AtomEntry> },
    ScaledAtom { base: Vec<Vec<f64>>, shape: f64, rate: f64 },
    RankOnePsd { d: usize, shape: f64, rate: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomEntry {
    pub value: Vec<Vec<f64>>,
    pub prob: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_warmup_tol")]
    pub warmup_tol: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochvolSection {
    pub kind: CovKind,
    /// Operator A for the ou / well_balanced kinds (tau(-A) < 0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<OperatorEntry>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub delta: f64,
    pub delta_sim_factor: usize,
    pub returns: usize,
    #[serde(default)]
    pub price_paths: usize,
    pub lags: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovKind {
    Ou,
    WellBalanced,
    Mcarma,
}

/// Optional commuting factor families for the orthant Hadamard check.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositivitySection {
    #[serde(default)]
    pub c_factors: Vec<MatrixEntry>,
    #[serde(default)]
    pub a_factors: Vec<MatrixEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixEntry {
    pub value: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
}

fn rows_to_mat(rows: &[Vec<f64>], what: &str) -> Result<Mat> {
    if rows.is_empty() {
        return Err(McarmaError::Config(format!("{what}: empty matrix")));
    }
    let nc = rows[0].len();
    if nc == 0 || rows.iter().any(|r| r.len() != nc) {
        return Err(McarmaError::Config(format!("{what}: ragged matrix rows")));
    }
    let mut m = Mat::zeros(rows.len(), nc);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(McarmaError::Config(format!("{what}: non-finite entry")));
            }
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl OperatorEntry {
    pub fn to_op(&self, n: usize, m: usize) -> Result<LinOpNM> {
        match self {
            OperatorEntry::General { rep } => {
                let r = rows_to_mat(rep, "operator rep")?;
                LinOpNM::general(n, m, r)
            }
            OperatorEntry::Conjugation { a } => {
                if n != m {
                    return Err(McarmaError::Config(
                        "conjugation operators need a square matrix space".into(),
                    ));
                }
                let g = rows_to_mat(a, "conjugation generator")?;
                if g.nrows() != n {
                    return Err(McarmaError::Config("conjugation generator must be d x d".into()));
                }
                LinOpNM::conjugation(&g)
            }
            OperatorEntry::Lyapunov { a } => {
                if n != m {
                    return Err(McarmaError::Config(
                        "lyapunov operators need a square matrix space".into(),
                    ));
                }
                let g = rows_to_mat(a, "lyapunov generator")?;
                if g.nrows() != n {
                    return Err(McarmaError::Config("lyapunov generator must be d x d".into()));
                }
                LinOpNM::lyapunov(&g)
            }
            OperatorEntry::Zero => Ok(LinOpNM::zero(n, m)),
            OperatorEntry::Identity => Ok(LinOpNM::identity(n, m)),
        }
    }

    pub fn from_op(op: &LinOpNM) -> Self {
        match op.tag() {
            OpTag::General => OperatorEntry::General { rep: mat_to_rows(op.rep()) },
            OpTag::Conjugation(a) => OperatorEntry::Conjugation { a: mat_to_rows(a) },
            OpTag::LyapunovForm(a) => OperatorEntry::Lyapunov { a: mat_to_rows(a) },
            OpTag::Zero => OperatorEntry::Zero,
            OpTag::Identity => OperatorEntry::Identity,
        }
    }
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ModelConfig =
            toml::from_str(text).map_err(|e| McarmaError::Config(e.to_string()))?;
        if cfg.spec_version != 1 {
            return Err(McarmaError::Config(format!(
                "unsupported spec_version {} (expected 1)",
                cfg.spec_version
            )));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| McarmaError::Config(e.to_string()))
    }

    pub fn cone_spec(&self) -> Result<Option<ConeSpec>> {
        let Some(c) = &self.cone else { return Ok(None) };
        let base = match c.kind {
            ConeKind::Orthant => ConeSpec::orthant(c.d),
            ConeKind::Psd => ConeSpec::psd(c.d),
        };
        let base = base.with_tol(c.tolerance);
        Ok(Some(if c.copies > 1 {
            ConeSpec::product(base, c.copies)
        } else {
            base
        }))
    }

    pub fn levy_spec(&self) -> Result<LevySpec> {
        let (n, m) = (self.dims.n, self.dims.m);
        let drift = rows_to_mat(&self.levy.drift, "levy drift")?;
        if drift.nrows() != n || drift.ncols() != m {
            return Err(McarmaError::Config(format!("levy drift must be {n}x{m}")));
        }
        let gaussian = match &self.levy.gaussian_rep {
            Some(rows) => {
                let rep = rows_to_mat(rows, "levy gaussian_rep")?;
                Some(LinOpNM::general(n, m, rep)?)
            }
            None => None,
        };
        let jumps = match &self.levy.jumps {
            Some(j) => {
                let law = match &j.law {
                    LawSection::Atoms { atoms } => {
                        let mut list = Vec::with_capacity(atoms.len());
                        for a in atoms {
                            list.push((rows_to_mat(&a.value, "atom")?, a.prob));
                        }
                        JumpLaw::Atoms(list)
                    }
                    LawSection::ScaledAtom { base, shape, rate } => JumpLaw::ScaledAtom {
                        base: rows_to_mat(base, "scaled atom base")?,
                        shape: *shape,
                        rate: *rate,
                    },
                    LawSection::RankOnePsd { d, shape, rate } => {
                        JumpLaw::RankOnePsd { d: *d, shape: *shape, rate: *rate }
                    }
                };
                Some(CompoundPoisson { rate: j.rate, law })
            }
            None => None,
        };
        let spec = LevySpec::new(drift, gaussian, jumps)?;
        if self.levy.cone_increasing {
            let cone = self.cone_spec()?.ok_or_else(|| {
                McarmaError::Config("cone_increasing requires a [cone] section".into())
            })?;
            spec.validate_cone_increasing(&cone)?;
        }
        Ok(spec)
    }

    pub fn to_model(&self) -> Result<MCARMAModel> {
        let (n, m) = (self.dims.n, self.dims.m);
        if self.operators.a.len() != self.orders.p {
            return Err(McarmaError::Config(format!(
                "expected p = {} autoregressive operators, got {}",
                self.orders.p,
                self.operators.a.len()
            )));
        }
        if self.operators.c.len() != self.orders.q + 1 {
            return Err(McarmaError::Config(format!(
                "expected q + 1 = {} moving-average operators, got {}",
                self.orders.q + 1,
                self.operators.c.len()
            )));
        }
        let a_ops: Result<Vec<_>> = self.operators.a.iter().map(|e| e.to_op(n, m)).collect();
        let c_ops: Result<Vec<_>> = self.operators.c.iter().map(|e| e.to_op(n, m)).collect();
        MCARMAModel::new(a_ops?, c_ops?, self.cone_spec()?, self.levy_spec()?)
    }

    pub fn to_stochvol(&self) -> Result<StochCovModel> {
        let sv = self
            .stochvol
            .as_ref()
            .ok_or_else(|| McarmaError::Config("missing [stochvol] section".into()))?;
        let d = self.dims.n;
        let levy = self.levy_spec()?;
        let cov = match sv.kind {
            CovKind::Ou => {
                let a = sv
                    .a
                    .as_ref()
                    .ok_or_else(|| McarmaError::Config("stochvol.kind = ou needs field a".into()))?
                    .to_op(d, d)?;
                CovProcess::Ou { a, levy }
            }
            CovKind::WellBalanced => {
                let a = sv
                    .a
                    .as_ref()
                    .ok_or_else(|| {
                        McarmaError::Config("stochvol.kind = well_balanced needs field a".into())
                    })?
                    .to_op(d, d)?;
                CovProcess::WellBalanced { a, levy }
            }
            CovKind::Mcarma => CovProcess::Mcarma(Box::new(self.to_model()?)),
        };
        let delta_sim = sv.delta / sv.delta_sim_factor.max(1) as f64;
        let model = StochCovModel {
            d,
            alpha: crate::matops::Vecf::from_vec(sv.alpha.clone()),
            beta: crate::matops::Vecf::from_vec(sv.beta.clone()),
            cov,
            delta: sv.delta,
            delta_sim,
        };
        model.validate()?;
        Ok(model)
    }

    /// Rebuild the config from an in-memory model (used for round-trip
    /// checks and `--emit-config` style tooling).
    pub fn from_model(model: &MCARMAModel, template: &ModelConfig) -> ModelConfig {
        let mut out = template.clone();
        out.operators.a = model.a_ops().iter().map(OperatorEntry::from_op).collect();
        out.operators.c = model.c_ops().iter().map(OperatorEntry::from_op).collect();
        out
    }
}
