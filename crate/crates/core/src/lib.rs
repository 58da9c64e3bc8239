//! Matrix-valued CARMA(p, q) state-space models driven by cone-valued Levy
//! noise: construction and classification, positivity certification on the
//! positive orthant and the PSD cone, jump-exact simulation (causal,
//! non-causal and well-balanced OU), closed-form second-order structure with
//! quadrature oracles, and stochastic covariance models for log prices.

pub mod cones;
pub mod config;
pub mod error;
pub mod levy;
pub mod linop;
pub mod matops;
pub mod model;
pub mod moments;
pub mod positivity;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod stochvol;

pub use cones::{ConeSpec, Membership, PositivityVerdict, SampleParams, VerdictStatus, Witness};
pub use error::{McarmaError, Result};
pub use levy::{CompoundPoisson, IncrementStream, JumpLaw, LevySpec};
pub use linop::{LinOpNM, OpTag};
pub use matops::{CMat, Mat, Vecf};
pub use model::{Classification, CompanionForm, MCARMAModel, ModelKind, SpectralSplit};
pub use moments::{MomentMethod, MomentReport};
pub use rng::StreamFactory;
pub use simulate::{IntegrationMethod, PathBundle, PathMeta};
pub use stochvol::{CovProcess, StochCovModel, StochvolReport};
