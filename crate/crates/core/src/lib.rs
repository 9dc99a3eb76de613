//! Asymptotic M-estimation toolkit.
//!
//! Phi-transform contrast families, parametric and nonparametric-mixture
//! models, maximizers of the empirical contrast, numerical probes of the
//! separation and integrability hypotheses behind strong consistency, and a
//! seeded experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contrast;
pub mod error;
pub mod estimation;
pub mod extended;
pub mod harness;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod separation;

pub use contrast::{ConcavityReport, PhiContrast, PhiKind};
pub use error::{Error, Result};
pub use estimation::{EmpiricalContrast, FitResult, GapCertificate, StopReason};
pub use extended::ExtendedReal;
pub use harness::{ExperimentConfig, ExperimentReport, OptimizerKind};
pub use models::{MixingMeasure, MixtureKernel, ModelFamily, Parameter, ParametricFamily};
pub use quadrature::QuadratureRule;
pub use rng::Rng;
pub use separation::{A2Report, AStar, GapEstimate};
