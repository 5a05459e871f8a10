//! Bayesian accelerated failure time models with quantile-varying acceleration
//! factors: flexible baselines, covariate time maps, interval censoring, left
//! truncation and a binary time-varying covariate, fitted by No-U-Turn HMC.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod covproc;
pub mod data;
pub mod error;
pub mod inference;
pub mod likelihood;
pub mod model;
pub mod modelcheck;
pub mod root;
pub mod sampler;
pub mod simulate;
pub mod special;
pub mod spline;

pub use baseline::{Baseline, BaselineParams, BaselineSpec, Centering, Family, TbpWeights};
pub use covproc::{EffectKind, EffectSpec};
pub use error::{Error, Result};
pub use inference::{Contrast, CurveRow, CurveTable, Intervention, Pattern, Summary};
pub use likelihood::{Posterior, SubjectRecord};
pub use model::{ModelSpec, ParameterVector, PriorSpec};
pub use modelcheck::{LooResult, PointwiseLogLik};
pub use sampler::{PosteriorDraws, SamplerConfig};
pub use simulate::SimConfig;
