//! General treatment effects with neural-network nuisance estimates.
//!
//! IPW and outcome-regression estimators for loss-defined effects (means, quantiles,
//! expectiles), population and treated-subgroup versions, with plug-in influence-function
//! variance estimates and a Monte Carlo harness.

pub mod ann;
pub mod error;
pub mod estimand;
pub mod estimators;
pub mod loss;
pub mod normal;
pub mod pipeline;
pub mod sample;
pub mod sim;
pub mod variance;

pub use error::{Error, Result};
pub use estimand::{EffectKind, EstimandSpec};
pub use estimators::{
    contrast_point, estimate_att, estimate_ipw, estimate_or_ate, weighted_expectile, weighted_quantile,
    PointEstimate, PropensitySet,
};
pub use loss::{loss_eval, loss_grad, LossFamily, LossSpec};
pub use sample::{validate_sample, Sample, Violation};
