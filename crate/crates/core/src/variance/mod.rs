//! Influence-function variance: sieve `H_d`, regression `E_d`, plug-in `S_d`, sandwich `V`.

pub mod covariance;
pub mod influence;
pub mod quadrature;
pub mod sieve;

pub use covariance::{component_intervals, confidence_intervals, contrast_interval, covariance, CovarianceEstimate, Interval};
pub use influence::{
    analytic_h, derivative_targets, estimate_e, estimate_h, estimate_h_treated, estimate_s, estimate_s_treated,
    HEstimate, InfluenceComponents,
};
pub use quadrature::GaussLegendre;
pub use sieve::{fit_sieve_density, fit_sieve_density_terms, BasisTerm, SieveBasis, SieveDensityModel};
