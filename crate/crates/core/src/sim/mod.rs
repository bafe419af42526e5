//! Simulation design, baselines and the replication engine.

pub mod dgp;
pub mod glm;
pub mod oracle;
pub mod report;
pub mod runner;
pub mod seed;
pub mod truth;

pub use dgp::{generate_design, generate_dgp, Design, DgpDraw};
pub use runner::{run_replications, CellSummary, CvMode, EstimatorKind, FixedConfigs, SimConfig, SimReport};
pub use truth::{true_effect, true_effect_with, SimEstimand, TruthValue};
