//! Sieve neural networks: architecture, exact gradients, training and model selection.

pub mod backprop;
pub mod cv;
pub mod network;
pub mod project;
pub mod train;

pub use backprop::{backprop_gradient, objective_value, Batch, Gradients, Objective};
pub use cv::{cv_select, cv_select_with_targets, CvGrid, CvOutcome, CvRow};
pub use network::{Activation, FittedNetwork, Layer, Link, NetworkConfig, WeightBound};
pub use project::project_l1;
pub use train::{fit_network, train_propensity, train_regression};
