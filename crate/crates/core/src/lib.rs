//! Simulator and analysis toolkit for adaptive Bayesian cold-atom CPT-Ramsey
//! magnetometry, with the conventional two-point frequency lock as baseline.

pub mod analysis;
pub mod error;
pub mod estimator;
pub mod frequentist;
pub mod physics;
pub mod policy;
pub mod scenario;

pub use error::{Error, Result};

#[cfg(test)]
mod proptests;
