//! Gridless single-snapshot direction-of-arrival estimation.
//!
//! The continuous l1 estimators follow the regularization path of the
//! penalized least-squares problem over the continuum of electrical angles:
//! at every level `lambda` the correlation spectrum of the residual is
//! bounded by `lambda` and touches it exactly at the support atoms. Atoms are
//! born where a new spectral peak reaches the bound. Baselines (grid
//! homotopy, Newton-refined ML and RELAX) and a seeded Monte Carlo harness
//! share the same array model.

// `!(a >= b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array_model;
pub mod audit;
pub mod bench;
pub mod error;
pub mod estimators;
pub mod newton;
pub mod spectrum;

pub use array_model::{synthesize, Scenario, Snapshot, SteeringModel};
pub use error::{DoaError, Result};
pub use estimators::{estimate, EstimateReport, EstimatorOptions, Method, Status};
pub use newton::{NewtonOptions, SupportState};
