//! Amortized Monte Carlo integration.
//!
//! Estimators that split an expectation into separately-proposed positive
//! numerator, negative numerator and normalizing constant; conditional
//! proposals trained over datasets and target parameters; the Gaussian tail
//! integral and tumor-treatment models used to benchmark them against
//! self-normalized importance sampling.

pub mod prob;
pub mod quadrature;
pub mod checkpoint;
pub mod models;
pub mod nn;
pub mod proposals;
pub mod estimators;
pub mod training;
