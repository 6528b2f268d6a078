//! Combining a design-weighted probability sample with a non-probability
//! sample via test-and-pool estimation: pretest the comparability of the two
//! sources, tune how much to borrow by minimizing an analytic MSE surface,
//! and report non-regular-safe confidence intervals. A Monte Carlo lab
//! replicates the reference simulation design at desk scale.

pub mod aci;
pub mod config;
pub mod data;
pub mod error;
pub mod estimand;
pub mod estimators;
pub mod numkernel;
pub mod nuisance;
pub mod report;
pub mod simlab;
pub mod tap;
pub mod varcomps;

pub use error::{Error, Result};
