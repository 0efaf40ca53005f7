//! Output-feedback barrier pairs for uncertain SISO plants.
//!
//! Pipeline: [`synthesis::synthesize`] a barrier function with its safety
//! controller, [`estimator::design_bz`] the identifier-based estimator that
//! bounds the barrier from measurements, then [`sim::run`] the supervised
//! loop that switches to the safety controller when the bound gets close to 1.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifact;
pub mod config;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod lmi;
pub mod model;
pub mod sim;
pub mod supervisor;
pub mod synthesis;

pub use error::{Error, Result};
