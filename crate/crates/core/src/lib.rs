//! Power and sample-size planning for quasi-likelihood regression: effect
//! sizes for jointly tested predictors beyond adjustors, IRLS estimation,
//! Wald and score tests, a simulation harness and a pilot-study planner.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "server")]
pub mod api;
pub mod cli;
pub mod datagen;
pub mod distributions;
pub mod effectsize;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod model;
pub mod planner;
pub mod power;
pub mod simharness;

pub use error::{Error, Result};
