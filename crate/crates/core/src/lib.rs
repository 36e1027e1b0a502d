//! Flexible count-forecast models: additive quantile regression for the bulk of a
//! count distribution, spliced with a discrete generalized Pareto tail.

// `!(x > 0.0)` rejects NaN together with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banding;
pub mod distributions;
pub mod ensemble;
pub mod error;
pub mod optim;
pub mod pipeline;
pub mod quantile_model;
pub mod scoring;
pub mod simlab;
pub mod splice;
pub mod spline;
pub mod stats;
pub mod tail_model;
pub mod terms;

pub use error::{Error, Result};
