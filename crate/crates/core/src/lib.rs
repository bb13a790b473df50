//! Option pricing from underlying price histories alone.
//!
//! A policy network is trained to maximize discrete log utility over price
//! windows; the reciprocal of the resulting wealth is the pricing kernel.
//! Option values then come from least-squares regression of kernel-weighted
//! payoffs (the martingale loss). The [`benchmark`] module holds the
//! model-based oracles used to check every learned object.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod error;
pub mod kernel_learner;
pub mod market_data;
pub mod neural;
pub mod price_learner;
pub mod report;
mod training;

pub use error::{Error, Result};
pub use market_data::{OptionKind, OptionSpec, PriceTrajectory, SdeModel, WindowSet};
pub use neural::{MlpModel, MlpSpec};
