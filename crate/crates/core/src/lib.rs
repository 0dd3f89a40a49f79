//! Randomization inference for regression discontinuity designs under
//! residual ignorability.
//!
//! Within a window around the cutoff, the running variable is allowed to
//! affect potential outcomes through a model fitted to the data; what
//! remains after removing that model is treated as if randomly assigned.
//! Effects are tested, estimated and bounded by permuting treatment against
//! those residuals.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod inference;
pub mod models;
pub mod permute;
pub mod simlab;
pub mod spectests;
pub mod windowing;
