//! Multiscale blind source separation of single linear mixtures of
//! finite-alphabet step functions.
//!
//! Observations `y_j = g(x_j) + sigma * eps_j` are modelled with
//! `g = sum_i w_i f^i`, where every source `f^i` takes values in a known
//! finite alphabet and the weights lie on the ordered simplex. The crate
//! provides a confidence region for the weights ([`crw`]), a constrained
//! dynamic program that recovers the sources ([`source_dp`]), threshold
//! selection ([`tuning`]) and a replication harness ([`evalsim`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crw;
pub mod error;
pub mod evalsim;
pub mod model;
pub mod multiscale;
pub mod pipeline;
pub mod presets;
pub mod rng;
pub mod source_dp;
pub mod tuning;

pub use error::{Error, Result};
pub use model::{Alphabet, NoiseModel, Scenario, Segment, SourceSegment, SourceSet, StepSignal, Weights};
pub use multiscale::{IntervalSystem, SystemKind};
