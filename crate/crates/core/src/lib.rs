//! Context stages for object detection pipelines.
//!
//! - [`lcr`] enlarges small-object labels so they carry local context.
//! - [`scf`] builds a label co-occurrence graph, runs a two-layer graph
//!   convolution over word embeddings and projects region features into the
//!   resulting semantic space.
//! - [`scr`] promotes low-score detections that satisfy configured spatial
//!   relations with confident ones.
//! - [`eval`] measures the effect (AP/mAP at one IoU, log-average miss rate).
//! - [`pipeline`] wires the stages together from one JSON config.
//! - [`synth`] generates scenes with known relations and hosts brute-force
//!   reference implementations used by the test suites.
//!
//! See `examples/` for one runnable program per capability.

// `!(a < b)` is used on purpose so NaN falls on the rejecting side
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod json;
pub mod lcr;
pub mod pipeline;
pub mod scf;
pub mod scr;
pub mod synth;

pub use error::{Error, Result};
