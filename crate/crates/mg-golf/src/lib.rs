//! File formats, experiment configs, the multi-seed harness and the CLI
//! around `mg-golf-core`.

// `!(x >= 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub use mg_golf_core as core;

pub mod config;
pub mod formats;
pub mod harness;
