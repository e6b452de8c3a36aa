//! Self-play learning in two-player zero-sum Markov games with finite
//! value-function classes.
//!
//! The crate is `no_std` (with `alloc`). It holds the exact game oracles,
//! the optimistic confidence-set learner with its exploiter, the
//! elimination-based learner, complexity-measure calculators and the
//! benchmark generators. File formats, the CLI and batch orchestration
//! live in the `mg-golf` companion crate.
//!
//! Conventions used throughout:
//! * steps are 0-based: `h ∈ 0..H`, and `V_H ≡ 0` is the terminal value;
//! * the max player picks `a ∈ 0..A`, the min player picks `b ∈ 0..B`;
//! * every tie is broken towards the lowest index.
#![cfg_attr(not(test), no_std)]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod complexity;
pub mod envs;
pub mod error;
pub mod function_class;
pub mod golf;
pub mod linalg;
pub mod matrix_game;
pub mod model;
pub mod olive;
pub mod rng;

pub use error::{Error, Result};
pub use function_class::{FunctionClass, ValueFunction};
pub use matrix_game::{MixedPair, Payoff, Side};
pub use model::{Dims, MarkovPolicy, StepDataset, TabularMG, Trajectory, Transition, ValueTables};
