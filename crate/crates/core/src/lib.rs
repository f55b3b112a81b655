//! Multi-user VR resource allocation simulator with causal-aware DDPG.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod baselines;
pub mod causal;
pub mod channel;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod scene;
pub mod units;

pub use error::{Error, Result};

/// Random stream used throughout; serializable so checkpoints can resume it.
pub type SimRng = rand_chacha::ChaCha8Rng;
