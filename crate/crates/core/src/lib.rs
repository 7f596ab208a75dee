// NaN-rejecting `!(a < b)` checks and parallel-array index loops are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod env;
pub mod error;
pub mod harness;
pub mod hdice;
pub mod heads;
pub mod hindsight;
pub mod nn;
pub mod oracle;
pub mod ppo;
pub mod rollout;

pub use error::{Error, Result};
