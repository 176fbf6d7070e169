// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dimensioning;
pub mod error;
pub mod exact_queue;
pub mod exec;
pub mod grid;
pub mod harq;
pub mod sim;
pub mod traffic;

pub use error::{Error, Result};
pub use exec::Execution;
