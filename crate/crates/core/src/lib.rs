// `!(a < b)` is used on purpose so that NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod corrections;
pub mod error;
pub mod identify;
pub mod metrics;
pub mod simulate;
pub mod spectral;
pub mod windows;

pub use error::{Error, Result};
