// Negated comparisons reject NaN along with out-of-range values; swarm
// updates index several parallel per-dimension arrays.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod checks;
pub mod config;
pub mod error;
pub mod greens;
pub mod io;
pub mod lattice;
pub mod moments;
pub mod objective;
pub mod swarm;

pub use error::{Error, Result};
