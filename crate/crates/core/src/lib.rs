//! Simulation of photon-mediated correlated hopping in a synthetic ladder
//! spanned by the ground sublevels of multilevel atoms in an optical cavity.

// `!(x > y)` is used on purpose so NaN falls through to the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod angular;
pub mod config;
pub mod error;
pub mod fock;
pub mod heff;
pub mod ladder;
pub mod upa;
pub mod dynamics;
pub mod fullmodel;

pub use error::{Error, Result};
