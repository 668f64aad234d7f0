//! Monte Carlo simulation of entanglement protection by classical noise in a
//! two-atom leaky-cavity system.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod exec;
pub mod grid;
pub mod harness;
pub mod io;
pub mod noise;
pub mod observables;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use rng::RngStream;
