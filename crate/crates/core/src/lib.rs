//! Minibatch Metropolis-Hastings.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod energy;
pub mod error;
pub mod kernels;
pub mod models;
pub mod proposal;
pub mod rng;
pub mod sampling;
pub mod spectral;
pub mod trace;

pub use energy::{BoundConsts, Dimension, EnergyModel};
pub use error::{Error, Result};
pub use kernels::Kernel;
pub use proposal::Proposal;
pub use rng::RngStream;
pub use trace::{ChainTrace, StepRecord};
