//! Simulation and numerical verification for K-class instantaneous matching
//! queues with reneging and finite buffers.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds parameters, pre-limit rates and queue states.
//! * [`kernel`] enumerates the transitions and states of the pre-limit chain
//!   and assembles its generator matrix for small instances.
//! * [`ctmc`] simulates the pre-limit chain exactly, event by event.
//! * [`generator`] evaluates the discrete generator `A_n`, the limiting
//!   generator `A` and the convergence sweep between them.
//! * [`diffusion`] simulates the regulated diffusion limits.
//! * [`analysis`] provides KS distances, moments and a uniformization oracle.

// Negated float comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod ctmc;
pub mod diffusion;
pub mod error;
pub mod generator;
pub mod kernel;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
pub use model::{Capacity, PreLimitRates, QueueState, SystemParams};
