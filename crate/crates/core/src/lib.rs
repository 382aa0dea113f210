//! Binomial-mechanism-aided quantized distributed SGD.
//!
//! A gradient codec that clips, stochastically quantizes, and perturbs
//! gradients with binomial noise so that one discrete message satisfies both
//! a communication budget and a differential-privacy target; an exact
//! accountant for the guarantee it provides; a closed-form planner for the
//! (s, m) codec parameters; a bit-exact wire format; and a deterministic
//! multi-client SGD simulator that measures the resulting
//! privacy/communication/convergence trade-offs.

pub mod binomial;
pub mod cli;
pub mod codec;
pub mod config;
pub mod error;
pub mod planner;
pub mod privacy;
pub mod rng;
pub mod sim;
pub mod wire;

pub use error::{BqError, Result};
