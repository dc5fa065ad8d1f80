//! Simulation and verification toolkit for self-interacting diffusions
//!
//! ```text
//! dX_t = dB_t - g(t) ∇V(X_t - μ̄_t) dt,   μ̄_t = (r μ̄ + ∫_0^t X_s ds) / (r + t)
//! ```
//!
//! integrated through the Markov pair `Y = X - μ̄`, `μ̄`.

pub mod diagnostics;
pub mod experiment;
pub mod error;
pub mod gain;
pub mod oracle;
pub mod potentials;
pub mod quadrature;
pub mod simulator;

pub use error::{Error, Result};
