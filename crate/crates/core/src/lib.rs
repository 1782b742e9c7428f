//! Asynchronous decentralized gradient methods with delay-free step-sizes.
//!
//! The crate covers the whole pipeline for the asynchronous Prox-DGD and
//! DGD-ATC iterations over an undirected network:
//!
//! * [`problem`]: per-node smooth and proximal oracles and stacked block vectors,
//! * [`mixing`]: graphs, Metropolis averaging matrices and their spectra,
//! * [`operators`]: the synchronous fixed-point maps, step-size bounds and
//!   contraction factors,
//! * [`asynchrony`]: execution schedules, generators for the usual asynchrony
//!   regimes and delay analytics,
//! * [`engine`]: a deterministic schedule-driven simulator and a threaded
//!   message-buffer runtime whose traces replay through the simulator,
//! * [`analysis`]: fixed points, a centralized reference solver, optimality-gap
//!   bounds and convergence envelopes.

pub mod analysis;
pub mod asynchrony;
pub mod engine;
mod error;
pub(crate) mod linalg;
pub mod mixing;
pub mod operators;
pub mod problem;

pub use error::{Error, Result};
