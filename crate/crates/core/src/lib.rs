//! Simulation and analysis of QAOA circuits under layered local noise.
//!
//! The crate is organised around three engines that check each other:
//!
//! * [`engine`] evolves pure states and density matrices exactly, and offers a
//!   Monte Carlo trajectory estimator;
//! * [`decomposition`] expands the noisy output as a weighted sum of pure
//!   trajectory states indexed by noise patterns and computes the m-level
//!   averages `f_m` (overlap with the ideal state) and `c_m` (cost);
//! * [`closedform`] fits those averages to two- and three-parameter models and
//!   evaluates the resulting closed-form fidelity and cost laws.
//!
//! [`optimize`] finds QAOA angles by multi-restart quasi-Newton descent and
//! [`tradeoff`] sweeps depth against noise strength.

pub mod closedform;
pub mod decomposition;
pub mod engine;
pub mod error;
pub mod ising;
pub mod optimize;
pub mod seed;
pub mod tradeoff;

pub use error::{Error, Result};
pub use ising::{Bitstring, Ensemble, IsingInstance};
