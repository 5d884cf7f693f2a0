//! Multi-fidelity Bayesian optimization for expensive simulations.
//!
//! Objective and cost are modeled by two Gaussian processes over the joint
//! design × fidelity space. Candidates are chosen with a cost-adjusted upper
//! confidence bound, and a budget-aware stopping rule guarantees the campaign
//! ends with an evaluation at the highest fidelity.

pub mod acquisition;
pub mod backends;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod optim;
pub mod plots;
pub mod rtd;
pub mod space;
pub mod surrogate;

pub use error::{Error, Result};
