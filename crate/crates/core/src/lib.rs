//! Metacognitive reinforcement learning workbench.
//!
//! Simulates the Mouselab-MDP planning paradigm, implements a grid of
//! strategy-learning models (LVOC, REINFORCE, mental habit, non-learning and
//! their extensions), fits them to click sequences by maximum likelihood and
//! compares them with random-effects Bayesian model selection.

pub mod env;
pub mod error;
pub mod features;
pub mod fitkit;
pub mod learners;
pub mod metacontrol;
pub mod modelselect;
pub mod rng;
pub mod simlab;

pub use error::{Error, Result};
