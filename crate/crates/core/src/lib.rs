//! Non-myopic sensing-path planning for mobile sensor networks tracking
//! multiple ground targets.
//!
//! The planning problem is cast as a potential game whose players are the
//! sensors at each step of the horizon, with mutual information about the
//! terminal target states as the potential. A double-loop joint strategy
//! fictitious play learner solves it. The [`sim`] module runs closed-loop
//! tracking scenarios and Monte Carlo comparisons against a myopic baseline.

pub mod error;
pub mod game;
pub mod gaussian_info;
pub mod models;
pub mod planner;
pub mod sim;
pub mod tracker;
pub mod verify;

pub use error::{Error, Result};
