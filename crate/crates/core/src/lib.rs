//! Tabular distributional RL laboratory.
//!
//! Trains tabular C51 on a deterministic gridworld, records how the spread of
//! each state's return distribution evolves, extracts the episode at which each
//! state's spread jumps most (t*), grows a distance field from a small set of
//! early-active seed states, and uses that field to bias exploration and
//! replay. The [`harness`] module runs the baseline and the two-phase protocol
//! and writes the data behind every plot; [`cli`] wraps it in a binary.

pub mod c51;
pub mod cli;
pub mod config;
pub mod distribution;
pub mod dynamics;
pub mod error;
pub mod gridworld;
pub mod harness;
pub mod seeds;
pub mod structrl;
pub mod structure;

pub use error::{Error, Result};
