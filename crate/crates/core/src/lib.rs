//! Simulation and analysis suite for spectro-temporally multiplexed quantum
//! repeaters built on chirped-pulse photon-echo memories.
//!
//! * [`model`]: closed-form success probability and link-count optimization.
//! * [`mc`]: cycle-level Monte Carlo of the multiplexed repeater.
//! * [`cppe`]: pulse-level two-level ensemble engine for the memory protocol.
//! * [`analysis`]: histogram reduction and decay-curve fits.

pub mod analysis;
pub mod config;
pub mod cppe;
mod error;
pub mod mc;
pub mod model;
pub mod output;

pub use error::{Error, Result};
