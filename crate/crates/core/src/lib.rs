//! Core pipeline for a kinetic wave installation that rises where a visitor
//! lingers.
//!
//! Frames from a camera go through background subtraction ([`vision`]),
//! debounced region tracking ([`occupancy`]), dwell-driven wave dynamics
//! ([`wave`]) and servo kinematics ([`actuation`]), and leave as framed
//! serial commands ([`protocol`]). [`simulator`] drives the whole chain from
//! a scripted visitor for deterministic tests.

pub mod actuation;
pub mod config;
pub mod error;
pub mod occupancy;
pub mod pipeline;
pub mod protocol;
pub mod simulator;
pub mod vision;
pub mod wave;

pub use config::RuntimeConfig;
pub use error::{Error, Result};
pub use pipeline::{Pipeline, TickOutput};
