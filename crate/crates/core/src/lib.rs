//! Simulation toolkit for autonomous full-body RGB-D surface scanning with a
//! mobile base carrying a 6-joint arm.

pub mod error;
pub mod body;
pub mod geometry;
pub mod robot;
pub mod cspace;
pub mod sensor;
pub mod planner;
pub mod metrics;
pub mod stitcher;
pub mod workflow;

pub use error::{Error, Result};
