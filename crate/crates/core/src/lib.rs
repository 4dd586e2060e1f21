//! Large-time-step smoke simulation with a learned correction step and
//! flow-based temporal interpolation.
//!
//! The grid solver ([`solver`]) produces small-step ground truth and the
//! cheap large-step predictions; [`correction`] maps each large-step result
//! toward the small-step state, and [`interpolation`] fills in the frames in
//! between. [`rollout`] chains the three.

pub mod error;
pub mod fields;
pub mod interpolation;
pub mod losses;
pub mod metrics;
pub mod config;
pub mod correction;
pub mod datagen;
pub mod rollout;
pub mod solver;
pub mod training;
pub mod unet;

pub use error::{Error, Result};
