//! Coupled lifetime and disparity estimation for stereo event cameras.
//!
//! Each incoming event is either matched across the rectified sensor pair and
//! inherits a lifetime from the match, or gets one by fitting a local plane to
//! its surface of active events. Active events then form sharp gradient
//! frames and sparse disparity maps at any instant.

pub mod cli;
pub mod config;
pub mod descriptor;
pub mod event;
pub mod io;
pub mod lifetime;
pub mod stereo;
pub mod synth;

pub use event::{AugmentedEvent, Event, Lifetime, LifetimeSource, Micros, Polarity, SensorGeometry, Side};
