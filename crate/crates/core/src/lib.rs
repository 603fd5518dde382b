//! Semantic point-cloud reconstruction of an airway from SLAM keyframes,
//! registration to CT ground truth, and evaluation.
//!
//! Units are millimeters throughout. Poses map camera coordinates to world
//! coordinates.

pub mod fusion;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod registration;
pub mod synth;
