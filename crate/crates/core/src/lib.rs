//! Correspondence-free visual-inertial odometry from ruled surfaces.

pub mod error;
pub mod estimator;
pub mod geometry;
pub mod imu;
pub mod pipeline;
pub mod raster;
pub mod sim;

pub use error::{Error, Result};
