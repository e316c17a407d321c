//! Planar perception, planning and control kernels for a scaled
//! Ackermann-steered parking vehicle.
//!
//! Every stage is a deterministic function of its inputs and an explicitly
//! seeded random generator, so whole navigation runs replay bit-identically.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod firmware;
pub mod geometry;
pub mod grid;
pub mod localization;
pub mod mapping;
pub mod odometry;
pub mod planning;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
pub use geometry::{normalize_angle, ConvexPolygon, Pose2, Vec2};
pub use grid::{Cell, OccupancyGrid, Trinary};
pub use types::{AckermannCommand, Footprint, LaserScan, Twist2, VehicleParams};
