//! Deterministic plant, sensor and world simulator.

mod sensors;
mod vehicle;
mod world;

pub use sensors::{
    cast_grid, sample_sensors, simulate_lidar, true_range, truncated_gaussian, LidarConfig,
    SensorConfig, SensorFrame,
};
pub use vehicle::{step_vehicle, VehicleState};
pub use world::{cell_polygon, DynamicObstacle, TimedPose, World};

/// Plant integration step (s).
pub const SIM_DT: f64 = 0.005;
