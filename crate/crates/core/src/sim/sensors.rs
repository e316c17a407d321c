//! Lidar ray casting and proprioceptive sensor emulation.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{wrap, Pose2, Vec2};
use crate::grid::{Cell, OccupancyGrid};
use crate::sim::vehicle::VehicleState;
use crate::sim::world::World;
use crate::types::{AckermannCommand, LaserScan, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarConfig {
    pub n_beams: usize,
    pub range_min: f64,
    pub range_max: f64,
    pub sigma_range: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        LidarConfig {
            n_beams: 360,
            range_min: 0.15,
            range_max: 6.0,
            sigma_range: 5e-3,
        }
    }
}

impl LidarConfig {
    pub fn angle_increment(&self) -> f64 {
        2.0 * PI / self.n_beams as f64
    }

    pub fn angle_min(&self) -> f64 {
        -PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub lidar: LidarConfig,
    /// Standard deviation of the indoor positioning fix, per axis (m).
    pub ips_sigma: f64,
    /// Hard bound on the positioning error, per axis (m).
    pub ips_bound: f64,
    pub imu_yaw_sigma: f64,
    pub imu_rate_sigma: f64,
    pub ticks_per_rad: f64,
    /// Steering feedback quantum (rad); zero disables quantization.
    pub steer_quantum: f64,
    /// Wheel-rate feedback quantum (rad/s); zero disables quantization.
    pub wheel_rate_quantum: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            lidar: LidarConfig::default(),
            ips_sigma: 1.5e-2,
            ips_bound: 5e-2,
            imu_yaw_sigma: 5e-3,
            imu_rate_sigma: 1e-2,
            ticks_per_rad: 4096.0 / (2.0 * PI),
            steer_quantum: 1e-3,
            wheel_rate_quantum: 1e-2,
        }
    }
}

impl SensorConfig {
    /// Every noise source and quantizer switched off.
    pub fn noiseless() -> Self {
        SensorConfig {
            lidar: LidarConfig {
                sigma_range: 0.0,
                ..LidarConfig::default()
            },
            ips_sigma: 0.0,
            imu_yaw_sigma: 0.0,
            imu_rate_sigma: 0.0,
            steer_quantum: 0.0,
            wheel_rate_quantum: 0.0,
            ..SensorConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorFrame {
    pub stamp: f64,
    /// Present on ticks where the lidar completes a sweep.
    pub scan: Option<LaserScan>,
    pub ips: Vec2,
    pub imu_yaw: f64,
    pub yaw_rate: f64,
    pub encoder_ticks: i64,
    pub actuation_feedback: AckermannCommand,
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).map_or(0.0, |n| n.sample(rng))
}

/// Zero-mean Gaussian sample rejected outside `[-bound, bound]`.
pub fn truncated_gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64, bound: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    loop {
        let x = gaussian(rng, sigma);
        if x.abs() <= bound {
            return x;
        }
    }
}

/// `x + noise`, stepped back toward `x` where rounding the sum would put it
/// more than `bound` away.
fn bounded_offset(x: f64, noise: f64, bound: f64) -> f64 {
    let mut y = x + noise;
    while (y - x).abs() > bound {
        y = if y > x { y.next_down() } else { y.next_up() };
    }
    y
}

fn quantize(x: f64, q: f64) -> f64 {
    if q > 0.0 {
        (x / q).round() * q
    } else {
        x
    }
}

/// Distance along a ray to the first occupied cell, by exact grid traversal.
pub fn cast_grid(map: &OccupancyGrid, origin: Vec2, angle: f64, max_range: f64) -> Option<f64> {
    let res = map.resolution;
    let o = map.world_to_map_continuous(origin);
    let a = angle - map.origin.yaw;
    let d = Vec2::new(a.cos(), a.sin());
    let mut cell = Cell::new(o.x.floor() as i64, o.y.floor() as i64);
    let step_x: i64 = if d.x > 0.0 { 1 } else { -1 };
    let step_y: i64 = if d.y > 0.0 { 1 } else { -1 };
    let t_delta_x = if d.x != 0.0 { 1.0 / d.x.abs() } else { f64::INFINITY };
    let t_delta_y = if d.y != 0.0 { 1.0 / d.y.abs() } else { f64::INFINITY };
    let next_boundary = |p: f64, c: i64, s: i64| if s > 0 { c as f64 + 1.0 - p } else { p - c as f64 };
    let mut t_max_x = if d.x != 0.0 { next_boundary(o.x, cell.ix, step_x) * t_delta_x } else { f64::INFINITY };
    let mut t_max_y = if d.y != 0.0 { next_boundary(o.y, cell.iy, step_y) * t_delta_y } else { f64::INFINITY };
    let limit = max_range / res;
    let mut t = 0.0;
    loop {
        if map.is_occupied(cell) {
            return Some(t * res);
        }
        if t_max_x < t_max_y {
            t = t_max_x;
            t_max_x += t_delta_x;
            cell.ix += step_x;
        } else {
            t = t_max_y;
            t_max_y += t_delta_y;
            cell.iy += step_y;
        }
        if t > limit {
            return None;
        }
        // left the lattice heading away: nothing more to hit
        let outside_x = (cell.ix < 0 && step_x < 0) || (cell.ix >= map.width as i64 && step_x > 0);
        let outside_y = (cell.iy < 0 && step_y < 0) || (cell.iy >= map.height as i64 && step_y > 0);
        if outside_x || outside_y {
            return None;
        }
    }
}

/// Noise-free first-hit range for one beam, or `None` when nothing is in range.
pub fn true_range(world: &World, origin: Vec2, angle: f64, max_range: f64) -> Option<f64> {
    let dir = Vec2::new(angle.cos(), angle.sin());
    let mut best = cast_grid(&world.static_map, origin, angle, max_range);
    for poly in world.active_obstacles() {
        if let Some(t) = poly.ray_intersection(origin, dir) {
            if t <= max_range && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
    }
    best
}

/// Renders one 360° sweep from `pose` against the static map and active obstacles.
pub fn simulate_lidar<R: Rng + ?Sized>(
    world: &World,
    pose: &Pose2,
    cfg: &LidarConfig,
    stamp: f64,
    rng: &mut R,
) -> LaserScan {
    let inc = cfg.angle_increment();
    let origin = pose.translation();
    let ranges = (0..cfg.n_beams)
        .map(|i| {
            let angle = pose.yaw + cfg.angle_min() + i as f64 * inc;
            match true_range(world, origin, angle, cfg.range_max) {
                Some(r) if r >= cfg.range_min => {
                    let noisy = r + gaussian(rng, cfg.sigma_range);
                    noisy.clamp(cfg.range_min, cfg.range_max)
                }
                _ => cfg.range_max,
            }
        })
        .collect();
    LaserScan {
        angle_min: cfg.angle_min(),
        angle_increment: inc,
        ranges,
        range_min: cfg.range_min,
        range_max: cfg.range_max,
        stamp,
    }
}

/// Samples every on-board sensor at the state's timestamp. The lidar sweep is
/// rendered only when `with_scan` is set.
pub fn sample_sensors<R: Rng + ?Sized>(
    world: &World,
    state: &VehicleState,
    params: &VehicleParams,
    cfg: &SensorConfig,
    with_scan: bool,
    rng: &mut R,
) -> SensorFrame {
    let scan = with_scan.then(|| simulate_lidar(world, &state.pose, &cfg.lidar, state.stamp, rng));
    let ips = Vec2::new(
        bounded_offset(state.pose.x, truncated_gaussian(rng, cfg.ips_sigma, cfg.ips_bound), cfg.ips_bound),
        bounded_offset(state.pose.y, truncated_gaussian(rng, cfg.ips_sigma, cfg.ips_bound), cfg.ips_bound),
    );
    let imu_yaw = wrap(state.pose.yaw + gaussian(rng, cfg.imu_yaw_sigma));
    let yaw_rate = state.yaw_rate(params) + gaussian(rng, cfg.imu_rate_sigma);
    SensorFrame {
        stamp: state.stamp,
        scan,
        ips,
        imu_yaw,
        yaw_rate,
        encoder_ticks: (state.wheel_angle * cfg.ticks_per_rad).floor() as i64,
        actuation_feedback: AckermannCommand {
            steering: quantize(state.delta, cfg.steer_quantum),
            wheel_velocity: quantize(state.wheel_omega, cfg.wheel_rate_quantum),
        },
    }
}
