//! Command, vehicle and sensor value types shared across the stack.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexPolygon, Pose2, Vec2};

/// Body-frame velocity command. Negative `v` drives in reverse.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2 {
    pub v: f64,
    pub omega: f64,
}

impl Twist2 {
    pub fn saturated(self, v_max: f64, omega_max: f64) -> Twist2 {
        Twist2 {
            v: self.v.clamp(-v_max, v_max),
            omega: self.omega.clamp(-omega_max, omega_max),
        }
    }
}

/// Front-wheel steering angle (rad) and rear-wheel angular rate (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AckermannCommand {
    pub steering: f64,
    pub wheel_velocity: f64,
}

impl AckermannCommand {
    pub const ZERO: AckermannCommand = AckermannCommand {
        steering: 0.0,
        wheel_velocity: 0.0,
    };

    pub fn saturated(self, params: &VehicleParams) -> AckermannCommand {
        AckermannCommand {
            steering: self.steering.clamp(-params.delta_max, params.delta_max),
            wheel_velocity: self
                .wheel_velocity
                .clamp(-params.wheel_omega_max, params.wheel_omega_max),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.steering.is_finite() && self.wheel_velocity.is_finite()
    }
}

/// Rectangular vehicle outline, centred on the rear axle offset by `rear_overhang`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
    /// Distance from the rear bumper to the reference point (rear axle centre).
    pub rear_overhang: f64,
}

impl Footprint {
    pub fn polygon(&self) -> ConvexPolygon {
        let back = -self.rear_overhang;
        let front = self.length - self.rear_overhang;
        let hw = 0.5 * self.width;
        ConvexPolygon {
            vertices: vec![
                Vec2::new(back, -hw),
                Vec2::new(front, -hw),
                Vec2::new(front, hw),
                Vec2::new(back, hw),
            ],
        }
    }

    pub fn at(&self, pose: &Pose2) -> ConvexPolygon {
        self.polygon().transformed(pose)
    }

    pub fn diagonal(&self) -> f64 {
        self.length.hypot(self.width)
    }

    /// Radius of the largest circle about the reference point inside the outline.
    pub fn inscribed_radius(&self) -> f64 {
        let front = self.length - self.rear_overhang;
        (0.5 * self.width).min(self.rear_overhang).min(front)
    }

    pub fn circumscribed_radius(&self) -> f64 {
        self.polygon().circumradius()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub track: f64,
    pub wheel_radius: f64,
    pub delta_max: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub steer_rate_max: f64,
    pub steer_tau: f64,
    pub drive_tau: f64,
    /// Wheel rate reached at full drive effort.
    pub wheel_omega_max: f64,
    pub footprint: Footprint,
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            wheelbase: 0.14,
            track: 0.12,
            wheel_radius: 0.045,
            delta_max: 0.52,
            v_max: 0.5,
            a_max: 1.0,
            steer_rate_max: 5.0,
            steer_tau: 0.08,
            drive_tau: 0.15,
            wheel_omega_max: 12.0,
            footprint: Footprint {
                length: 0.20,
                width: 0.13,
                rear_overhang: 0.03,
            },
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positives = [
            ("wheelbase", self.wheelbase),
            ("track", self.track),
            ("wheel_radius", self.wheel_radius),
            ("delta_max", self.delta_max),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("steer_rate_max", self.steer_rate_max),
            ("steer_tau", self.steer_tau),
            ("drive_tau", self.drive_tau),
            ("wheel_omega_max", self.wheel_omega_max),
            ("footprint.length", self.footprint.length),
            ("footprint.width", self.footprint.width),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.delta_max >= FRAC_PI_2 {
            return Err(Error::InvalidArgument("delta_max must be below π/2".into()));
        }
        Ok(())
    }

    /// Largest path curvature the steering geometry allows.
    pub fn max_curvature(&self) -> f64 {
        self.delta_max.tan() / self.wheelbase
    }

    pub fn min_turning_radius(&self) -> f64 {
        1.0 / self.max_curvature()
    }
}

/// One full 360° range sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaserScan {
    pub angle_min: f64,
    pub angle_increment: f64,
    pub ranges: Vec<f64>,
    pub range_min: f64,
    pub range_max: f64,
    pub stamp: f64,
}

impl LaserScan {
    pub fn n_beams(&self) -> usize {
        self.ranges.len()
    }

    pub fn beam_angle(&self, i: usize) -> f64 {
        self.angle_min + i as f64 * self.angle_increment
    }

    /// A beam is a hit when it returned something short of `range_max`.
    pub fn is_hit(&self, i: usize) -> bool {
        let r = self.ranges[i];
        r >= self.range_min && r < self.range_max
    }

    /// Sensor-frame endpoint of a beam.
    pub fn endpoint(&self, i: usize) -> Vec2 {
        let a = self.beam_angle(i);
        Vec2::new(self.ranges[i] * a.cos(), self.ranges[i] * a.sin())
    }

    /// Sensor-frame endpoints of all hit beams, with their beam index.
    pub fn hit_points(&self) -> Vec<(usize, Vec2)> {
        (0..self.n_beams())
            .filter(|&i| self.is_hit(i))
            .map(|i| (i, self.endpoint(i)))
            .collect()
    }

    /// Checks the full-sweep, angular-resolution and range-bound invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_beams();
        if n == 0 {
            return Err(Error::InvalidArgument("scan has no beams".into()));
        }
        let sweep = n as f64 * self.angle_increment;
        if (sweep - 2.0 * PI).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("scan sweep {sweep} rad is not 2π")));
        }
        if self.angle_increment > PI / 180.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "angular increment {} exceeds 1°",
                self.angle_increment
            )));
        }
        for (i, r) in self.ranges.iter().enumerate() {
            if !(r.is_finite() && *r >= self.range_min && *r <= self.range_max) {
                return Err(Error::InvalidArgument(format!("beam {i} range {r} out of bounds")));
            }
        }
        Ok(())
    }
}
