//! Kinematic bicycle plant with first-order steering and drive lags.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Pose2;
use crate::types::{AckermannCommand, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    /// Rear-axle centre pose in the world frame.
    pub pose: Pose2,
    /// Longitudinal body velocity (m/s).
    pub v: f64,
    /// Actual front-wheel steering angle (rad).
    pub delta: f64,
    /// Rear wheel rate (rad/s), rigidly tied to `v`.
    pub wheel_omega: f64,
    /// Integrated rear wheel rotation (rad), drives the encoder.
    pub wheel_angle: f64,
    pub stamp: f64,
}

impl VehicleState {
    pub fn at_rest(pose: Pose2) -> Self {
        VehicleState {
            pose,
            v: 0.0,
            delta: 0.0,
            wheel_omega: 0.0,
            wheel_angle: 0.0,
            stamp: 0.0,
        }
    }

    /// Yaw rate implied by the bicycle geometry.
    pub fn yaw_rate(&self, params: &VehicleParams) -> f64 {
        self.v * self.delta.tan() / params.wheelbase
    }
}

/// First-order lag response toward `target` over `dt`, limited to `max_step`.
fn lag(current: f64, target: f64, tau: f64, dt: f64, max_step: f64) -> f64 {
    let step = (1.0 - (-dt / tau).exp()) * (target - current);
    current + step.clamp(-max_step, max_step)
}

/// Bicycle kinematics ẋ = v cos θ, ẏ = v sin θ, θ̇ = v tan δ / L.
#[inline]
fn deriv(theta: f64, v: f64, delta: f64, wheelbase: f64) -> [f64; 3] {
    [v * theta.cos(), v * theta.sin(), v * delta.tan() / wheelbase]
}

/// Advances the plant by `dt` under a zero-order-held command.
///
/// Actuators respond first; the pose is then integrated with classic RK4,
/// with speed and steering interpolated linearly across the step.
pub fn step_vehicle(
    state: &VehicleState,
    cmd: &AckermannCommand,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !cmd.is_finite() || !state.pose.is_finite() || !state.v.is_finite() || !state.delta.is_finite() {
        return Err(Error::InvalidArgument("non-finite plant input".into()));
    }

    let delta1 = lag(
        state.delta,
        cmd.steering,
        params.steer_tau,
        dt,
        params.steer_rate_max * dt,
    )
    .clamp(-params.delta_max, params.delta_max);
    let v_target = cmd.wheel_velocity * params.wheel_radius;
    let v1 = lag(state.v, v_target, params.drive_tau, dt, params.a_max * dt);

    let (v0, delta0) = (state.v, state.delta);
    let at = |s: f64| (v0 + s * (v1 - v0), delta0 + s * (delta1 - delta0));
    let l = params.wheelbase;
    let p = state.pose;
    let (va, da) = at(0.0);
    let (vm, dm) = at(0.5);
    let (vb, db) = at(1.0);
    let k1 = deriv(p.yaw, va, da, l);
    let k2 = deriv(p.yaw + 0.5 * dt * k1[2], vm, dm, l);
    let k3 = deriv(p.yaw + 0.5 * dt * k2[2], vm, dm, l);
    let k4 = deriv(p.yaw + dt * k3[2], vb, db, l);
    let inc = |i: usize| dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

    let wheel_omega = v1 / params.wheel_radius;
    Ok(VehicleState {
        pose: Pose2::new(p.x + inc(0), p.y + inc(1), p.yaw + inc(2)),
        v: v1,
        delta: delta1,
        wheel_omega,
        wheel_angle: state.wheel_angle + 0.5 * (state.wheel_omega + wheel_omega) * dt,
        stamp: state.stamp + dt,
    })
}
