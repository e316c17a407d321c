//! Low-level control: steering servo pass-through and wheel-velocity PID.
//!
//! The firmware runs at a fixed loop rate. Each cycle consumes the latest
//! sensor frame and the high-level setpoint and emits a drive effort in
//! `[-1, 1]` plus a servo angle. Frames older than [`STALE_PERIODS`] loop
//! periods trip a fault: the servo holds and the drive is cut.

mod stages;

pub use stages::{
    golden_scenario, run_mil, run_sil, stage_equivalence, DeviationStats, EquivalenceReport,
    SetpointStep, StageTolerances, Trace, TraceRow,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SensorFrame;
use crate::types::{AckermannCommand, VehicleParams};

/// Loop periods a frame may age before the firmware faults.
pub const STALE_PERIODS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirmwareConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub i_clamp: f64,
    pub loop_rate: f64,
    pub steer_cmd_limit: f64,
    pub vel_cmd_limit: f64,
    /// When set, wheel rate is estimated from encoder tick differences instead
    /// of the actuation feedback channel.
    pub ticks_per_rad: Option<f64>,
}

impl Default for FirmwareConfig {
    fn default() -> Self {
        FirmwareConfig {
            kp: 0.8,
            ki: 1.2,
            kd: 0.0,
            i_clamp: 1.0,
            loop_rate: 50.0,
            steer_cmd_limit: 0.52,
            vel_cmd_limit: 12.0,
            ticks_per_rad: None,
        }
    }
}

impl FirmwareConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.loop_rate.is_finite() && self.loop_rate > 0.0) {
            return Err(Error::InvalidArgument("loop_rate must be positive".into()));
        }
        if ![self.kp, self.ki, self.kd].iter().all(|g| g.is_finite()) {
            return Err(Error::InvalidArgument("PID gains must be finite".into()));
        }
        if !(self.i_clamp >= 0.0) {
            return Err(Error::InvalidArgument("i_clamp must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.loop_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FirmwareState {
    pub integ: f64,
    pub prev_err: f64,
    pub last_cmd: AckermannCommand,
    pub tick: u64,
    pub last_effort: f64,
    pub last_frame_stamp: Option<f64>,
    pub last_ticks: Option<(f64, i64)>,
    pub measured_rate: f64,
    pub fault: bool,
}

/// What one firmware cycle drives onto the actuators and reports upstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirmwareOutput {
    pub effort: f64,
    pub servo: f64,
    /// Echo of measured {wheel rate, steering} for the high-level stack.
    pub feedback: AckermannCommand,
    pub fault: bool,
}

/// One positional PID step with clamped, conditionally frozen integrator.
pub fn velocity_controller_step(
    target: f64,
    measured: f64,
    cfg: &FirmwareConfig,
    state: &FirmwareState,
) -> (f64, FirmwareState) {
    let dt = cfg.period();
    let err = target - measured;
    let deriv = if state.tick == 0 { 0.0 } else { (err - state.prev_err) / dt };
    let integ = (state.integ + err * dt).clamp(-cfg.i_clamp, cfg.i_clamp);
    let mut u = cfg.kp * err + cfg.ki * integ + cfg.kd * deriv;
    let mut next_integ = integ;
    // anti-windup: hold the integrator while pushing further into saturation
    if u.abs() > 1.0 && u.signum() == err.signum() {
        next_integ = state.integ.clamp(-cfg.i_clamp, cfg.i_clamp);
        u = cfg.kp * err + cfg.ki * next_integ + cfg.kd * deriv;
    }
    let effort = u.clamp(-1.0, 1.0);
    let next = FirmwareState {
        integ: next_integ,
        prev_err: err,
        last_effort: effort,
        ..*state
    };
    (effort, next)
}

/// Servo command: the target clamped to the mechanical limit.
pub fn steering_controller_step(target: f64, cfg: &FirmwareConfig) -> f64 {
    target.clamp(-cfg.steer_cmd_limit, cfg.steer_cmd_limit)
}

/// Runs one firmware tick at time `now`.
pub fn run_firmware_cycle(
    frame: &SensorFrame,
    setpoint: &AckermannCommand,
    cfg: &FirmwareConfig,
    state: &FirmwareState,
    now: f64,
) -> (FirmwareOutput, FirmwareState) {
    let period = cfg.period();
    let age = now - frame.stamp;
    let feedback = frame.actuation_feedback;

    if age > STALE_PERIODS * period + 1e-9 {
        let next = FirmwareState {
            fault: true,
            integ: 0.0,
            prev_err: 0.0,
            last_effort: 0.0,
            tick: state.tick + 1,
            ..*state
        };
        let out = FirmwareOutput {
            effort: 0.0,
            servo: state.last_cmd.steering,
            feedback,
            fault: true,
        };
        return (out, next);
    }

    let fresh = state.last_frame_stamp.is_none_or(|s| frame.stamp > s);
    if !fresh && state.tick > 0 {
        // no new measurement yet: hold the previous outputs
        let out = FirmwareOutput {
            effort: state.last_effort,
            servo: state.last_cmd.steering,
            feedback,
            fault: state.fault,
        };
        return (out, FirmwareState { tick: state.tick + 1, ..*state });
    }

    let measured = match cfg.ticks_per_rad {
        Some(tpr) => match state.last_ticks {
            Some((stamp, ticks)) if frame.stamp > stamp => {
                (frame.encoder_ticks - ticks) as f64 / tpr / (frame.stamp - stamp)
            }
            Some(_) => state.measured_rate,
            None => 0.0,
        },
        None => feedback.wheel_velocity,
    };

    let setpoint = AckermannCommand {
        steering: setpoint.steering,
        wheel_velocity: setpoint.wheel_velocity.clamp(-cfg.vel_cmd_limit, cfg.vel_cmd_limit),
    };
    let (effort, mut next) = velocity_controller_step(setpoint.wheel_velocity, measured, cfg, state);
    let servo = steering_controller_step(setpoint.steering, cfg);
    next.last_cmd = AckermannCommand { steering: servo, wheel_velocity: setpoint.wheel_velocity };
    next.tick = state.tick + 1;
    next.last_frame_stamp = Some(frame.stamp);
    next.last_ticks = Some((frame.stamp, frame.encoder_ticks));
    next.measured_rate = measured;
    next.fault = false;
    let out = FirmwareOutput { effort, servo, feedback, fault: false };
    (out, next)
}

/// Open-loop motor and servo model: effort scales the no-load wheel rate.
pub fn actuate(out: &FirmwareOutput, params: &VehicleParams) -> AckermannCommand {
    AckermannCommand {
        steering: out.servo,
        wheel_velocity: out.effort * params.wheel_omega_max,
    }
}
