//! Model-in-the-loop and software-in-the-loop execution of the firmware and
//! the cross-stage equivalence check.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{actuate, run_firmware_cycle, FirmwareConfig, FirmwareOutput, FirmwareState};
use crate::error::{Error, Result};
use crate::geometry::{Pose2, Vec2};
use crate::grid::OccupancyGrid;
use crate::sim::{sample_sensors, step_vehicle, SensorConfig, SensorFrame, VehicleState, World};
use crate::types::{AckermannCommand, VehicleParams};

/// Setpoint that takes effect at time `t` and holds until the next step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetpointStep {
    pub t: f64,
    pub steering: f64,
    pub wheel_velocity: f64,
}

/// Reference command profile exercising both loops in both directions.
pub fn golden_scenario() -> Vec<SetpointStep> {
    let s = |t, steering, wheel_velocity| SetpointStep { t, steering, wheel_velocity };
    vec![
        s(0.0, 0.0, 0.0),
        s(0.5, 0.3, 5.0),
        s(3.0, -0.2, 8.0),
        s(5.5, 0.0, -4.0),
        s(8.0, 0.45, 0.0),
        s(9.0, 0.0, 2.0),
    ]
}

fn setpoint_at(profile: &[SetpointStep], t: f64) -> AckermannCommand {
    let k = profile.partition_point(|s| s.t <= t + 1e-12);
    profile
        .get(k.wrapping_sub(1))
        .map_or(AckermannCommand::ZERO, |s| AckermannCommand {
            steering: s.steering,
            wheel_velocity: s.wheel_velocity,
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub tick: u64,
    pub stamp: f64,
    pub target_v: f64,
    pub measured_v: f64,
    pub effort: f64,
    pub target_delta: f64,
    pub delta_feedback: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

const TRACE_HEADER: &str = "tick,stamp,target_v,measured_v,effort,target_delta,delta_feedback";

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:.6},{:.9},{:.9},{:.9},{:.9},{:.9}\n",
                r.tick, r.stamp, r.target_v, r.measured_v, r.effort, r.target_delta, r.delta_feedback
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Trace> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TRACE_HEADER => {}
            other => {
                return Err(Error::InvalidArgument(format!("unexpected trace header: {other:?}")))
            }
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = |what: &str| Error::InvalidArgument(format!("trace line {}: {what}", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad("expected 7 fields"));
            }
            let num = |i: usize| f[i].trim().parse::<f64>().map_err(|_| bad("bad number"));
            rows.push(TraceRow {
                tick: f[0].trim().parse().map_err(|_| bad("bad tick"))?,
                stamp: num(1)?,
                target_v: num(2)?,
                measured_v: num(3)?,
                effort: num(4)?,
                target_delta: num(5)?,
                delta_feedback: num(6)?,
            });
        }
        Ok(Trace { rows })
    }

    fn span(&self) -> Option<(f64, f64)> {
        Some((self.rows.first()?.stamp, self.rows.last()?.stamp))
    }

    /// Linear interpolation of (measured_v, delta_feedback) at `t`.
    fn sample(&self, t: f64) -> (f64, f64) {
        let k = self.rows.partition_point(|r| r.stamp <= t);
        if k == 0 {
            let r = self.rows[0];
            return (r.measured_v, r.delta_feedback);
        }
        if k >= self.rows.len() {
            let r = self.rows[self.rows.len() - 1];
            return (r.measured_v, r.delta_feedback);
        }
        let (a, b) = (self.rows[k - 1], self.rows[k]);
        let s = if b.stamp > a.stamp { (t - a.stamp) / (b.stamp - a.stamp) } else { 0.0 };
        (
            a.measured_v + s * (b.measured_v - a.measured_v),
            a.delta_feedback + s * (b.delta_feedback - a.delta_feedback),
        )
    }
}

fn empty_world() -> World {
    let map = OccupancyGrid::new(1, 1, 1.0, Pose2::IDENTITY).expect("static grid geometry");
    World::new(map, vec![], (Vec2::new(-1e6, -1e6), Vec2::new(1e6, 1e6))).expect("empty world")
}

fn row(tick: u64, stamp: f64, sp: &AckermannCommand, measured_v: f64, out: &FirmwareOutput, delta: f64) -> TraceRow {
    TraceRow {
        tick,
        stamp,
        target_v: sp.wheel_velocity,
        measured_v,
        effort: out.effort,
        target_delta: sp.steering,
        delta_feedback: delta,
    }
}

/// Model-in-the-loop: exact float feedback, plant integrated at 1 ms.
pub fn run_mil(
    profile: &[SetpointStep],
    duration: f64,
    cfg: &FirmwareConfig,
    params: &VehicleParams,
) -> Trace {
    const PLANT_DT: f64 = 0.001;
    let cfg = FirmwareConfig { ticks_per_rad: None, ..*cfg };
    let sub = (cfg.period() / PLANT_DT).round() as usize;
    let ticks = (duration * cfg.loop_rate).round() as u64;
    let mut plant = VehicleState::at_rest(Pose2::IDENTITY);
    let mut fw = FirmwareState::default();
    let mut rows = Vec::with_capacity(ticks as usize);
    for tick in 0..ticks {
        let now = tick as f64 * cfg.period();
        let sp = setpoint_at(profile, now);
        let frame = SensorFrame {
            stamp: now,
            scan: None,
            ips: plant.pose.translation(),
            imu_yaw: plant.pose.yaw,
            yaw_rate: plant.yaw_rate(params),
            encoder_ticks: 0,
            actuation_feedback: AckermannCommand {
                steering: plant.delta,
                wheel_velocity: plant.wheel_omega,
            },
        };
        let (out, next) = run_firmware_cycle(&frame, &sp, &cfg, &fw, now);
        fw = next;
        rows.push(row(tick, now, &sp, plant.wheel_omega, &out, plant.delta));
        let cmd = actuate(&out, params);
        for _ in 0..sub {
            plant = step_vehicle(&plant, &cmd, params, PLANT_DT).expect("finite plant inputs");
        }
    }
    Trace { rows }
}

/// Software-in-the-loop: quantized sensor channels, encoder-derived wheel
/// rate, plant on the fixed 5 ms simulator tick.
pub fn run_sil<R: Rng + ?Sized>(
    profile: &[SetpointStep],
    duration: f64,
    cfg: &FirmwareConfig,
    params: &VehicleParams,
    sensors: &SensorConfig,
    rng: &mut R,
) -> Trace {
    let cfg = FirmwareConfig { ticks_per_rad: Some(sensors.ticks_per_rad), ..*cfg };
    let sub = (cfg.period() / crate::sim::SIM_DT).round() as usize;
    let ticks = (duration * cfg.loop_rate).round() as u64;
    let world = empty_world();
    let mut plant = VehicleState::at_rest(Pose2::IDENTITY);
    let mut fw = FirmwareState::default();
    let mut rows = Vec::with_capacity(ticks as usize);
    for tick in 0..ticks {
        let now = tick as f64 * cfg.period();
        plant.stamp = now;
        let sp = setpoint_at(profile, now);
        let frame = sample_sensors(&world, &plant, params, sensors, false, rng);
        let (out, next) = run_firmware_cycle(&frame, &sp, &cfg, &fw, now);
        fw = next;
        rows.push(row(
            tick,
            now,
            &sp,
            frame.actuation_feedback.wheel_velocity,
            &out,
            frame.actuation_feedback.steering,
        ));
        let cmd = actuate(&out, params);
        for _ in 0..sub {
            plant = step_vehicle(&plant, &cmd, params, crate::sim::SIM_DT).expect("finite plant inputs");
        }
    }
    Trace { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTolerances {
    pub steering: f64,
    pub wheel_rate: f64,
    /// Seconds after each setpoint change excluded from the settled statistics.
    pub settle_window: f64,
}

impl Default for StageTolerances {
    fn default() -> Self {
        StageTolerances {
            steering: 3e-2,
            wheel_rate: 3e-1,
            settle_window: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationStats {
    pub max: f64,
    pub mean: f64,
    pub max_settled: f64,
    pub mean_settled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub samples: usize,
    pub settled_samples: usize,
    pub tolerances: StageTolerances,
    pub steering: DeviationStats,
    pub wheel_rate: DeviationStats,
    pub steering_pass: bool,
    pub wheel_rate_pass: bool,
    pub pass: bool,
}

fn stats(dev: &[f64], settled: &[bool]) -> DeviationStats {
    let mean = |it: &mut dyn Iterator<Item = f64>| {
        let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        if n == 0 { 0.0 } else { s / n as f64 }
    };
    let settled_vals = || dev.iter().zip(settled).filter(|(_, &k)| k).map(|(d, _)| *d);
    DeviationStats {
        max: dev.iter().copied().fold(0.0, f64::max),
        mean: mean(&mut dev.iter().copied()),
        max_settled: settled_vals().fold(0.0, f64::max),
        mean_settled: mean(&mut settled_vals()),
    }
}

/// Compares the plant-side feedback of two traces on `a`'s timestamps.
///
/// `b` is linearly resampled onto the overlap of both time ranges. Pass/fail
/// uses the settled statistics; with a zero settle window those equal the
/// worst case over the whole overlap.
pub fn stage_equivalence(a: &Trace, b: &Trace, tol: &StageTolerances) -> Result<EquivalenceReport> {
    let (a0, a1) = a
        .span()
        .ok_or_else(|| Error::InvalidArgument("first trace is empty".into()))?;
    let (b0, b1) = b
        .span()
        .ok_or_else(|| Error::InvalidArgument("second trace is empty".into()))?;
    let (lo, hi) = (a0.max(b0), a1.min(b1));
    if lo > hi {
        return Err(Error::InvalidArgument(format!(
            "traces do not overlap: [{a0}, {a1}] vs [{b0}, {b1}]"
        )));
    }

    let mut change_times = Vec::new();
    for w in a.rows.windows(2) {
        if w[1].target_v != w[0].target_v || w[1].target_delta != w[0].target_delta {
            change_times.push(w[1].stamp);
        }
    }

    let mut d_steer = Vec::new();
    let mut d_rate = Vec::new();
    let mut settled = Vec::new();
    for r in a.rows.iter().filter(|r| r.stamp >= lo && r.stamp <= hi) {
        let (bv, bd) = b.sample(r.stamp);
        d_steer.push((r.delta_feedback - bd).abs());
        d_rate.push((r.measured_v - bv).abs());
        let recent = change_times
            .iter()
            .any(|&c| r.stamp >= c && r.stamp < c + tol.settle_window);
        settled.push(!recent);
    }
    let steering = stats(&d_steer, &settled);
    let wheel_rate = stats(&d_rate, &settled);
    let steering_pass = steering.max_settled <= tol.steering;
    let wheel_rate_pass = wheel_rate.max_settled <= tol.wheel_rate;
    Ok(EquivalenceReport {
        samples: d_steer.len(),
        settled_samples: settled.iter().filter(|&&s| s).count(),
        tolerances: *tol,
        steering,
        wheel_rate,
        steering_pass,
        wheel_rate_pass,
        pass: steering_pass && wheel_rate_pass,
    })
}
