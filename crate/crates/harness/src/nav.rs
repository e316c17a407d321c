//! Lockstep navigation loop: simulator, sensing, odometry, localization or
//! SLAM, planning and firmware, advanced on the 5 ms simulator tick.

use std::fmt::Write as _;

use nalgebra::Matrix3;
use nigelpark_core::firmware::{actuate, run_firmware_cycle, FirmwareConfig, FirmwareState};
use nigelpark_core::geometry::{angle_diff, Pose2, Vec2};
use nigelpark_core::grid::OccupancyGrid;
use nigelpark_core::localization::{Amcl, AmclConfig, InitMode, PoseEstimate, PoseRecord};
use nigelpark_core::mapping::{SlamConfig, SlamState};
use nigelpark_core::odometry::{align_scans_with_prior, dead_reckon, OdometryConfig, OdometryRecord};
use nigelpark_core::sim::{sample_sensors, step_vehicle, SensorConfig, SensorFrame, VehicleState, World, SIM_DT};
use nigelpark_core::types::{AckermannCommand, LaserScan, VehicleParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::planner::{LocalPlanner, PlanStatus, PlannerConfig};
use crate::scenario::{Rates, Scenario, Stage, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    Timeout,
    Collision,
    LocalizationDivergence,
    Unreachable,
    /// Stopped on the estimate but outside tolerance on ground truth.
    OutOfTolerance,
}

impl FailureCause {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCause::Timeout => "timeout",
            FailureCause::Collision => "collision",
            FailureCause::LocalizationDivergence => "localization_divergence",
            FailureCause::Unreachable => "unreachable",
            FailureCause::OutOfTolerance => "out_of_tolerance",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub truth: Pose2,
    pub estimate: Pose2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub scenario: String,
    pub seed: u64,
    pub stage: Stage,
    pub trajectory: Vec<TrajectorySample>,
    /// (|Δx|, |Δy|, |Δyaw|) of the final ground-truth pose.
    pub final_pose_error: [f64; 3],
    pub collision_count: usize,
    pub goal_reached: bool,
    pub time_to_goal: f64,
    pub cause: Option<FailureCause>,
    pub replans: usize,
    pub final_speed: f64,
}

impl TrialResult {
    /// Ground-truth path length.
    pub fn path_length(&self) -> f64 {
        self.trajectory.windows(2).map(|w| (w[1].truth.translation() - w[0].truth.translation()).norm()).sum()
    }
}

pub fn pose_error(pose: &Pose2, goal: &Pose2) -> [f64; 3] {
    [(pose.x - goal.x).abs(), (pose.y - goal.y).abs(), angle_diff(pose.yaw, goal.yaw).abs()]
}

/// Everything tunable about the stack for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StackConfig {
    pub vehicle: VehicleParams,
    pub sensors: SensorConfig,
    pub firmware: FirmwareConfig,
    pub amcl: AmclConfig,
    pub particles: usize,
    /// Standard deviations (x, y, yaw) of the initial pose belief.
    pub init_sigma: [f64; 3],
    pub odometry: OdometryConfig,
    pub slam: SlamConfig,
    pub slam_resolution: f64,
    pub planner: PlannerConfig,
    /// Estimate within these bounds ends the approach.
    pub arrive_xy: f64,
    pub arrive_yaw: f64,
    /// Looser bounds accepted once the band is used up.
    pub settle_xy: f64,
    pub settle_yaw: f64,
    /// Band length below which it counts as used up (m).
    pub band_done: f64,
    /// Measured speed under which the vehicle counts as stopped (m/s).
    pub stop_speed: f64,
    /// Inside the settle window, slower than this ends the approach (m/s).
    pub crawl_speed: f64,
    /// Seconds between planner map refreshes during mapping runs.
    pub map_refresh: f64,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            vehicle: VehicleParams::default(),
            sensors: SensorConfig::default(),
            firmware: FirmwareConfig::default(),
            amcl: AmclConfig { beams: 120, n_min: 500, sigma_hit: 0.03, ..AmclConfig::default() },
            particles: 500,
            init_sigma: [0.02, 0.02, 0.02],
            odometry: OdometryConfig::default(),
            slam: SlamConfig::default(),
            slam_resolution: 0.05,
            planner: PlannerConfig::default(),
            arrive_xy: 0.02,
            arrive_yaw: 0.035,
            settle_xy: 0.035,
            settle_yaw: 0.06,
            band_done: 0.03,
            crawl_speed: 0.02,
            stop_speed: 0.002,
            map_refresh: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub stamp: f64,
    pub state: VehicleState,
    pub command: AckermannCommand,
}

pub const STATE_CSV_HEADER: &str = "stamp,x,y,yaw,v,delta,wheel_omega,cmd_steering,cmd_wheel_velocity";
pub const TRAJECTORY_CSV_HEADER: &str = "stamp,x,y,yaw,est_x,est_y,est_yaw";

/// Logs of one trial, rendered to CSV on demand.
#[derive(Debug, Clone, Default)]
pub struct TrialLog {
    pub poses: Vec<PoseRecord>,
    pub odometry: Vec<OdometryRecord>,
    pub states: Vec<StateRecord>,
    pub planner: Option<LocalPlanner>,
}

impl TrialLog {
    pub fn state_csv(&self) -> String {
        let mut out = String::from(STATE_CSV_HEADER);
        out.push('\n');
        for r in &self.states {
            let s = &r.state;
            let _ = writeln!(
                out,
                "{:.6},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
                r.stamp, s.pose.x, s.pose.y, s.pose.yaw, s.v, s.delta, s.wheel_omega, r.command.steering, r.command.wheel_velocity
            );
        }
        out
    }

    pub fn plan_csv(&self) -> String {
        let mut out = String::from("cycle,stamp,replan,adopted,index,x,y,yaw,dt\n");
        if let Some(p) = &self.planner {
            for c in &p.cycles {
                let reason = c.replan.map_or(String::new(), |r| serde_json::to_value(r).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
                for (i, pose) in c.band.poses.iter().enumerate() {
                    let dt = c.band.dts.get(i).copied().unwrap_or(0.0);
                    let _ = writeln!(out, "{},{:.6},{},{},{},{:.9},{:.9},{:.9},{:.6}", c.cycle, c.stamp, reason, c.adopted, i, pose.x, pose.y, pose.yaw, dt);
                }
            }
        }
        out
    }

    pub fn diagnostics_json(&self) -> String {
        let empty = Vec::new();
        let d = self.planner.as_ref().map_or(&empty, |p| &p.diagnostics);
        serde_json::to_string_pretty(d).unwrap_or_else(|_| "[]".into())
    }
}

pub fn trajectory_csv(result: &TrialResult) -> String {
    let mut out = String::from(TRAJECTORY_CSV_HEADER);
    out.push('\n');
    for s in &result.trajectory {
        let _ = writeln!(
            out,
            "{:.6},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            s.t, s.truth.x, s.truth.y, s.truth.yaw, s.estimate.x, s.estimate.y, s.estimate.yaw
        );
    }
    out
}

/// What the vehicle is trying to do.
#[derive(Debug, Clone)]
pub enum Mission {
    Park(Pose2),
    /// Drive through the waypoints without stopping; heading is free.
    Tour { waypoints: Vec<Vec2>, tolerance: f64 },
}

enum Estimator {
    Amcl(Box<Amcl>),
    Slam(Box<SlamState>),
}

/// Seeded generator for one of the independent random streams of a trial.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Outcome of [`run_loop`]: the trial plus the SLAM state of mapping runs.
pub struct LoopOutput {
    pub result: TrialResult,
    pub log: TrialLog,
    pub slam: Option<SlamState>,
}

pub struct LoopInput<'a> {
    pub scenario: &'a Scenario,
    pub world: World,
    /// Map used for localization and planning; `None` runs SLAM.
    pub prior: Option<&'a OccupancyGrid>,
    pub mission: Mission,
    pub seed: u64,
    pub stage: Stage,
    pub tolerances: Tolerances,
    pub config: StackConfig,
}

fn slam_base(world: &World, res: f64) -> Result<OccupancyGrid> {
    // cell centres on multiples of the resolution, half a cell outside the bounds
    let (lo, hi) = world.bounds;
    let half = Vec2::new(0.5 * res, 0.5 * res);
    Ok(OccupancyGrid::covering(lo - half, hi + half, res)?)
}

fn yaw_between(a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    d.y.atan2(d.x)
}

/// Runs one trial until success, failure or timeout.
pub fn run_loop(input: LoopInput<'_>) -> Result<LoopOutput> {
    let LoopInput { scenario, mut world, prior, mission, seed, stage, tolerances, config: cfg } = input;
    let params = cfg.vehicle;
    let footprint = params.footprint.polygon();
    let mut sensor_rng = stream_rng(seed, 1);
    let mut filter_rng = stream_rng(seed, 2);

    let scan_every = Rates::ticks(scenario.rates.scan)?;
    let plan_every = Rates::ticks(scenario.rates.local_plan)?;
    let control_every = Rates::ticks(scenario.rates.control)?;
    let fw_every = (cfg.firmware.period() / SIM_DT).round().max(1.0) as u64;
    let max_ticks = (scenario.timeout / SIM_DT).ceil() as u64;

    let start = scenario.start;
    let mut state = VehicleState::at_rest(start);
    let mut log = TrialLog::default();
    let mut trajectory = vec![TrajectorySample { t: 0.0, truth: start, estimate: start }];

    let finish = |trajectory: Vec<TrajectorySample>, state: &VehicleState, goal: &Pose2, cause: Option<FailureCause>, collisions: usize, replans: usize| {
        let err = pose_error(&state.pose, goal);
        let ok = cause.is_none() && tolerances.accepts(err) && state.v.abs() < 0.01;
        let cause = cause.or((!ok).then_some(FailureCause::OutOfTolerance));
        TrialResult {
            scenario: scenario.name.clone(),
            seed,
            stage,
            trajectory,
            final_pose_error: err,
            collision_count: collisions,
            goal_reached: ok,
            time_to_goal: state.stamp,
            cause,
            replans,
            final_speed: state.v.abs(),
        }
    };

    let (mut goal, mut tour_index) = match &mission {
        Mission::Park(g) => (*g, 0),
        Mission::Tour { waypoints, .. } => {
            let from = start.translation();
            let to = waypoints[0];
            (Pose2::new(to.x, to.y, yaw_between(from, to)), 0)
        }
    };
    let final_goal = match &mission {
        Mission::Park(g) => *g,
        Mission::Tour { waypoints, .. } => {
            let n = waypoints.len();
            let from = if n > 1 { waypoints[n - 2] } else { start.translation() };
            Pose2::new(waypoints[n - 1].x, waypoints[n - 1].y, yaw_between(from, waypoints[n - 1]))
        }
    };

    if world.check_collision(&state.pose, &footprint) {
        let r = finish(trajectory, &state, &goal, Some(FailureCause::Collision), 1, 0);
        return Ok(LoopOutput { result: r, log, slam: None });
    }
    if matches!(mission, Mission::Park(_)) && tolerances.accepts(pose_error(&start, &goal)) {
        let r = finish(trajectory, &state, &goal, None, 0, 0);
        return Ok(LoopOutput { result: r, log, slam: None });
    }

    let mut estimator = match prior {
        Some(map) => {
            let [sx, sy, syaw] = cfg.init_sigma;
            let cov = Matrix3::from_diagonal(&nalgebra::Vector3::new(sx * sx, sy * sy, syaw * syaw));
            let amcl = Amcl::new(map, &InitMode::Gaussian { mean: start, cov }, cfg.particles, cfg.amcl, &mut filter_rng)?;
            Estimator::Amcl(Box::new(amcl))
        }
        None => Estimator::Slam(Box::new(SlamState::new(slam_base(&world, cfg.slam_resolution)?, start, cfg.slam)?)),
    };
    let plan_map = match (&estimator, prior) {
        (_, Some(map)) => map.clone(),
        (Estimator::Slam(s), None) => s.map().clone(),
        _ => unreachable!("estimator follows the prior"),
    };
    let mut planner = LocalPlanner::new(&plan_map, goal, params, cfg.planner);

    let mut estimate = start;
    let mut fw = FirmwareState::default();
    let mut setpoint = AckermannCommand::ZERO;
    let mut actuator = AckermannCommand::ZERO;
    let mut frame: Option<SensorFrame> = None;
    let mut prev_scan: Option<(LaserScan, i64, f64)> = None;
    let mut stopping = false;
    let mut waiting = false;
    let mut last_refresh = 0.0;

    for tick in 0..max_ticks {
        let now = tick as f64 * SIM_DT;
        state.stamp = now;
        world.advance(now)?;
        let scan_tick = tick % scan_every == 0;
        if scan_tick || tick % fw_every == 0 {
            frame = Some(sample_sensors(&world, &state, &params, &cfg.sensors, scan_tick, &mut sensor_rng));
        }
        let f = frame.as_ref().expect("sampled on tick 0");
        let speed = f.actuation_feedback.wheel_velocity * params.wheel_radius;

        if let Some(scan) = f.scan.as_ref().filter(|_| scan_tick) {
            let delta = match &prev_scan {
                Some((prev, ticks, yaw)) => {
                    let dt = scan_every as f64 * SIM_DT;
                    let rate = angle_diff(f.imu_yaw, *yaw) / dt;
                    let dr = dead_reckon(f.encoder_ticks - ticks, rate, dt, &cfg.odometry)?;
                    Some(align_scans_with_prior(prev, scan, &dr, &cfg.odometry))
                }
                None => None,
            };
            if let Some(d) = &delta {
                log.odometry.push(OdometryRecord { stamp: now, delta: *d });
            }
            match &mut estimator {
                Estimator::Amcl(amcl) => {
                    if let Some(d) = &delta {
                        amcl.predict(d, &mut filter_rng);
                    }
                    let e: PoseEstimate = amcl.correct(scan, &mut filter_rng);
                    estimate = e.pose;
                    log.poses.push(PoseRecord { stamp: now, estimate: e, n_particles: amcl.particles.len() });
                    if amcl.particles.diverged {
                        let r = finish(trajectory, &state, &final_goal, Some(FailureCause::LocalizationDivergence), 0, planner.replans);
                        log.planner = Some(planner);
                        return Ok(LoopOutput { result: r, log, slam: None });
                    }
                }
                Estimator::Slam(slam) => {
                    let odom = delta.map_or(Pose2::IDENTITY, |d| d.delta);
                    let rep = slam.step(scan, &odom);
                    estimate = rep.pose;
                    log.poses.push(PoseRecord {
                        stamp: now,
                        estimate: PoseEstimate { pose: rep.pose, cov: Matrix3::zeros(), converged: rep.matched },
                        n_particles: 0,
                    });
                    if now - last_refresh >= cfg.map_refresh {
                        last_refresh = now;
                        planner.set_map(slam.map());
                    }
                }
            }
            prev_scan = Some((scan.clone(), f.encoder_ticks, f.imu_yaw));
            trajectory.push(TrajectorySample { t: now, truth: state.pose, estimate });
        }

        // mission progress on the estimate
        if let Mission::Tour { waypoints, tolerance } = &mission {
            let reached = (estimate.translation() - goal.translation()).norm() <= *tolerance;
            if reached && tour_index + 1 < waypoints.len() {
                tour_index += 1;
                let from = waypoints[tour_index - 1];
                let to = waypoints[tour_index];
                goal = Pose2::new(to.x, to.y, yaw_between(from, to));
                planner.set_goal(goal);
            } else if reached {
                stopping = true;
            }
        } else if !stopping {
            let err = pose_error(&estimate, &goal);
            let within = |xy: f64, yaw: f64| err[0].hypot(err[1]) <= xy && err[2] <= yaw;
            if within(cfg.arrive_xy, cfg.arrive_yaw)
                || (within(cfg.settle_xy, cfg.settle_yaw)
                    && (speed.abs() < cfg.crawl_speed || (planner.band.is_some() && planner.remaining_length() < cfg.band_done)))
            {
                stopping = true;
            }
        }

        if !stopping && tick % plan_every == 0 {
            let polys = world.active_obstacles().to_vec();
            match planner.update(now, &estimate, speed, &polys) {
                PlanStatus::Ready => waiting = false,
                PlanStatus::Waiting(_) => waiting = true,
                PlanStatus::Unreachable(_) => {
                    let r = finish(trajectory, &state, &final_goal, Some(FailureCause::Unreachable), 0, planner.replans);
                    log.planner = Some(planner);
                    return Ok(LoopOutput { result: r, log, slam: None });
                }
            }
        }
        if tick % control_every == 0 {
            setpoint = if stopping || waiting {
                AckermannCommand { steering: setpoint.steering, wheel_velocity: 0.0 }
            } else {
                planner.command(now, setpoint.steering)
            };
        }
        if tick % fw_every == 0 {
            let (out, next) = run_firmware_cycle(f, &setpoint, &cfg.firmware, &fw, now);
            fw = next;
            actuator = actuate(&out, &params);
            if stopping && speed.abs() <= cfg.stop_speed && state.v.abs() < 0.01 {
                // hold still without the integrator creeping
                actuator.wheel_velocity = 0.0;
            }
        }
        log.states.push(StateRecord { stamp: now, state, command: actuator });

        if stopping && speed.abs() <= cfg.stop_speed {
            let slam = match estimator {
                Estimator::Slam(s) => Some(*s),
                Estimator::Amcl(_) => None,
            };
            trajectory.push(TrajectorySample { t: now, truth: state.pose, estimate });
            let r = finish(trajectory, &state, &final_goal, None, 0, planner.replans);
            log.planner = Some(planner);
            return Ok(LoopOutput { result: r, log, slam });
        }

        state = step_vehicle(&state, &actuator, &params, SIM_DT)?;
        state.stamp = now + SIM_DT;
        if world.check_collision(&state.pose, &footprint) {
            trajectory.push(TrajectorySample { t: now + SIM_DT, truth: state.pose, estimate });
            let r = finish(trajectory, &state, &final_goal, Some(FailureCause::Collision), 1, planner.replans);
            log.planner = Some(planner);
            return Ok(LoopOutput { result: r, log, slam: None });
        }
    }
    let slam = match estimator {
        Estimator::Slam(s) => Some(*s),
        Estimator::Amcl(_) => None,
    };
    let r = finish(trajectory, &state, &final_goal, Some(FailureCause::Timeout), 0, planner.replans);
    log.planner = Some(planner);
    Ok(LoopOutput { result: r, log, slam })
}

/// Parks once in the scenario's world against its prior map.
pub fn navigate(scenario: &Scenario, seed: u64) -> Result<(TrialResult, TrialLog)> {
    navigate_with(scenario, seed, StackConfig::default())
}

pub fn navigate_with(scenario: &Scenario, seed: u64, config: StackConfig) -> Result<(TrialResult, TrialLog)> {
    navigate_on(scenario, seed, scenario.load_prior_map()?, config)
}

/// Parks against `prior`, or against a map from a fresh mapping run of the
/// scenario's tour when there is none.
pub fn navigate_on(scenario: &Scenario, seed: u64, prior: Option<OccupancyGrid>, config: StackConfig) -> Result<(TrialResult, TrialLog)> {
    let prior = match prior {
        Some(m) => m,
        None => crate::mapping_run::run_mapping_with(scenario, seed, config)?.map,
    };
    let world = scenario.build_world()?;
    let out = run_loop(LoopInput {
        scenario,
        world,
        prior: Some(&prior),
        mission: Mission::Park(scenario.parking_goal),
        seed,
        stage: Stage::Virtual,
        tolerances: scenario.tolerances,
        config,
    })?;
    Ok((out.result, out.log))
}
