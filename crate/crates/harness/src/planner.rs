//! Global + local planning with warm starts and replan triggers.

use nigelpark_core::geometry::{ConvexPolygon, Pose2, Vec2};
use nigelpark_core::grid::OccupancyGrid;
use nigelpark_core::planning::{
    check_feasibility, check_feasibility_upto, extract_command, init_band, plan_global, teb_optimize, Costmap, CostmapParams,
    DubinsPath, ElasticBand, Feasibility, GlobalPlannerParams, PlanError, TebConfig, TermCosts,
};
use nigelpark_core::types::{AckermannCommand, VehicleParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub teb: TebConfig,
    pub costmap: CostmapParams,
    pub global: GlobalPlannerParams,
    /// Replan when the optimized cost grows by more than this factor.
    pub replan_cost_ratio: f64,
    /// Consecutive failed global plans before giving up.
    pub max_failed_replans: usize,
    /// Seconds of band checked for collisions every cycle.
    pub feasibility_horizon: f64,
    pub v_eps: f64,
    /// Seconds of band a command is averaged over.
    pub control_horizon: f64,
    /// Turning radii, as multiples of the minimum, tried for a direct
    /// forward or reverse shot before falling back to the grid path.
    pub shot_radius_scales: [f64; 3],
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            teb: TebConfig { v_max: Some(0.25), a_max: Some(0.5), ..TebConfig::default() },
            costmap: CostmapParams::default(),
            global: GlobalPlannerParams::default(),
            replan_cost_ratio: 1.2,
            max_failed_replans: 3,
            feasibility_horizon: 3.0,
            v_eps: 1e-3,
            control_horizon: 0.3,
            shot_radius_scales: [1.5, 2.0, 3.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanReason {
    Initial,
    Infeasible,
    GoalChanged,
    CostIncrease,
    MapUpdated,
}

/// Band snapshot of one planning cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanCycle {
    pub cycle: usize,
    pub stamp: f64,
    /// Why a global replan was attempted this cycle.
    pub replan: Option<ReplanReason>,
    /// The fresh global band replaced the warm-started one.
    pub adopted: bool,
    pub band: ElasticBand,
}

/// Diagnostics of one optimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRecord {
    pub cycle: usize,
    pub stamp: f64,
    pub terms: TermCosts,
    pub iterations: usize,
    pub accepted: usize,
    pub feasibility: Feasibility,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanStatus {
    Ready,
    /// No plan this cycle; the vehicle should hold still.
    Waiting(PlanError),
    /// Global planning failed too many times in a row.
    Unreachable(PlanError),
}

#[derive(Debug, Clone)]
pub struct LocalPlanner {
    pub cfg: PlannerConfig,
    pub params: VehicleParams,
    base: Costmap,
    costmap: Costmap,
    polygons: Vec<ConvexPolygon>,
    goal: Pose2,
    goal_changed: bool,
    map_changed: bool,
    pub band: Option<ElasticBand>,
    pub band_stamp: f64,
    last_cost: Option<f64>,
    failed: usize,
    cycle: usize,
    /// Global replans after the first plan whose band was adopted.
    pub replans: usize,
    pub cycles: Vec<PlanCycle>,
    pub diagnostics: Vec<OptimizationRecord>,
}

impl LocalPlanner {
    pub fn new(map: &OccupancyGrid, goal: Pose2, params: VehicleParams, cfg: PlannerConfig) -> Self {
        let base = Costmap::inflate(map, cfg.costmap);
        LocalPlanner {
            cfg,
            params,
            costmap: base.clone(),
            base,
            polygons: Vec::new(),
            goal,
            goal_changed: false,
            map_changed: false,
            band: None,
            band_stamp: 0.0,
            last_cost: None,
            failed: 0,
            cycle: 0,
            replans: 0,
            cycles: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn goal(&self) -> Pose2 {
        self.goal
    }

    pub fn costmap(&self) -> &Costmap {
        &self.costmap
    }

    pub fn set_goal(&mut self, goal: Pose2) {
        if goal != self.goal {
            self.goal = goal;
            self.goal_changed = true;
        }
    }

    /// Replaces the static map (mapping runs refresh it periodically).
    pub fn set_map(&mut self, map: &OccupancyGrid) {
        self.base = Costmap::inflate(map, self.cfg.costmap);
        self.costmap = self.base.with_polygons(&self.polygons);
        self.map_changed = true;
    }

    fn obstacles_near(&self, centre: Vec2) -> Vec<Vec2> {
        let r = self.cfg.teb.obstacle_window;
        let mut pts = self.costmap.obstacle_points(centre, r);
        for poly in &self.polygons {
            pts.extend(poly.vertices.iter().filter(|v| (*v - centre).norm() <= r));
        }
        pts
    }

    /// Previous band re-anchored at `est`: poses before the closest one are
    /// dropped and the closest is replaced by the estimate.
    fn warm_start(&self, est: &Pose2) -> Option<ElasticBand> {
        let band = self.band.as_ref()?;
        let look = band.poses.len().min(6);
        let (k, _) = band.poses[..look]
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (p.translation() - est.translation()).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))?;
        let mut poses = vec![*est];
        let mut dts = Vec::new();
        if k + 1 < band.poses.len() {
            poses.extend_from_slice(&band.poses[k + 1..]);
            dts.extend_from_slice(&band.dts[k..]);
        } else {
            poses.push(self.goal);
            dts.push(self.cfg.teb.dt_min);
        }
        ElasticBand::new(poses, dts).ok()
    }

    fn optimize(&mut self, band: &ElasticBand, est: &Pose2, v: f64, stamp: f64) -> Result<(ElasticBand, f64, Feasibility), PlanError> {
        let obstacles = self.obstacles_near(est.translation());
        let (out, diag) = teb_optimize(band, &obstacles, &self.params, &self.cfg.teb, v)?;
        let feas = check_feasibility_upto(&out, &self.costmap, &self.params.footprint, &self.params, self.cfg.feasibility_horizon);
        self.diagnostics.push(OptimizationRecord {
            cycle: self.cycle,
            stamp,
            terms: diag.terms,
            iterations: diag.iterations,
            accepted: diag.accepted,
            feasibility: feas,
        });
        Ok((out, diag.terms.total(), feas))
    }

    /// Shortest collision-free single-direction curve from `est` to the goal.
    fn shot(&self, est: &Pose2) -> Option<ElasticBand> {
        let r_min = 1.0 / self.params.max_curvature();
        let mut best: Option<(f64, ElasticBand)> = None;
        for scale in self.cfg.shot_radius_scales {
            for reverse in [false, true] {
                let Some(path) = DubinsPath::shortest(est, &self.goal, scale * r_min, reverse) else {
                    continue;
                };
                if best.as_ref().is_some_and(|(len, _)| *len <= path.length()) {
                    continue;
                }
                let Ok(band) = path.to_band(&self.goal, &self.params, &self.cfg.teb) else {
                    continue;
                };
                if check_feasibility(&band, &self.costmap, &self.params.footprint, &self.params).feasible {
                    best = Some((path.length(), band));
                }
            }
        }
        best.map(|(_, band)| band)
    }

    fn global(&mut self, est: &Pose2, v: f64, stamp: f64) -> Result<(ElasticBand, f64, Feasibility), PlanError> {
        let path = plan_global(&self.costmap, est, &self.goal, &self.cfg.global)?;
        let band = match self.shot(est) {
            Some(band) => band,
            None => init_band(&path.waypoints, est, &self.goal, &self.params, &self.cfg.teb)?,
        };
        self.optimize(&band, est, v, stamp)
    }

    /// One planning cycle from the estimate `est` moving at signed speed `v`
    /// with the currently known dynamic obstacles.
    pub fn update(&mut self, stamp: f64, est: &Pose2, v: f64, polygons: &[ConvexPolygon]) -> PlanStatus {
        self.cycle += 1;
        if polygons != self.polygons.as_slice() {
            self.polygons = polygons.to_vec();
            self.costmap = self.base.with_polygons(&self.polygons);
        }

        let mut reason = if self.band.is_none() {
            Some(if self.cycles.is_empty() { ReplanReason::Initial } else { ReplanReason::Infeasible })
        } else if self.goal_changed {
            Some(ReplanReason::GoalChanged)
        } else if self.map_changed {
            Some(ReplanReason::MapUpdated)
        } else {
            None
        };
        self.goal_changed = false;
        self.map_changed = false;

        let mut result = None;
        let mut adopted = false;
        if reason.is_none() {
            if let Some(warm) = self.warm_start(est) {
                match self.optimize(&warm, est, v, stamp) {
                    Ok((band, c, feas)) => {
                        if !feas.feasible {
                            reason = Some(ReplanReason::Infeasible);
                        } else if self.last_cost.is_some_and(|last| c > self.cfg.replan_cost_ratio * last) {
                            reason = Some(ReplanReason::CostIncrease);
                        }
                        result = Some((band, c, feas));
                    }
                    Err(_) => reason = Some(ReplanReason::Infeasible),
                }
            } else {
                reason = Some(ReplanReason::Infeasible);
            }
        }

        if let Some(r) = reason {
            match self.global(est, v, stamp) {
                Ok(fresh) => {
                    self.failed = 0;
                    // keep the warm band if the fresh one is no better
                    let keep_warm = matches!(&result, Some((_, c, f)) if f.feasible && (!fresh.2.feasible || *c <= fresh.1));
                    if !keep_warm {
                        result = Some(fresh);
                        adopted = true;
                        if r != ReplanReason::Initial {
                            self.replans += 1;
                        }
                    }
                }
                Err(e) => {
                    self.failed += 1;
                    self.band = None;
                    self.last_cost = None;
                    if self.failed >= self.cfg.max_failed_replans {
                        return PlanStatus::Unreachable(e);
                    }
                    return PlanStatus::Waiting(e);
                }
            }
        }

        let (band, c, _) = result.expect("set by warm start or replan");
        self.cycles.push(PlanCycle { cycle: self.cycle, stamp, replan: reason, adopted, band: band.clone() });
        self.band = Some(band);
        self.band_stamp = stamp;
        self.last_cost = Some(c);
        PlanStatus::Ready
    }

    /// Path length left on the current band.
    pub fn remaining_length(&self) -> f64 {
        self.band.as_ref().map_or(0.0, ElasticBand::length)
    }

    /// Command for time `now`: the chord from the band pose active at that
    /// offset to the pose `control_horizon` later, cut at a direction change.
    pub fn command(&self, now: f64, prev_steering: f64) -> AckermannCommand {
        let stop = AckermannCommand { steering: prev_steering, wheel_velocity: 0.0 };
        let Some(band) = &self.band else {
            return stop;
        };
        let tau = now - self.band_stamp;
        let mut t = 0.0;
        let Some(i) = (0..band.segments()).find(|&i| {
            t += band.dts[i];
            tau < t - 1e-9
        }) else {
            return stop;
        };
                let (mut j, mut dt) = (i + 1, band.dts[i]);
        while j < band.segments() && dt < self.cfg.control_horizon && band.direction(j) == band.direction(i) {
            dt += band.dts[j];
            j += 1;
        }
        let chord = ElasticBand { poses: vec![band.poses[i], band.poses[j]], dts: vec![dt] };
        extract_command(&chord, &self.params, prev_steering, self.cfg.v_eps)
    }
}
