//! Occupancy-grid SLAM: log-odds scan integration and multi-resolution
//! Gauss–Newton scan-to-map matching.

mod io;

pub use io::{encode_pgm, encode_yaml, load_map, save_map, PIXEL_FREE, PIXEL_OCCUPIED, PIXEL_UNKNOWN};

use std::collections::HashSet;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, Pose2, Vec2};
use crate::grid::{logit, Cell, OccupancyGrid, Trinary};
use crate::types::LaserScan;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverseSensorModel {
    pub p_hit: f64,
    pub p_free: f64,
    /// Beams longer than this only clear free space (m).
    pub max_use_range: f64,
}

impl Default for InverseSensorModel {
    fn default() -> Self {
        InverseSensorModel {
            p_hit: 0.7,
            p_free: 0.4,
            max_use_range: 0.95 * 6.0,
        }
    }
}

impl InverseSensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_hit > 0.5 && self.p_hit < 1.0) {
            return Err(Error::InvalidArgument(format!("p_hit must lie in (0.5, 1), got {}", self.p_hit)));
        }
        if !(self.p_free > 0.0 && self.p_free < 0.5) {
            return Err(Error::InvalidArgument(format!("p_free must lie in (0, 0.5), got {}", self.p_free)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlamConfig {
    pub sensor: InverseSensorModel,
    pub levels: usize,
    pub iterations: usize,
    pub converge_tol: f64,
    pub damping_condition: f64,
    pub update_distance: f64,
    pub update_angle: f64,
}

impl Default for SlamConfig {
    fn default() -> Self {
        SlamConfig {
            sensor: InverseSensorModel::default(),
            levels: 3,
            iterations: 10,
            converge_tol: 1e-4,
            damping_condition: 1e6,
            update_distance: 0.05,
            update_angle: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pose: Pose2,
    pub converged: bool,
    /// Mean interpolated occupancy at the beam endpoints.
    pub score: f64,
    /// Norm of the last Gauss–Newton update at the finest level.
    pub last_update: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlamStepReport {
    pub pose: Pose2,
    pub matched: bool,
    pub integrated: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlamState {
    /// `pyramid[k]` has resolution `2^k` times the base; `pyramid[0]` is the map.
    pub pyramid: Vec<OccupancyGrid>,
    pub pose: Pose2,
    pub scan_count: usize,
    pub config: SlamConfig,
    last_integrated: Option<Pose2>,
}

impl SlamState {
    /// Fresh all-unknown map with the given base geometry.
    pub fn new(base: OccupancyGrid, start: Pose2, config: SlamConfig) -> Result<Self> {
        config.sensor.validate()?;
        if config.levels == 0 {
            return Err(Error::InvalidArgument("pyramid needs at least one level".into()));
        }
        let base = base.blank_like();
        let mut pyramid = vec![base.clone()];
        for k in 1..config.levels {
            let f = 1usize << k;
            pyramid.push(OccupancyGrid::new(
                base.width.div_ceil(f),
                base.height.div_ceil(f),
                base.resolution * f as f64,
                base.origin,
            )?);
        }
        Ok(SlamState {
            pyramid,
            pose: start,
            scan_count: 0,
            config,
            last_integrated: None,
        })
    }

    pub fn map(&self) -> &OccupancyGrid {
        &self.pyramid[0]
    }

    /// Adds one scan's evidence at `pose` to every pyramid level.
    pub fn integrate_scan(&mut self, scan: &LaserScan, pose: &Pose2) {
        let model = self.config.sensor;
        for level in &mut self.pyramid {
            integrate_into(level, scan, pose, &model);
        }
        self.scan_count += 1;
        self.last_integrated = Some(*pose);
    }

    /// Coarse-to-fine scan alignment against the current map.
    pub fn match_scan(&self, scan: &LaserScan, guess: &Pose2) -> MatchResult {
        match_scan_to_map(&self.pyramid, &self.config, scan, guess)
    }

    /// One SLAM cycle: predict with odometry, correct by matching, and
    /// integrate when the vehicle has moved far enough.
    pub fn step(&mut self, scan: &LaserScan, odom_delta: &Pose2) -> SlamStepReport {
        let guess = self.pose.compose(odom_delta);
        let (pose, matched, score) = if self.scan_count == 0 {
            (guess, false, 0.0)
        } else {
            let m = self.match_scan(scan, &guess);
            if m.converged {
                (m.pose, true, m.score)
            } else {
                (guess, false, m.score)
            }
        };
        self.pose = pose;
        let integrate = match self.last_integrated {
            None => true,
            Some(last) => {
                last.distance(&pose) > self.config.update_distance
                    || angle_diff(pose.yaw, last.yaw).abs() > self.config.update_angle
            }
        };
        if integrate {
            self.integrate_scan(scan, &pose);
        }
        SlamStepReport { pose, matched, integrated: integrate, score }
    }
}

/// Log-odds update of one grid from one scan. Within a scan each cell is
/// updated at most once and a hit overrides any traversal.
fn integrate_into(map: &mut OccupancyGrid, scan: &LaserScan, pose: &Pose2, model: &InverseSensorModel) {
    let origin = pose.translation();
    let mut hits: HashSet<Cell> = HashSet::new();
    let mut free: HashSet<Cell> = HashSet::new();
    for i in 0..scan.n_beams() {
        let r = scan.ranges[i];
        let angle = pose.yaw + scan.beam_angle(i);
        let dir = Vec2::new(angle.cos(), angle.sin());
        let hit = scan.is_hit(i) && r <= model.max_use_range;
        let reach = if hit { r } else { r.min(model.max_use_range) };
        let end = origin + dir * reach;
        for c in map.raytrace_cells(origin, end, !hit) {
            free.insert(c);
        }
        if hit {
            if let Some(c) = map.world_to_grid(end) {
                hits.insert(c);
            }
        }
    }
    let (l_hit, l_free) = (logit(model.p_hit), logit(model.p_free));
    let mut hit_cells: Vec<Cell> = hits.iter().copied().collect();
    hit_cells.sort_unstable();
    for c in hit_cells {
        map.update(c, l_hit);
    }
    let mut free_cells: Vec<Cell> = free.difference(&hits).copied().collect();
    free_cells.sort_unstable();
    for c in free_cells {
        map.update(c, l_free);
    }
}

/// Bilinearly interpolated occupancy probability and its world-frame gradient.
pub fn interpolate(map: &OccupancyGrid, p: Vec2) -> (f64, Vec2) {
    let m = map.world_to_map_continuous(p);
    let (u, v) = (m.x - 0.5, m.y - 0.5);
    let (i0, j0) = (u.floor(), v.floor());
    let (fx, fy) = (u - i0, v - j0);
    let (i0, j0) = (i0 as i64, j0 as i64);
    let p00 = map.probability(Cell::new(i0, j0));
    let p10 = map.probability(Cell::new(i0 + 1, j0));
    let p01 = map.probability(Cell::new(i0, j0 + 1));
    let p11 = map.probability(Cell::new(i0 + 1, j0 + 1));
    let value = (1.0 - fy) * ((1.0 - fx) * p00 + fx * p10) + fy * ((1.0 - fx) * p01 + fx * p11);
    let dx = (1.0 - fy) * (p10 - p00) + fy * (p11 - p01);
    let dy = (1.0 - fx) * (p01 - p00) + fx * (p11 - p10);
    let (s, c) = map.origin.yaw.sin_cos();
    let g = Vec2::new(c * dx - s * dy, s * dx + c * dy) / map.resolution;
    (value, g)
}

fn match_scan_to_map(pyramid: &[OccupancyGrid], cfg: &SlamConfig, scan: &LaserScan, guess: &Pose2) -> MatchResult {
    let points: Vec<Vec2> = scan
        .hit_points()
        .into_iter()
        .filter(|(i, _)| scan.ranges[*i] <= cfg.sensor.max_use_range)
        .map(|(_, p)| p)
        .collect();
    let fail = MatchResult { pose: *guess, converged: false, score: 0.0, last_update: f64::INFINITY };
    if points.len() < 3 {
        return fail;
    }

    // Bilinear interpolation leaves a kink at every cell centre, where plain
    // Gauss–Newton can bounce; steps are only kept if they lower the cost.
    let mut xi = Vector3::new(guess.x, guess.y, guess.yaw);
    let mut last_update = f64::INFINITY;
    for (level, map) in pyramid.iter().enumerate().rev() {
        let mut lambda = 0.0;
        let mut cost = match_cost(map, &points, &xi);
        for _ in 0..cfg.iterations {
            let (h, b) = normal_equations(map, &points, &xi);
            let Some(mut step) = solve_damped(&h, &b, cfg.damping_condition, lambda) else {
                return fail;
            };
            let mut accepted = false;
            for _ in 0..12 {
                let mut trial = xi + step;
                trial[2] = crate::geometry::wrap(trial[2]);
                let c = match_cost(map, &points, &trial);
                if c <= cost {
                    xi = trial;
                    cost = c;
                    lambda *= 0.1;
                    accepted = true;
                    break;
                }
                lambda = if lambda == 0.0 { 1e-3 * h.diagonal().max() } else { lambda * 10.0 };
                match solve_damped(&h, &b, cfg.damping_condition, lambda) {
                    Some(s) => step = s,
                    None => return fail,
                }
            }
            last_update = if accepted { step.norm() } else { 0.0 };
            if level == 0 && last_update < cfg.converge_tol {
                break;
            }
        }
    }
    let pose = Pose2::new(xi[0], xi[1], xi[2]);
    let score = points
        .iter()
        .map(|p| interpolate(&pyramid[0], pose.transform_point(*p)).0)
        .sum::<f64>()
        / points.len() as f64;
    MatchResult {
        pose,
        converged: last_update < cfg.converge_tol,
        score,
        last_update,
    }
}

fn match_cost(map: &OccupancyGrid, points: &[Vec2], xi: &Vector3<f64>) -> f64 {
    let pose = Pose2 { x: xi[0], y: xi[1], yaw: xi[2] };
    points
        .iter()
        .map(|p| (1.0 - interpolate(map, pose.transform_point(*p)).0).powi(2))
        .sum()
}

fn normal_equations(map: &OccupancyGrid, points: &[Vec2], xi: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    let (s, c) = xi[2].sin_cos();
    let mut h = Matrix3::zeros();
    let mut b = Vector3::zeros();
    for p in points {
        let w = Vec2::new(xi[0] + c * p.x - s * p.y, xi[1] + s * p.x + c * p.y);
        let (m, g) = interpolate(map, w);
        let dtheta = g.x * (-s * p.x - c * p.y) + g.y * (c * p.x - s * p.y);
        let j = Vector3::new(g.x, g.y, dtheta);
        h += j * j.transpose();
        b += j * (1.0 - m);
    }
    (h, b)
}

/// Solves `(H + λI) δ = b`, with extra damping when H is ill-conditioned.
/// Returns `None` when H has rank below 3.
fn solve_damped(h: &Matrix3<f64>, b: &Vector3<f64>, max_condition: f64, extra: f64) -> Option<Vector3<f64>> {
    let eig = h.symmetric_eigen();
    let max_ev = eig.eigenvalues.max();
    let min_ev = eig.eigenvalues.min();
    if !(max_ev > 0.0) || min_ev <= max_ev * 1e-12 {
        return None;
    }
    let mut hd = *h;
    let mut lambda = extra;
    if max_ev / min_ev > max_condition {
        lambda += max_ev / max_condition;
    }
    for k in 0..3 {
        hd[(k, k)] += lambda;
    }
    hd.cholesky().map(|ch| ch.solve(b))
}

/// Intersection-over-union of occupied cells, with `truth` resampled onto
/// `estimate`'s lattice. Only truth cells on an obstacle surface (occupied
/// with a free 4-neighbour) count, since interiors are unobservable.
pub fn occupancy_iou(estimate: &OccupancyGrid, truth: &OccupancyGrid) -> f64 {
    let mut truth_cells: HashSet<Cell> = HashSet::new();
    for c in truth.occupied_cells() {
        let surface = [(1, 0), (-1, 0), (0, 1), (0, -1)]
            .iter()
            .any(|(dx, dy)| truth.trinary(Cell::new(c.ix + dx, c.iy + dy)) == Trinary::Free);
        if surface {
            if let Some(e) = estimate.world_to_grid(truth.grid_to_world(c)) {
                truth_cells.insert(e);
            }
        }
    }
    let est: HashSet<Cell> = estimate.occupied_cells().collect();
    let inter = est.intersection(&truth_cells).count();
    let union = est.union(&truth_cells).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}
