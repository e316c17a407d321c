//! Ground-truth world: static occupancy plus scripted convex obstacles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, ConvexPolygon, Pose2, Vec2};
use crate::grid::{Cell, OccupancyGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    /// Body-frame outline.
    pub shape: ConvexPolygon,
    pub waypoints: Vec<TimedPose>,
    pub active_from: f64,
    pub active_until: f64,
}

impl DynamicObstacle {
    pub fn new(
        shape: ConvexPolygon,
        waypoints: Vec<TimedPose>,
        active_from: f64,
        active_until: f64,
    ) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::InvalidArgument("obstacle needs at least one waypoint".into()));
        }
        if waypoints.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidArgument(
                "obstacle waypoint times must be strictly increasing".into(),
            ));
        }
        if active_until < active_from {
            return Err(Error::InvalidArgument("obstacle activity window is inverted".into()));
        }
        Ok(DynamicObstacle {
            shape,
            waypoints,
            active_from,
            active_until,
        })
    }

    /// A motionless obstacle present for the whole run.
    pub fn fixed(shape: ConvexPolygon, pose: Pose2) -> Self {
        DynamicObstacle {
            shape,
            waypoints: vec![TimedPose { t: 0.0, pose }],
            active_from: f64::NEG_INFINITY,
            active_until: f64::INFINITY,
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.active_from && t <= self.active_until
    }

    /// Pose at time `t`, clamped to the first/last waypoint outside their span.
    pub fn pose_at(&self, t: f64) -> Pose2 {
        let wps = &self.waypoints;
        let first = wps[0];
        let last = wps[wps.len() - 1];
        if t <= first.t {
            return first.pose;
        }
        if t >= last.t {
            return last.pose;
        }
        let k = wps.partition_point(|w| w.t <= t);
        let (a, b) = (wps[k - 1], wps[k]);
        let s = (t - a.t) / (b.t - a.t);
        Pose2::new(
            a.pose.x + s * (b.pose.x - a.pose.x),
            a.pose.y + s * (b.pose.y - a.pose.y),
            a.pose.yaw + s * angle_diff(b.pose.yaw, a.pose.yaw),
        )
    }

    pub fn polygon_at(&self, t: f64) -> Option<ConvexPolygon> {
        self.is_active(t)
            .then(|| self.shape.transformed(&self.pose_at(t)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub static_map: OccupancyGrid,
    pub obstacles: Vec<DynamicObstacle>,
    pub bounds: (Vec2, Vec2),
    time: f64,
    active: Vec<ConvexPolygon>,
}

impl World {
    pub fn new(
        static_map: OccupancyGrid,
        obstacles: Vec<DynamicObstacle>,
        bounds: (Vec2, Vec2),
    ) -> Result<Self> {
        let (lo, hi) = bounds;
        let inside = |p: &Vec2| p.x >= lo.x && p.y >= lo.y && p.x <= hi.x && p.y <= hi.y;
        for (k, ob) in obstacles.iter().enumerate() {
            for wp in &ob.waypoints {
                if !ob.shape.transformed(&wp.pose).vertices.iter().all(inside) {
                    return Err(Error::InvalidArgument(format!(
                        "obstacle {k} leaves the world bounds at t={}",
                        wp.t
                    )));
                }
            }
        }
        let mut w = World {
            static_map,
            obstacles,
            bounds,
            time: f64::NEG_INFINITY,
            active: Vec::new(),
        };
        w.advance(0.0)?;
        Ok(w)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// World-frame outlines of obstacles active at the current time.
    pub fn active_obstacles(&self) -> &[ConvexPolygon] {
        &self.active
    }

    /// Moves every obstacle to time `t`. Time may not run backwards.
    pub fn advance(&mut self, t: f64) -> Result<()> {
        if t < self.time {
            return Err(Error::ContractViolation(format!(
                "world time regressed from {} to {t}",
                self.time
            )));
        }
        self.time = t;
        self.active = self
            .obstacles
            .iter()
            .filter_map(|o| o.polygon_at(t))
            .collect();
        Ok(())
    }

    /// Value-returning form of [`World::advance`].
    pub fn advanced(&self, t: f64) -> Result<World> {
        let mut w = self.clone();
        w.advance(t)?;
        Ok(w)
    }

    pub fn in_bounds(&self, p: Vec2) -> bool {
        let (lo, hi) = self.bounds;
        p.x >= lo.x && p.y >= lo.y && p.x <= hi.x && p.y <= hi.y
    }

    /// Adds an obstacle after construction (scenario overrides, perturbations).
    pub fn push_obstacle(&mut self, ob: DynamicObstacle) {
        if let Some(p) = ob.polygon_at(self.time) {
            self.active.push(p);
        }
        self.obstacles.push(ob);
    }

    /// True when the footprint polygon touches an occupied ground-truth cell
    /// or an active obstacle. Contact counts as collision.
    pub fn check_collision(&self, pose: &Pose2, footprint: &ConvexPolygon) -> bool {
        let body = footprint.transformed(pose);
        if self.active.iter().any(|o| o.intersects(&body)) {
            return true;
        }
        polygon_hits_occupied(&self.static_map, &body)
    }
}

/// Square outline of a cell in world coordinates.
pub fn cell_polygon(map: &OccupancyGrid, c: Cell) -> ConvexPolygon {
    let r = map.resolution;
    let corners = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    ConvexPolygon {
        vertices: corners
            .iter()
            .map(|(dx, dy)| {
                map.origin
                    .transform_point(Vec2::new((c.ix as f64 + dx) * r, (c.iy as f64 + dy) * r))
            })
            .collect(),
    }
}

fn polygon_hits_occupied(map: &OccupancyGrid, body: &ConvexPolygon) -> bool {
    let cont: Vec<Vec2> = body
        .vertices
        .iter()
        .map(|v| map.world_to_map_continuous(*v))
        .collect();
    let min_x = cont.iter().map(|v| v.x).fold(f64::INFINITY, f64::min).floor() as i64;
    let max_x = cont.iter().map(|v| v.x).fold(f64::NEG_INFINITY, f64::max).floor() as i64;
    let min_y = cont.iter().map(|v| v.y).fold(f64::INFINITY, f64::min).floor() as i64;
    let max_y = cont.iter().map(|v| v.y).fold(f64::NEG_INFINITY, f64::max).floor() as i64;
    for iy in min_y.max(0)..=max_y.min(map.height as i64 - 1) {
        for ix in min_x.max(0)..=max_x.min(map.width as i64 - 1) {
            let c = Cell::new(ix, iy);
            if map.is_occupied(c) && cell_polygon(map, c).intersects(body) {
                return true;
            }
        }
    }
    false
}
