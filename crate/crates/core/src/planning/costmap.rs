use serde::{Deserialize, Serialize};

use crate::geometry::{ConvexPolygon, Vec2};
use crate::grid::{distance_transform, Cell, OccupancyGrid, Trinary};
use crate::sim::cell_polygon;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostmapParams {
    /// Cells at most this far (m) from an obstacle are lethal.
    pub inscribed_radius: f64,
    pub inflation_radius: f64,
    /// Exponential decay rate of the inflated cost (1/m).
    pub cost_factor: f64,
    pub unknown_is_lethal: bool,
}

impl Default for CostmapParams {
    fn default() -> Self {
        CostmapParams {
            inscribed_radius: 0.065,
            inflation_radius: 0.3,
            cost_factor: 10.0,
            unknown_is_lethal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    pub base: OccupancyGrid,
    pub params: CostmapParams,
    /// Occupied cells (plus unknown ones when those count as lethal).
    pub obstacle: Vec<bool>,
    pub lethal: Vec<bool>,
    /// Inflated cost in (0, 1] near obstacles, 0 in free space, 1 when lethal.
    pub cost: Vec<f64>,
    /// Distance (m) from each cell centre to the nearest obstacle centre.
    pub distance: Vec<f64>,
}

impl Costmap {
    pub fn inflate(map: &OccupancyGrid, params: CostmapParams) -> Costmap {
        let obstacle: Vec<bool> = (0..map.len())
            .map(|i| match map.trinary_at(i) {
                Trinary::Occupied => true,
                Trinary::Unknown => params.unknown_is_lethal,
                Trinary::Free => false,
            })
            .collect();
        let distance: Vec<f64> = distance_transform(map.width, map.height, &obstacle)
            .into_iter()
            .map(|d| d * map.resolution)
            .collect();
        let mut lethal = vec![false; map.len()];
        let mut cost = vec![0.0; map.len()];
        for i in 0..map.len() {
            let d = distance[i];
            if d <= params.inscribed_radius {
                lethal[i] = true;
                cost[i] = 1.0;
            } else if d <= params.inflation_radius {
                cost[i] = (-params.cost_factor * (d - params.inscribed_radius)).exp();
            }
        }
        Costmap { base: map.clone(), params, obstacle, lethal, cost, distance }
    }

    /// Smallest cost any inflated (non-lethal, non-free) cell can carry.
    pub fn inflated_floor(&self) -> f64 {
        (-self.params.cost_factor * (self.params.inflation_radius - self.params.inscribed_radius)).exp()
    }

    pub fn resolution(&self) -> f64 {
        self.base.resolution
    }

    pub fn index(&self, c: Cell) -> Option<usize> {
        self.base.index(c)
    }

    /// Off-map cells count as lethal.
    pub fn is_lethal(&self, c: Cell) -> bool {
        self.index(c).is_none_or(|i| self.lethal[i])
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.index(c).is_none_or(|i| self.obstacle[i])
    }

    pub fn cost_of(&self, c: Cell) -> f64 {
        self.index(c).map_or(1.0, |i| self.cost[i])
    }

    /// Does `polygon` touch any obstacle cell or leave the map?
    pub fn polygon_collides(&self, polygon: &ConvexPolygon) -> bool {
        let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
        for v in &polygon.vertices {
            let m = self.base.world_to_map_continuous(*v);
            lo = lo.inf(&m);
            hi = hi.sup(&m);
        }
        // continuous map coordinates are in cells
        let (x0, y0) = (lo.x.floor() as i64 - 1, lo.y.floor() as i64 - 1);
        let (x1, y1) = (hi.x.floor() as i64 + 1, hi.y.floor() as i64 + 1);
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let c = Cell::new(ix, iy);
                if !self.is_obstacle(c) {
                    continue;
                }
                if cell_polygon(&self.base, c).intersects(polygon) {
                    return true;
                }
            }
        }
        false
    }

    /// Centres of obstacle cells that border non-obstacle space within
    /// `radius` of `centre`.
    pub fn obstacle_points(&self, centre: Vec2, radius: f64) -> Vec<Vec2> {
        let m = &self.base;
        let r = m.resolution;
        let c = m.world_to_cell_unbounded(centre);
        let k = (radius / r).ceil() as i64 + 1;
        let mut out = Vec::new();
        for iy in (c.iy - k)..=(c.iy + k) {
            for ix in (c.ix - k)..=(c.ix + k) {
                let cell = Cell::new(ix, iy);
                let Some(i) = m.index(cell) else { continue };
                if !self.obstacle[i] {
                    continue;
                }
                let surface = [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|(dx, dy)| m.index(Cell::new(ix + dx, iy + dy)).is_some_and(|j| !self.obstacle[j]));
                if !surface {
                    continue;
                }
                let p = m.grid_to_world(cell);
                if (p - centre).norm() <= radius {
                    out.push(p);
                }
            }
        }
        out
    }

    /// Marks the cells under each polygon as obstacles and re-inflates.
    pub fn with_polygons(&self, polygons: &[ConvexPolygon]) -> Costmap {
        if polygons.is_empty() {
            return self.clone();
        }
        let mut map = self.base.clone();
        for p in polygons {
            let (mut lo, mut hi) = (Vec2::repeat(f64::INFINITY), Vec2::repeat(f64::NEG_INFINITY));
            for v in &p.vertices {
                let q = map.world_to_map_continuous(*v);
                lo = lo.inf(&q);
                hi = hi.sup(&q);
            }
            for iy in (lo.y.floor() as i64)..=(hi.y.floor() as i64) {
                for ix in (lo.x.floor() as i64)..=(hi.x.floor() as i64) {
                    let c = Cell::new(ix, iy);
                    if map.contains(c) && cell_polygon(&map, c).intersects(p) {
                        map.set_occupied(c);
                    }
                }
            }
        }
        Costmap::inflate(&map, self.params)
    }
}
