//! Log-odds occupancy lattice anchored at the outer corner of cell (0, 0).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Pose2, Vec2};

/// Lower log-odds clamp (p ≈ 0.01).
pub const LOGODDS_MIN: f64 = -4.6;
/// Upper log-odds clamp (p ≈ 0.99).
pub const LOGODDS_MAX: f64 = 4.6;

/// Probability at or above which a cell counts as occupied.
pub const OCCUPIED_THRESH: f64 = 0.65;
/// Probability at or below which an observed cell counts as free.
pub const FREE_THRESH: f64 = 0.196;

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn logistic(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub ix: i64,
    pub iy: i64,
}

impl Cell {
    pub const fn new(ix: i64, iy: i64) -> Self {
        Cell { ix, iy }
    }
}

/// Thresholded cell state as written to map files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Trinary {
    Occupied,
    Free,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub resolution: f64,
    pub origin: Pose2,
    pub width: usize,
    pub height: usize,
    logodds: Vec<f64>,
    observed: Vec<bool>,
}

impl OccupancyGrid {
    /// All-unknown grid.
    pub fn new(width: usize, height: usize, resolution: f64, origin: Pose2) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidArgument("grid origin not finite".into()));
        }
        Ok(OccupancyGrid {
            resolution,
            origin,
            width,
            height,
            logodds: vec![0.0; width * height],
            observed: vec![false; width * height],
        })
    }

    /// Grid covering `[min, max]` (world axes, no rotation).
    pub fn covering(min: Vec2, max: Vec2, resolution: f64) -> Result<Self> {
        let w = ((max.x - min.x) / resolution).ceil().max(1.0) as usize;
        let h = ((max.y - min.y) / resolution).ceil().max(1.0) as usize;
        Self::new(w, h, resolution, Pose2::new(min.x, min.y, 0.0))
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn contains(&self, c: Cell) -> bool {
        c.ix >= 0 && c.iy >= 0 && (c.ix as usize) < self.width && (c.iy as usize) < self.height
    }

    #[inline]
    pub fn index(&self, c: Cell) -> Option<usize> {
        self.contains(c)
            .then(|| c.iy as usize * self.width + c.ix as usize)
    }

    #[inline]
    pub fn cell_of_index(&self, i: usize) -> Cell {
        Cell::new((i % self.width) as i64, (i / self.width) as i64)
    }

    /// Continuous lattice coordinates (cells, not floored) of a world point.
    #[inline]
    pub fn world_to_map_continuous(&self, p: Vec2) -> Vec2 {
        self.origin.inverse_transform_point(p) / self.resolution
    }

    /// Lattice cell containing `p`, or `None` when outside.
    #[inline]
    pub fn world_to_grid(&self, p: Vec2) -> Option<Cell> {
        let c = self.world_to_cell_unbounded(p);
        self.contains(c).then_some(c)
    }

    /// Cell index of `p` without the lattice bounds check.
    #[inline]
    pub fn world_to_cell_unbounded(&self, p: Vec2) -> Cell {
        let m = self.world_to_map_continuous(p);
        Cell::new(m.x.floor() as i64, m.y.floor() as i64)
    }

    /// World coordinates of a cell centre.
    #[inline]
    pub fn grid_to_world(&self, c: Cell) -> Vec2 {
        let local = Vec2::new(
            (c.ix as f64 + 0.5) * self.resolution,
            (c.iy as f64 + 0.5) * self.resolution,
        );
        self.origin.transform_point(local)
    }

    pub fn logodds(&self, c: Cell) -> Option<f64> {
        self.index(c).map(|i| self.logodds[i])
    }

    pub fn logodds_at(&self, i: usize) -> f64 {
        self.logodds[i]
    }

    pub fn is_observed(&self, c: Cell) -> bool {
        self.index(c).is_some_and(|i| self.observed[i])
    }

    pub fn observed_at(&self, i: usize) -> bool {
        self.observed[i]
    }

    /// Occupancy probability; unknown and out-of-lattice cells read 0.5.
    pub fn probability(&self, c: Cell) -> f64 {
        self.index(c).map_or(0.5, |i| self.probability_at(i))
    }

    #[inline]
    pub fn probability_at(&self, i: usize) -> f64 {
        if self.observed[i] {
            logistic(self.logodds[i])
        } else {
            0.5
        }
    }

    /// Adds `delta` to a cell's log-odds, clamps, and marks it observed.
    pub fn update(&mut self, c: Cell, delta: f64) {
        if let Some(i) = self.index(c) {
            self.update_at(i, delta);
        }
    }

    #[inline]
    pub fn update_at(&mut self, i: usize, delta: f64) {
        self.logodds[i] = (self.logodds[i] + delta).clamp(LOGODDS_MIN, LOGODDS_MAX);
        self.observed[i] = true;
    }

    /// Overwrites a cell's log-odds (clamped) and marks it observed.
    pub fn set_logodds(&mut self, c: Cell, l: f64) {
        if let Some(i) = self.index(c) {
            self.logodds[i] = l.clamp(LOGODDS_MIN, LOGODDS_MAX);
            self.observed[i] = true;
        }
    }

    pub fn set_occupied(&mut self, c: Cell) {
        self.set_logodds(c, LOGODDS_MAX);
    }

    pub fn set_free(&mut self, c: Cell) {
        self.set_logodds(c, LOGODDS_MIN);
    }

    pub fn set_unknown(&mut self, c: Cell) {
        if let Some(i) = self.index(c) {
            self.logodds[i] = 0.0;
            self.observed[i] = false;
        }
    }

    pub fn trinary_at(&self, i: usize) -> Trinary {
        if !self.observed[i] {
            return Trinary::Unknown;
        }
        let p = logistic(self.logodds[i]);
        if p >= OCCUPIED_THRESH {
            Trinary::Occupied
        } else if p <= FREE_THRESH {
            Trinary::Free
        } else {
            Trinary::Unknown
        }
    }

    pub fn trinary(&self, c: Cell) -> Trinary {
        self.index(c).map_or(Trinary::Unknown, |i| self.trinary_at(i))
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.trinary(c) == Trinary::Occupied
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.trinary(c) == Trinary::Free
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(|i| self.cell_of_index(i))
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len())
            .filter(|&i| self.trinary_at(i) == Trinary::Occupied)
            .map(|i| self.cell_of_index(i))
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len())
            .filter(|&i| self.trinary_at(i) == Trinary::Free)
            .map(|i| self.cell_of_index(i))
    }

    /// Same geometry, all cells unknown.
    pub fn blank_like(&self) -> OccupancyGrid {
        OccupancyGrid {
            logodds: vec![0.0; self.len()],
            observed: vec![false; self.len()],
            ..self.clone()
        }
    }

    /// Marks every cell whose centre lies inside `poly` as occupied.
    pub fn fill_polygon(&mut self, poly: &crate::geometry::ConvexPolygon) {
        for i in 0..self.len() {
            let c = self.cell_of_index(i);
            if poly.contains(self.grid_to_world(c)) {
                self.set_occupied(c);
            }
        }
    }

    /// Bresenham cell sequence between two world points, start cell first,
    /// clipped to the lattice. `include_end` controls whether the cell holding
    /// `to` is part of the result.
    pub fn raytrace_cells(&self, from: Vec2, to: Vec2, include_end: bool) -> Vec<Cell> {
        let a = self.world_to_cell_unbounded(from);
        let b = self.world_to_cell_unbounded(to);
        let mut cells = bresenham(a, b);
        if !include_end && a != b {
            cells.pop();
        }
        cells.retain(|c| self.contains(*c));
        cells
    }
}

/// Strict Bresenham line between two cells, inclusive of both ends.
///
/// The walk always runs from the lexicographically smaller endpoint, so the
/// cell set is independent of direction.
pub fn bresenham(a: Cell, b: Cell) -> Vec<Cell> {
    let (s, e, flipped) = if (a.ix, a.iy) <= (b.ix, b.iy) {
        (a, b, false)
    } else {
        (b, a, true)
    };
    let dx = (e.ix - s.ix).abs();
    let dy = -(e.iy - s.iy).abs();
    let sx = if s.ix < e.ix { 1 } else { -1 };
    let sy = if s.iy < e.iy { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (s.ix, s.iy);
    let mut out = Vec::with_capacity((dx - dy + 1) as usize);
    loop {
        out.push(Cell::new(x, y));
        if x == e.ix && y == e.iy {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    if flipped {
        out.reverse();
    }
    out
}

/// One-dimensional squared distance transform of a sampled function
/// (lower envelope of parabolas).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut k = 0usize;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let mut started = false;
    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        if !started {
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            started = true;
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            // z[0] is -inf, so this never underflows k
            if s <= z[k] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    if !started {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact Euclidean distance, in cells, from every cell centre to the nearest
/// seed cell centre (infinite when there are no seeds). Squared distances are
/// integers, so the result is exact.
pub fn distance_transform(width: usize, height: usize, seeds: &[bool]) -> Vec<f64> {
    assert_eq!(seeds.len(), width * height);
    let (w, h) = (width, height);
    let mut sq: Vec<f64> = seeds.iter().map(|s| if *s { 0.0 } else { f64::INFINITY }).collect();
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = sq[y * w + x];
        }
        edt_1d(&col, &mut col_out);
        for y in 0..h {
            sq[y * w + x] = col_out[y];
        }
    }
    let mut row_out = vec![0.0; w];
    for y in 0..h {
        edt_1d(&sq[y * w..(y + 1) * w], &mut row_out);
        sq[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    sq.into_iter().map(f64::sqrt).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(w: usize, h: usize, res: f64) -> OccupancyGrid {
        OccupancyGrid::new(w, h, res, Pose2::IDENTITY).unwrap()
    }

    #[test]
    fn world_to_grid_examples() {
        let g = grid(100, 100, 0.05);
        assert_eq!(g.world_to_grid(Vec2::new(0.0, 0.0)), Some(Cell::new(0, 0)));
        assert_eq!(g.world_to_grid(Vec2::new(0.26, 0.11)), Some(Cell::new(5, 2)));
        assert_eq!(g.world_to_grid(Vec2::new(-0.01, 0.0)), None);
        assert_eq!(g.world_to_grid(Vec2::new(5.0, 0.0)), None);
    }

    #[test]
    fn rotated_origin() {
        let g = OccupancyGrid::new(10, 10, 1.0, Pose2::new(1.0, 1.0, std::f64::consts::FRAC_PI_2)).unwrap();
        // local +x is world +y
        assert_eq!(g.world_to_grid(Vec2::new(0.5, 3.5)), Some(Cell::new(2, 0)));
    }

    #[test]
    fn raytrace_examples() {
        let g = grid(10, 10, 1.0);
        let p = Vec2::new(2.5, 2.5);
        assert_eq!(g.raytrace_cells(p, p, true), vec![Cell::new(2, 2)]);
        assert_eq!(g.raytrace_cells(p, p, false), vec![Cell::new(2, 2)]);

        let row = g.raytrace_cells(Vec2::new(0.5, 3.5), Vec2::new(5.5, 3.5), true);
        assert_eq!(row.len(), 6);
        assert!(row.iter().enumerate().all(|(i, c)| *c == Cell::new(i as i64, 3)));
        assert_eq!(g.raytrace_cells(Vec2::new(0.5, 3.5), Vec2::new(5.5, 3.5), false).len(), 5);

        let diag = g.raytrace_cells(Vec2::new(0.5, 0.5), Vec2::new(3.5, 3.5), true);
        assert_eq!(diag, (0..4).map(|i| Cell::new(i, i)).collect::<Vec<_>>());
    }

    #[test]
    fn raytrace_clips() {
        let g = grid(4, 4, 1.0);
        let cells = g.raytrace_cells(Vec2::new(2.5, 0.5), Vec2::new(20.5, 0.5), true);
        assert_eq!(cells, vec![Cell::new(2, 0), Cell::new(3, 0)]);
    }

    #[test]
    fn clamp_and_trinary() {
        let mut g = grid(2, 1, 0.05);
        let c = Cell::new(0, 0);
        assert_eq!(g.trinary(c), Trinary::Unknown);
        for _ in 0..100 {
            g.update(c, 0.85);
        }
        assert_eq!(g.logodds(c), Some(LOGODDS_MAX));
        assert_eq!(g.trinary(c), Trinary::Occupied);
        g.update(Cell::new(1, 0), 0.0);
        // observed at p = 0.5 is still unknown once thresholded
        assert_eq!(g.trinary(Cell::new(1, 0)), Trinary::Unknown);
        assert!(g.is_observed(Cell::new(1, 0)));
        assert!((logistic(LOGODDS_MAX) - 0.99).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn cell_centre_roundtrip(ix in 0i64..40, iy in 0i64..30, ox in -5.0..5.0f64, oy in -5.0..5.0f64, yaw in -3.0..3.0f64) {
            let g = OccupancyGrid::new(40, 30, 0.05, Pose2::new(ox, oy, yaw)).unwrap();
            let c = Cell::new(ix, iy);
            prop_assert_eq!(g.world_to_grid(g.grid_to_world(c)), Some(c));
        }

        #[test]
        fn raytrace_reversal(ax in 0.0..20.0f64, ay in 0.0..20.0f64, bx in 0.0..20.0f64, by in 0.0..20.0f64) {
            let g = grid(20, 20, 1.0);
            let a = Vec2::new(ax, ay);
            let b = Vec2::new(bx, by);
            let mut fwd = g.raytrace_cells(a, b, true);
            let back = g.raytrace_cells(b, a, true);
            fwd.reverse();
            prop_assert_eq!(&fwd, &back);
            prop_assert_eq!(fwd.last().copied(), g.world_to_grid(a));
        }
    }
}
