//! Built-in world geometry.

use nigelpark_core::geometry::{Pose2, Vec2};
use nigelpark_core::grid::OccupancyGrid;

/// Ground-truth resolution of the shipped worlds (m).
pub const TRUTH_RESOLUTION: f64 = 0.025;

pub const GARAGE_SIZE: (f64, f64) = (5.0, 3.5);

/// Occupied rectangles `(x0, y0, x1, y1)` of the garage: outer walls, a row
/// of perpendicular bays along the bottom and a kerb row along the top.
/// Every edge lies on a multiple of 0.05 m.
pub const GARAGE_RECTS: &[(f64, f64, f64, f64)] = &[
    (0.0, 0.0, 0.1, 3.5),
    (4.9, 0.0, 5.0, 3.5),
    (0.0, 0.0, 5.0, 0.1),
    (0.0, 3.4, 5.0, 3.5),
    (1.05, 0.1, 1.25, 0.45),
    (1.8, 0.1, 2.0, 0.45),
    (2.45, 0.1, 2.65, 0.45),
    (3.2, 0.1, 3.4, 0.45),
    (3.85, 0.1, 4.05, 0.45),
    (0.8, 3.2, 1.15, 3.4),
    (1.5, 3.2, 1.85, 3.4),
    (2.55, 3.2, 2.9, 3.4),
    (3.6, 3.2, 3.95, 3.4),
];

/// Fully observed grid: cells whose centre lies in a rectangle are occupied.
pub fn rect_world(size: (f64, f64), resolution: f64, rects: &[(f64, f64, f64, f64)]) -> OccupancyGrid {
    let w = (size.0 / resolution).round() as usize;
    let h = (size.1 / resolution).round() as usize;
    let mut g = OccupancyGrid::new(w, h, resolution, Pose2::IDENTITY).expect("positive size");
    for c in g.cells().collect::<Vec<_>>() {
        let p: Vec2 = g.grid_to_world(c);
        if rects.iter().any(|&(x0, y0, x1, y1)| p.x > x0 && p.x < x1 && p.y > y0 && p.y < y1) {
            g.set_occupied(c);
        } else {
            g.set_free(c);
        }
    }
    g
}

pub fn garage_map() -> OccupancyGrid {
    rect_world(GARAGE_SIZE, TRUTH_RESOLUTION, GARAGE_RECTS)
}
