#![allow(dead_code)]

use nigelpark_core::geometry::ConvexPolygon;
use nigelpark_core::sim::World;
use nigelpark_core::{OccupancyGrid, Pose2, Vec2};

pub fn rect(lo: (f64, f64), hi: (f64, f64)) -> ConvexPolygon {
    ConvexPolygon::new(vec![
        Vec2::new(lo.0, lo.1),
        Vec2::new(hi.0, lo.1),
        Vec2::new(hi.0, hi.1),
        Vec2::new(lo.0, hi.1),
    ])
    .unwrap()
}

type Block = ((f64, f64), (f64, f64));

/// Free world of the given size on a fine grid with the listed blocks filled.
pub fn world_with(size: (f64, f64), blocks: &[Block]) -> World {
    let res = 0.01;
    let w = (size.0 / res).round() as usize;
    let h = (size.1 / res).round() as usize;
    let mut g = OccupancyGrid::new(w, h, res, Pose2::IDENTITY).unwrap();
    for i in 0..g.len() {
        let c = g.cell_of_index(i);
        g.set_free(c);
    }
    for (lo, hi) in blocks {
        g.fill_polygon(&rect(*lo, *hi));
    }
    World::new(g, vec![], (Vec2::zeros(), Vec2::new(size.0, size.1))).unwrap()
}

/// 4 m x 3 m walled room with a few boxes. Wall surfaces sit at x,y = 0.125 mod 0.05 offsets.
pub fn room() -> World {
    world_with(
        (4.0, 3.0),
        &[
            ((0.0, 0.0), (4.0, 0.125)),
            ((0.0, 2.875), (4.0, 3.0)),
            ((0.0, 0.0), (0.125, 3.0)),
            ((3.875, 0.0), (4.0, 3.0)),
            ((1.225, 0.925), (1.575, 1.275)),
            ((2.625, 1.825), (2.975, 2.075)),
            ((0.625, 2.225), (0.875, 2.875)),
        ],
    )
}

/// Corridor-like world with an L-shaped partition.
pub fn office() -> World {
    world_with(
        (5.0, 4.0),
        &[
            ((0.0, 0.0), (5.0, 0.125)),
            ((0.0, 3.875), (5.0, 4.0)),
            ((0.0, 0.0), (0.125, 4.0)),
            ((4.875, 0.0), (5.0, 4.0)),
            ((2.025, 0.125), (2.175, 2.475)),
            ((2.025, 2.325), (3.475, 2.475)),
            ((3.825, 0.925), (4.275, 1.375)),
        ],
    )
}

/// Poses around a rounded rectangle at `step` metres spacing, returning to the start.
pub fn square_loop(x0: f64, y0: f64, w: f64, h: f64, radius: f64, step: f64) -> Vec<Pose2> {
    use std::f64::consts::FRAC_PI_2;
    let mut out = vec![Pose2::new(x0, y0, 0.0)];
    let mut pose = out[0];
    for side in 0..4 {
        let len = if side % 2 == 0 { w } else { h } - 2.0 * radius;
        let n = (len / step).round().max(1.0) as usize;
        let ds = len / n as f64;
        for _ in 0..n {
            pose = pose.compose(&Pose2::new(ds, 0.0, 0.0));
            out.push(pose);
        }
        let arc = FRAC_PI_2 * radius;
        let n = (arc / step).round().max(1.0) as usize;
        let dpsi = FRAC_PI_2 / n as f64;
        let chord = 2.0 * radius * (dpsi / 2.0).sin();
        for _ in 0..n {
            pose = pose.compose(&Pose2::new(chord * (dpsi / 2.0).cos(), chord * (dpsi / 2.0).sin(), dpsi));
            out.push(pose);
        }
    }
    out
}
