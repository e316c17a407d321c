use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{Costmap, PlanError};
use crate::geometry::{Pose2, Vec2};
use crate::grid::Cell;

/// Path costs are integers in nanometres so that different search orders
/// produce bit-identical totals.
pub const COST_UNIT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalPlannerParams {
    /// Multiplier on the inflated cell cost in the edge weight.
    pub cost_weight: f64,
}

impl Default for GlobalPlannerParams {
    fn default() -> Self {
        GlobalPlannerParams { cost_weight: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPath {
    pub cells: Vec<Cell>,
    /// Cell-centre polyline with collinear interior points removed.
    pub waypoints: Vec<Vec2>,
    pub cost: u64,
}

impl GlobalPath {
    pub fn cost_m(&self) -> f64 {
        self.cost as f64 * COST_UNIT
    }

    pub fn length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

const MOVES: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

fn straight_units(res: f64) -> u64 {
    (res / COST_UNIT).round() as u64
}

fn diagonal_units(res: f64) -> u64 {
    (res * std::f64::consts::SQRT_2 / COST_UNIT).round() as u64
}

/// Traversable 8-neighbours of `c` with their edge costs. Diagonal moves may
/// not cut the corner of a lethal cell.
pub fn neighbors(cm: &Costmap, params: &GlobalPlannerParams, c: Cell) -> Vec<(Cell, u64)> {
    let res = cm.resolution();
    let mut out = Vec::with_capacity(8);
    for (dx, dy) in MOVES {
        let n = Cell::new(c.ix + dx, c.iy + dy);
        if cm.is_lethal(n) {
            continue;
        }
        let diagonal = dx != 0 && dy != 0;
        if diagonal && (cm.is_lethal(Cell::new(c.ix + dx, c.iy)) || cm.is_lethal(Cell::new(c.ix, c.iy + dy))) {
            continue;
        }
        let base = if diagonal { diagonal_units(res) } else { straight_units(res) };
        let w = 1.0 + params.cost_weight * cm.cost_of(n);
        out.push((n, (base as f64 * w).round() as u64));
    }
    out
}

/// Octile distance in cost units; never exceeds the true remaining cost.
pub fn octile(cm: &Costmap, a: Cell, b: Cell) -> u64 {
    let dx = (a.ix - b.ix).unsigned_abs();
    let dy = (a.iy - b.iy).unsigned_abs();
    let (lo, hi) = (dx.min(dy), dx.max(dy));
    let (s, d) = (straight_units(cm.resolution()), diagonal_units(cm.resolution()));
    (hi - lo) * s + lo * d
}

fn endpoints(cm: &Costmap, start: &Pose2, goal: &Pose2) -> Result<(Cell, Cell), PlanError> {
    let s = cm.base.world_to_grid(start.translation()).filter(|c| !cm.is_lethal(*c)).ok_or(PlanError::InvalidStart)?;
    let g = cm.base.world_to_grid(goal.translation()).filter(|c| !cm.is_lethal(*c)).ok_or(PlanError::InvalidGoal)?;
    Ok((s, g))
}

/// Expansion record kept for instrumented runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expansion {
    pub cell: Cell,
    pub g: u64,
    pub h: u64,
}

pub fn plan_global(cm: &Costmap, start: &Pose2, goal: &Pose2, params: &GlobalPlannerParams) -> Result<GlobalPath, PlanError> {
    plan_global_traced(cm, start, goal, params, &mut |_| {})
}

/// A* over cell centres; `trace` sees every expanded cell.
pub fn plan_global_traced(
    cm: &Costmap,
    start: &Pose2,
    goal: &Pose2,
    params: &GlobalPlannerParams,
    trace: &mut dyn FnMut(Expansion),
) -> Result<GlobalPath, PlanError> {
    let (s, g) = endpoints(cm, start, goal)?;
    let n = cm.base.len();
    let mut best = vec![u64::MAX; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let si = cm.index(s).expect("start inside map");
    let gi = cm.index(g).expect("goal inside map");
    best[si] = 0;
    let mut open = BinaryHeap::new();
    // ties break on smaller g, then index, so expansion order is deterministic
    open.push(Reverse((octile(cm, s, g), 0u64, si)));
    while let Some(Reverse((_, cost, i))) = open.pop() {
        if closed[i] || cost > best[i] {
            continue;
        }
        closed[i] = true;
        let c = cm.base.cell_of_index(i);
        trace(Expansion { cell: c, g: cost, h: octile(cm, c, g) });
        if i == gi {
            break;
        }
        for (nc, w) in neighbors(cm, params, c) {
            let j = cm.index(nc).expect("neighbours are on the map");
            let nd = cost + w;
            if nd < best[j] {
                best[j] = nd;
                parent[j] = i;
                open.push(Reverse((nd + octile(cm, nc, g), nd, j)));
            }
        }
    }
    if best[gi] == u64::MAX {
        return Err(PlanError::Unreachable);
    }
    let mut cells = vec![g];
    let mut i = gi;
    while i != si {
        i = parent[i];
        cells.push(cm.base.cell_of_index(i));
    }
    cells.reverse();
    let waypoints = simplify(&cells).into_iter().map(|c| cm.base.grid_to_world(c)).collect();
    Ok(GlobalPath { cells, waypoints, cost: best[gi] })
}

/// Drops interior cells where the step direction does not change.
pub fn simplify(cells: &[Cell]) -> Vec<Cell> {
    if cells.len() <= 2 {
        return cells.to_vec();
    }
    let mut out = vec![cells[0]];
    for w in cells.windows(3) {
        let d1 = (w[1].ix - w[0].ix, w[1].iy - w[0].iy);
        let d2 = (w[2].ix - w[1].ix, w[2].iy - w[1].iy);
        if d1 != d2 {
            out.push(w[1]);
        }
    }
    out.push(*cells.last().expect("nonempty"));
    out
}
