//! Global A* planning on an inflated costmap and timed-elastic-band local
//! trajectory optimisation for a car-like vehicle.

mod astar;
mod costmap;
mod dubins;
mod teb;

pub use astar::{neighbors, octile, plan_global, plan_global_traced, simplify, Expansion, GlobalPath, GlobalPlannerParams, COST_UNIT};
pub use costmap::{Costmap, CostmapParams};
pub use dubins::{DubinsPath, Steer};
pub use teb::{
    check_feasibility, check_feasibility_upto, cost, extract_command, init_band, jacobian, residuals, segment_curvature, teb_optimize,
    variables, with_variables, ElasticBand, Feasibility, Residual, TebConfig, TebDiagnostics, TebLimits, TebWeights, Term, TermCosts,
    Violation, ViolationKind,
};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("start pose is on a lethal or off-map cell")]
    InvalidStart,
    #[error("goal pose is on a lethal or off-map cell")]
    InvalidGoal,
    #[error("goal is unreachable")]
    Unreachable,
    #[error("elastic band has fewer than two poses")]
    DegenerateBand,
    #[error("invalid planner parameters: {0}")]
    InvalidParameters(String),
}
