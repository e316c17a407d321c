//! Mapping runs: drive the scenario's tour on odometry + SLAM alone.

use std::fs;
use std::path::Path;

use nigelpark_core::grid::OccupancyGrid;
use nigelpark_core::localization::pose_csv;
use nigelpark_core::mapping::{occupancy_iou, save_map};

use crate::error::{HarnessError, Result};
use crate::nav::{run_loop, LoopInput, Mission, StackConfig, TrialLog, TrialResult};
use crate::scenario::{Scenario, Stage, Tolerances};

pub struct MappingOutput {
    pub map: OccupancyGrid,
    pub result: TrialResult,
    pub log: TrialLog,
    /// The whole tour was driven.
    pub completed: bool,
    /// Occupied-surface IoU against the ground-truth static map.
    pub iou: f64,
}

pub fn run_mapping(scenario: &Scenario, seed: u64) -> Result<MappingOutput> {
    run_mapping_with(scenario, seed, StackConfig::default())
}

pub fn run_mapping_with(scenario: &Scenario, seed: u64, config: StackConfig) -> Result<MappingOutput> {
    if scenario.tour.is_empty() {
        return Err(HarnessError::InvalidScenario(format!("scenario {} has no mapping tour", scenario.name)));
    }
    let world = scenario.build_world()?;
    let truth = world.static_map.clone();
    let tolerances = Tolerances {
        xy: scenario.waypoint_tolerance,
        yaw: std::f64::consts::PI,
        ..scenario.tolerances
    };
    let out = run_loop(LoopInput {
        scenario,
        world,
        prior: None,
        mission: Mission::Tour { waypoints: scenario.tour.clone(), tolerance: scenario.waypoint_tolerance },
        seed,
        stage: Stage::Virtual,
        tolerances,
        config,
    })?;
    let slam = out.slam.ok_or_else(|| {
        HarnessError::InvalidArgument(format!(
            "mapping tour failed: {}",
            out.result.cause.map_or("unknown", |c| c.as_str())
        ))
    })?;
    let map = slam.map().clone();
    let iou = occupancy_iou(&map, &truth);
    Ok(MappingOutput {
        completed: out.result.cause.is_none(),
        map,
        result: out.result,
        log: out.log,
        iou,
    })
}

/// Writes `map.yaml` + `map.pgm` and the SLAM pose log into `dir`.
pub fn save_mapping(out: &MappingOutput, dir: &Path) -> Result<()> {
    save_map(&out.map, &dir.join("map.yaml"))?;
    let p = dir.join("slam_poses.csv");
    fs::write(&p, pose_csv(&out.log.poses)).map_err(|e| HarnessError::io(&p, e))?;
    Ok(())
}
