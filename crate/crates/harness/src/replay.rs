//! Replay stage: the stack localizes and plans on a recorded map while the
//! simulated world differs from it by a perturbation.

use nigelpark_core::grid::OccupancyGrid;

use crate::error::Result;
use crate::nav::{run_loop, LoopInput, Mission, StackConfig, TrialLog, TrialResult};
use crate::scenario::{Perturbation, Scenario, Stage};

pub fn run_replay_stage(
    scenario: &Scenario,
    recorded: &OccupancyGrid,
    perturbation: &Perturbation,
    seed: u64,
) -> Result<(TrialResult, TrialLog)> {
    run_replay_stage_with(scenario, recorded, perturbation, seed, StackConfig::default())
}

pub fn run_replay_stage_with(
    scenario: &Scenario,
    recorded: &OccupancyGrid,
    perturbation: &Perturbation,
    seed: u64,
    config: StackConfig,
) -> Result<(TrialResult, TrialLog)> {
    let mut world = scenario.build_world()?;
    perturbation.apply(&mut world)?;
    let out = run_loop(LoopInput {
        scenario,
        world,
        prior: Some(recorded),
        mission: Mission::Park(scenario.parking_goal),
        seed,
        stage: Stage::Replay,
        tolerances: scenario.tolerances,
        config,
    })?;
    Ok((out.result, out.log))
}
