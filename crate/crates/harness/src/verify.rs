//! Scenario-level drivers shared by the CLI and the tests: single trials in
//! either stage, and the full verification suite.

use std::path::{Path, PathBuf};

use nigelpark_core::grid::OccupancyGrid;
use nigelpark_core::mapping::{load_map, save_map};

use crate::error::{HarnessError, Result};
use crate::mapping_run::run_mapping_with;
use crate::nav::{navigate_on, StackConfig, TrialLog, TrialResult};
use crate::repeatability::{compute_repeatability, RepeatabilityReport};
use crate::replay::run_replay_stage_with;
use crate::report::{firmware_check, trial_dir, write_file, write_trial, Report};
use crate::scenario::{Mode, Perturbation, Scenario, Stage};

/// Command-line overrides on top of a scenario file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub stage: Option<Stage>,
    /// Recorded map: a map YAML or a directory holding `map.yaml`.
    pub map: Option<PathBuf>,
    pub perturb: Option<PathBuf>,
    pub config: StackConfig,
}

impl RunOptions {
    pub fn stage(&self, scenario: &Scenario) -> Stage {
        self.stage.unwrap_or(scenario.stage)
    }

    /// The map the stack plans and localizes on, if one is given.
    pub fn prior_map(&self, scenario: &Scenario) -> Result<Option<OccupancyGrid>> {
        match &self.map {
            Some(p) => Ok(Some(load_map(&map_yaml(p))?)),
            None => scenario.load_prior_map(),
        }
    }

    pub fn perturbation(&self, scenario: &Scenario) -> Result<Perturbation> {
        match &self.perturb {
            Some(p) => Perturbation::load(p),
            None => scenario.load_perturbation(),
        }
    }
}

/// `dir/map.yaml` for a directory, the path itself otherwise.
pub fn map_yaml(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("map.yaml")
    } else {
        p.to_path_buf()
    }
}

pub struct TrialRun {
    pub result: TrialResult,
    pub log: TrialLog,
    /// Map built by a mapping tour.
    pub built_map: Option<OccupancyGrid>,
    pub map_iou: Option<f64>,
}

pub fn run_trial(scenario: &Scenario, seed: u64, opts: &RunOptions) -> Result<TrialRun> {
    if scenario.mode == Mode::Mapping {
        let out = run_mapping_with(scenario, seed, opts.config)?;
        return Ok(TrialRun { result: out.result, log: out.log, map_iou: Some(out.iou), built_map: Some(out.map) });
    }
    let (result, log) = match opts.stage(scenario) {
        Stage::Virtual => {
            let prior = opts.prior_map(scenario)?;
            navigate_on(scenario, seed, prior, opts.config)?
        }
        Stage::Replay => {
            let recorded = opts.prior_map(scenario)?.ok_or_else(|| {
                HarnessError::InvalidArgument(format!("replay of {} needs a recorded map", scenario.name))
            })?;
            let perturbation = opts.perturbation(scenario)?;
            run_replay_stage_with(scenario, &recorded, &perturbation, seed, opts.config)?
        }
    };
    Ok(TrialRun { result, log, built_map: None, map_iou: None })
}

/// Runs every seed, spreading independent trials over threads. Results come
/// back in seed order.
pub fn run_trials(scenario: &Scenario, seeds: &[u64], opts: &RunOptions) -> Result<Vec<TrialRun>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len()).max(1);
    let chunk = seeds.len().div_ceil(workers).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|&seed| run_trial(scenario, seed, opts)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("trial thread panicked"))
            .collect()
    })
}

pub struct VerifyOutcome {
    pub report: Report,
    pub repeatability: Option<RepeatabilityReport>,
    pub runs: Vec<TrialRun>,
}

/// Trials, repeatability and firmware stage equivalence, with every log and
/// the report written below `out`.
pub fn verify(scenario: &Scenario, opts: &RunOptions, out: &Path) -> Result<VerifyOutcome> {
    let seeds = scenario.trial_seeds();
    let runs = run_trials(scenario, &seeds, opts)?;
    for run in &runs {
        let dir = trial_dir(out, run.result.seed);
        write_trial(&dir, &run.result, &run.log)?;
        if let Some(map) = &run.built_map {
            save_map(map, &dir.join("map.yaml"))?;
        }
    }
    if scenario.mode == Mode::Parking {
        if let Some(map) = opts.prior_map(scenario)? {
            save_map(&map, &out.join("map.yaml"))?;
        }
    }

    let results: Vec<TrialResult> = runs.iter().map(|r| r.result.clone()).collect();
    let repeatability = if results.len() >= 2 {
        let rep = compute_repeatability(&results, scenario.tolerances.trajectory)?;
        write_file(&out.join("repeatability.json"), &serde_json::to_string_pretty(&rep).expect("serializes"))?;
        Some(rep)
    } else {
        None
    };

    let cfg = &opts.config;
    let fw = firmware_check(&cfg.vehicle, &cfg.firmware, &cfg.sensors, seeds[0])?;
    write_file(&out.join("firmware").join("mil.csv"), &fw.mil_csv)?;
    write_file(&out.join("firmware").join("sil.csv"), &fw.sil_csv)?;
    write_file(&out.join("firmware").join("equivalence.json"), &serde_json::to_string_pretty(&fw.report).expect("serializes"))?;

    let mut report = Report::new(
        &scenario.name,
        scenario.mode,
        opts.stage(scenario),
        scenario.tolerances,
        &results,
        repeatability.as_ref(),
        fw.report,
    );
    report.map_iou = runs.iter().filter_map(|r| r.map_iou).collect();
    write_file(&out.join("report.json"), &report.to_json())?;
    Ok(VerifyOutcome { report, repeatability, runs })
}
