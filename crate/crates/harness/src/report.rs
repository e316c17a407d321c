//! Verification reports and on-disk trial logs.

use std::fs;
use std::path::{Path, PathBuf};

use nigelpark_core::firmware::{golden_scenario, run_mil, run_sil, stage_equivalence, EquivalenceReport, FirmwareConfig, StageTolerances};
use nigelpark_core::localization::pose_csv;
use nigelpark_core::odometry::odometry_csv;
use nigelpark_core::sim::SensorConfig;
use nigelpark_core::types::VehicleParams;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::nav::{stream_rng, trajectory_csv, FailureCause, TrialLog, TrialResult};
use crate::repeatability::RepeatabilityReport;
use crate::scenario::{Mode, Stage, Tolerances};

/// Bumped on any change to the report layout; matches the shipped schema.
pub const REPORT_SCHEMA_VERSION: &str = "1.0.0";

/// Seconds of the golden setpoint profile run through both firmware stages.
pub const GOLDEN_DURATION: f64 = 10.0;

/// Environment variable overriding the default output directory.
pub const OUT_ENV: &str = "NIGELPARK_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub seed: u64,
    pub goal_reached: bool,
    pub cause: Option<FailureCause>,
    pub final_pose_error: [f64; 3],
    pub collision_count: usize,
    pub time_to_goal: f64,
    pub path_length: f64,
    pub replans: usize,
    pub final_speed: f64,
}

impl From<&TrialResult> for TrialSummary {
    fn from(r: &TrialResult) -> Self {
        TrialSummary {
            seed: r.seed,
            goal_reached: r.goal_reached,
            cause: r.cause,
            final_pose_error: r.final_pose_error,
            collision_count: r.collision_count,
            time_to_goal: r.time_to_goal,
            path_length: r.path_length(),
            replans: r.replans,
            final_speed: r.final_speed,
        }
    }
}

/// Repeatability statistics without the resampled trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilitySummary {
    pub deviations: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl From<&RepeatabilityReport> for RepeatabilitySummary {
    fn from(r: &RepeatabilityReport) -> Self {
        RepeatabilitySummary {
            deviations: r.deviations.clone(),
            mean: r.mean,
            std: r.std,
            max: r.max,
            tolerance: r.tolerance,
            pass: r.pass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checks {
    pub all_goal_reached: bool,
    pub zero_collisions: bool,
    /// `None` when fewer than two trials ran.
    pub repeatability: Option<bool>,
    pub firmware_equivalence: bool,
}

impl Checks {
    /// Overall verdict. Repeatability must pass whenever it was computed.
    pub fn pass(&self) -> bool {
        self.all_goal_reached && self.zero_collisions && self.repeatability.unwrap_or(true) && self.firmware_equivalence
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub scenario: String,
    pub mode: Mode,
    pub stage: Stage,
    pub tolerances: Tolerances,
    pub trials: Vec<TrialSummary>,
    pub repeatability: Option<RepeatabilitySummary>,
    pub firmware: EquivalenceReport,
    /// Mapping tours only: occupied-surface IoU per trial.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub map_iou: Vec<f64>,
    pub checks: Checks,
    pub pass: bool,
}

impl Report {
    pub fn new(
        scenario: &str,
        mode: Mode,
        stage: Stage,
        tolerances: Tolerances,
        trials: &[TrialResult],
        repeatability: Option<&RepeatabilityReport>,
        firmware: EquivalenceReport,
    ) -> Report {
        let checks = Checks {
            all_goal_reached: !trials.is_empty() && trials.iter().all(|t| t.goal_reached),
            zero_collisions: trials.iter().all(|t| t.collision_count == 0),
            repeatability: repeatability.map(|r| r.pass),
            firmware_equivalence: firmware.pass,
        };
        Report {
            schema_version: REPORT_SCHEMA_VERSION.into(),
            scenario: scenario.into(),
            mode,
            stage,
            tolerances,
            trials: trials.iter().map(TrialSummary::from).collect(),
            repeatability: repeatability.map(RepeatabilitySummary::from),
            firmware,
            map_iou: Vec::new(),
            pass: checks.pass(),
            checks,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// MIL and SIL traces of the golden profile and their comparison. The SIL
/// sensor noise is drawn from its own stream of `seed`.
pub struct FirmwareCheck {
    pub mil_csv: String,
    pub sil_csv: String,
    pub report: EquivalenceReport,
}

pub fn firmware_check(params: &VehicleParams, cfg: &FirmwareConfig, sensors: &SensorConfig, seed: u64) -> Result<FirmwareCheck> {
    let profile = golden_scenario();
    let mil = run_mil(&profile, GOLDEN_DURATION, cfg, params);
    let sil = run_sil(&profile, GOLDEN_DURATION, cfg, params, sensors, &mut stream_rng(seed, 3));
    let report = stage_equivalence(&mil, &sil, &StageTolerances::default())?;
    Ok(FirmwareCheck { mil_csv: mil.to_csv(), sil_csv: sil.to_csv(), report })
}

/// `--out` wins over the environment variable, which wins over `out`.
pub fn output_dir(flag: Option<&Path>) -> PathBuf {
    match flag {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from),
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

/// File names written by [`write_trial`].
pub const TRIAL_FILES: [&str; 7] = [
    "result.json",
    "trajectory.csv",
    "poses.csv",
    "odometry.csv",
    "plan.csv",
    "state.csv",
    "diagnostics.json",
];

/// Writes one trial's result and logs into `dir`.
pub fn write_trial(dir: &Path, result: &TrialResult, log: &TrialLog) -> Result<()> {
    let summary = TrialSummary::from(result);
    let contents = [
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
        trajectory_csv(result),
        pose_csv(&log.poses),
        odometry_csv(&log.odometry),
        log.plan_csv(),
        log.state_csv(),
        log.diagnostics_json(),
    ];
    for (name, text) in TRIAL_FILES.iter().zip(contents) {
        write_file(&dir.join(name), &text)?;
    }
    Ok(())
}

pub fn trial_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("trial_{seed}"))
}
