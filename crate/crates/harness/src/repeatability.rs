//! Cross-trial trajectory spread on ground-truth paths.

use nigelpark_core::geometry::Vec2;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::nav::TrialResult;

/// Samples per resampled trajectory.
pub const RESAMPLE_COUNT: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityReport {
    pub scenario: String,
    pub seeds: Vec<u64>,
    /// Arc-length resampled ground-truth path of each trial.
    pub trajectories: Vec<Vec<Vec2>>,
    pub mean_trajectory: Vec<Vec2>,
    /// Max distance of each trial to the mean trajectory.
    pub deviations: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub max: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// `n` points equally spaced in arc length along `path`.
pub fn resample(path: &[Vec2], n: usize) -> Vec<Vec2> {
    assert!(n >= 2, "need at least two samples");
    let Some(&first) = path.first() else {
        return Vec::new();
    };
    let mut cum = Vec::with_capacity(path.len());
    let mut s = 0.0;
    cum.push(0.0);
    for w in path.windows(2) {
        s += (w[1] - w[0]).norm();
        cum.push(s);
    }
    if s == 0.0 {
        return vec![first; n];
    }
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let target = s * i as f64 / (n - 1) as f64;
        while j + 2 < cum.len() && cum[j + 1] < target {
            j += 1;
        }
        let seg = cum[j + 1] - cum[j];
        let u = if seg > 0.0 { ((target - cum[j]) / seg).clamp(0.0, 1.0) } else { 0.0 };
        out.push(path[j] + (path[j + 1] - path[j]) * u);
    }
    out
}

pub fn compute_repeatability(trials: &[TrialResult], tol: f64) -> Result<RepeatabilityReport> {
    if trials.len() < 2 {
        return Err(HarnessError::InvalidArgument(format!("repeatability needs at least 2 trials, got {}", trials.len())));
    }
    let scenario = &trials[0].scenario;
    if let Some(other) = trials.iter().find(|t| &t.scenario != scenario) {
        return Err(HarnessError::InvalidArgument(format!(
            "trials of mixed scenarios: {scenario} and {}",
            other.scenario
        )));
    }
    if let Some(t) = trials.iter().find(|t| t.trajectory.is_empty()) {
        return Err(HarnessError::InvalidArgument(format!("trial with seed {} has no trajectory", t.seed)));
    }
    let trajectories: Vec<Vec<Vec2>> = trials
        .iter()
        .map(|t| {
            let path: Vec<Vec2> = t.trajectory.iter().map(|s| s.truth.translation()).collect();
            resample(&path, RESAMPLE_COUNT)
        })
        .collect();
    let k = trajectories.len() as f64;
    let mean_trajectory: Vec<Vec2> = (0..RESAMPLE_COUNT)
        .map(|i| trajectories.iter().map(|t| t[i]).sum::<Vec2>() / k)
        .collect();
    let deviations: Vec<f64> = trajectories
        .iter()
        .map(|t| t.iter().zip(&mean_trajectory).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
        .collect();
    let mean = deviations.iter().sum::<f64>() / k;
    let std = (deviations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / k).sqrt();
    let max = deviations.iter().copied().fold(0.0, f64::max);
    Ok(RepeatabilityReport {
        scenario: scenario.clone(),
        seeds: trials.iter().map(|t| t.seed).collect(),
        trajectories,
        mean_trajectory,
        deviations,
        mean,
        std,
        max,
        tolerance: tol,
        pass: max <= tol,
    })
}
