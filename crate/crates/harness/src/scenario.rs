//! Scenario, world and perturbation files.
//!
//! Relative paths inside a file are resolved against that file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use nigelpark_core::geometry::{ConvexPolygon, Pose2, Vec2};
use nigelpark_core::grid::OccupancyGrid;
use nigelpark_core::mapping::load_map;
use nigelpark_core::sim::{DynamicObstacle, TimedPose, World, SIM_DT};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Mapping,
    Parking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[default]
    Virtual,
    Replay,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Virtual => "virtual",
            Stage::Replay => "replay",
        }
    }
}

/// Loop rates in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub control: f64,
    pub local_plan: f64,
    pub scan: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates { control: 20.0, local_plan: 10.0, scan: 10.0 }
    }
}

impl Rates {
    /// Simulator ticks per period of a loop running at `hz`.
    pub fn ticks(hz: f64) -> Result<u64> {
        let n = 1.0 / (hz * SIM_DT);
        if !(hz > 0.0) || (n - n.round()).abs() > 1e-6 || n.round() < 1.0 {
            return Err(HarnessError::InvalidScenario(format!(
                "rate {hz} Hz is not a whole number of {SIM_DT} s simulator ticks"
            )));
        }
        Ok(n.round() as u64)
    }
}

/// Final-pose and trajectory tolerances. Bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub xy: f64,
    pub yaw: f64,
    pub trajectory: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { xy: 5e-2, yaw: 8.73e-2, trajectory: 2.5e-2 }
    }
}

impl Tolerances {
    /// `err` is (|Δx|, |Δy|, |Δyaw|).
    pub fn accepts(&self, err: [f64; 3]) -> bool {
        err[0] <= self.xy && err[1] <= self.xy && err[2] <= self.yaw
    }
}

/// Convex obstacle as written in world and scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    /// Body-frame outline.
    pub vertices: Vec<Vec2>,
    pub waypoints: Vec<TimedPose>,
    #[serde(default)]
    pub active_from: Option<f64>,
    #[serde(default)]
    pub active_until: Option<f64>,
}

impl ObstacleSpec {
    pub fn to_obstacle(&self) -> Result<DynamicObstacle> {
        let shape = ConvexPolygon::new(self.vertices.clone())?;
        Ok(DynamicObstacle::new(
            shape,
            self.waypoints.clone(),
            self.active_from.unwrap_or(f64::NEG_INFINITY),
            self.active_until.unwrap_or(f64::INFINITY),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    /// Ground-truth occupancy (map YAML sidecar).
    pub map: PathBuf,
    pub bounds: Bounds,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
}

/// Axis-aligned region of the static map moved by `offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shift {
    pub min: Vec2,
    pub max: Vec2,
    pub offset: Vec2,
}

/// Differences between the recorded map and the world a replay runs in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub shift: Vec<Shift>,
    pub add: Vec<ObstacleSpec>,
}

impl Perturbation {
    pub fn load(path: &Path) -> Result<Perturbation> {
        read_yaml(path)
    }

    pub fn is_empty(&self) -> bool {
        self.shift.is_empty() && self.add.is_empty()
    }

    /// Applies the perturbation to a ground-truth world in place.
    pub fn apply(&self, world: &mut World) -> Result<()> {
        for s in &self.shift {
            let map = &mut world.static_map;
            let mut moved = Vec::new();
            for c in map.cells().collect::<Vec<_>>() {
                let p = map.grid_to_world(c);
                if map.is_occupied(c) && p.x >= s.min.x && p.x <= s.max.x && p.y >= s.min.y && p.y <= s.max.y {
                    moved.push(p + s.offset);
                    map.set_free(c);
                }
            }
            for p in moved {
                if let Some(c) = map.world_to_grid(p) {
                    map.set_occupied(c);
                }
            }
        }
        for a in &self.add {
            world.push_obstacle(a.to_obstacle()?);
        }
        Ok(())
    }
}

fn default_trials() -> usize {
    5
}

fn default_timeout() -> f64 {
    90.0
}

fn default_waypoint_tolerance() -> f64 {
    0.15
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub world: PathBuf,
    pub start: Pose2,
    pub parking_goal: Pose2,
    pub mode: Mode,
    /// Map the stack plans and localizes against.
    #[serde(default)]
    pub prior_map: Option<PathBuf>,
    /// Parking without a prior map builds one first with a mapping run.
    #[serde(default)]
    pub mapping_first: bool,
    /// Waypoints driven in mapping mode.
    #[serde(default)]
    pub tour: Vec<Vec2>,
    #[serde(default = "default_waypoint_tolerance")]
    pub waypoint_tolerance: f64,
    /// Obstacles added on top of the world file's schedule.
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
    /// Trial seeds; `1..=trials` when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub stage: Stage,
    #[serde(default)]
    pub rates: Rates,
    /// Simulated seconds before a trial is abandoned.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Perturbation used by the replay stage.
    #[serde(default)]
    pub perturbation: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn read_yaml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_yaml::from_str(&text).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let mut s: Scenario = read_yaml(path)?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::InvalidScenario(m));
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        if !self.seeds.is_empty() && self.seeds.len() < self.trials {
            return bad(format!("{} seeds listed for {} trials", self.seeds.len(), self.trials));
        }
        if self.mode == Mode::Parking && self.prior_map.is_none() && !self.mapping_first {
            return bad("parking mode needs prior_map or mapping_first".into());
        }
        if self.mode == Mode::Mapping && self.tour.is_empty() {
            return bad("mapping mode needs a tour".into());
        }
        if !(self.timeout > 0.0) {
            return bad("timeout must be positive".into());
        }
        if !self.start.is_finite() || !self.parking_goal.is_finite() {
            return bad("start and goal must be finite".into());
        }
        Rates::ticks(self.rates.control)?;
        Rates::ticks(self.rates.local_plan)?;
        Rates::ticks(self.rates.scan)?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn trial_seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            (1..=self.trials as u64).collect()
        } else {
            self.seeds[..self.trials].to_vec()
        }
    }

    pub fn world_file(&self) -> Result<(WorldFile, PathBuf)> {
        let path = self.resolve(&self.world);
        let wf: WorldFile = read_yaml(&path)?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((wf, dir))
    }

    /// Ground-truth world with the scenario's obstacle overrides added.
    pub fn build_world(&self) -> Result<World> {
        let (wf, dir) = self.world_file()?;
        let map_path = if wf.map.is_absolute() { wf.map.clone() } else { dir.join(&wf.map) };
        let map = load_map(&map_path)?;
        let obstacles = wf
            .obstacles
            .iter()
            .chain(&self.obstacles)
            .map(ObstacleSpec::to_obstacle)
            .collect::<Result<Vec<_>>>()?;
        Ok(World::new(map, obstacles, (wf.bounds.min, wf.bounds.max))?)
    }

    pub fn load_prior_map(&self) -> Result<Option<OccupancyGrid>> {
        match &self.prior_map {
            Some(p) => Ok(Some(load_map(&self.resolve(p))?)),
            None => Ok(None),
        }
    }

    pub fn load_perturbation(&self) -> Result<Perturbation> {
        match &self.perturbation {
            Some(p) => Perturbation::load(&self.resolve(p)),
            None => Ok(Perturbation::default()),
        }
    }
}

/// A fixed rectangular obstacle centred at `(x, y)`, for tests and tools.
pub fn box_obstacle(x: f64, y: f64, length: f64, width: f64, active_from: Option<f64>) -> ObstacleSpec {
    let (hx, hy) = (0.5 * length, 0.5 * width);
    ObstacleSpec {
        vertices: vec![Vec2::new(-hx, -hy), Vec2::new(hx, -hy), Vec2::new(hx, hy), Vec2::new(-hx, hy)],
        waypoints: vec![TimedPose { t: 0.0, pose: Pose2::new(x, y, 0.0) }],
        active_from,
        active_until: None,
    }
}
