use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nigelpark::mapping_run::{run_mapping, save_mapping};
use nigelpark::plot::plot_log;
use nigelpark::report::{output_dir, trial_dir, write_file, write_trial};
use nigelpark::verify::{run_trial, verify, RunOptions};
use nigelpark::{Result, Scenario, Stage};

#[derive(Parser)]
#[command(name = "nigelpark", version, about = "Autonomous parking stack: simulation, verification and plotting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive the scenario's mapping tour and save the SLAM map.
    Map {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a single parking trial.
    Park {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        stage: StageArgs,
    },
    /// Trials, repeatability, firmware stage equivalence and the report.
    Verify {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        stage: StageArgs,
    },
    /// Verify in the replay stage against a recorded map.
    Replay {
        scenario: PathBuf,
        /// Map YAML or a directory holding map.yaml.
        #[arg(long)]
        map: PathBuf,
        /// Perturbation file applied to the live world.
        #[arg(long)]
        perturb: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Render a trial log as an SVG map overlay.
    Plot {
        /// Trial directory or its trajectory.csv.
        log: PathBuf,
        /// Map to draw underneath; defaults to map.yaml next to the log.
        #[arg(long)]
        map: Option<PathBuf>,
        /// Output file; defaults to trajectory.svg next to the log.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Seed of a single run, or the first of consecutive trial seeds.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory (default: $NIGELPARK_OUT, then ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol_traj: Option<f64>,
    #[arg(long)]
    tol_xy: Option<f64>,
    #[arg(long)]
    tol_yaw: Option<f64>,
}

#[derive(Args)]
struct StageArgs {
    #[arg(long, value_enum)]
    stage: Option<Stage>,
    /// Recorded map replacing the scenario's prior map.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long)]
    perturb: Option<PathBuf>,
}

impl StageArgs {
    fn options(self) -> RunOptions {
        RunOptions { stage: self.stage, map: self.map, perturb: self.perturb, ..RunOptions::default() }
    }
}

impl Common {
    fn load(&self, path: &Path) -> Result<Scenario> {
        let mut s = Scenario::load(path)?;
        if let Some(t) = self.tol_traj {
            s.tolerances.trajectory = t;
        }
        if let Some(t) = self.tol_xy {
            s.tolerances.xy = t;
        }
        if let Some(t) = self.tol_yaw {
            s.tolerances.yaw = t;
        }
        if let Some(n) = self.trials {
            s.trials = n;
        }
        if let Some(first) = self.seed {
            s.seeds = (first..first + s.trials as u64).collect();
        } else if self.trials.is_some() && s.seeds.len() < s.trials {
            s.seeds.clear();
        }
        s.validate()?;
        Ok(s)
    }

    fn out(&self) -> PathBuf {
        output_dir(self.out.as_deref())
    }
}

fn verdict(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Map { scenario, common } => {
            let s = common.load(&scenario)?;
            let seed = s.trial_seeds()[0];
            let out = common.out();
            let m = run_mapping(&s, seed)?;
            save_mapping(&m, &out)?;
            write_trial(&trial_dir(&out, seed), &m.result, &m.log)?;
            println!(
                "{}: tour {} in {:.1} s, map IoU {:.3}, saved to {}",
                s.name,
                if m.completed { "completed" } else { "incomplete" },
                m.result.time_to_goal,
                m.iou,
                out.join("map.yaml").display()
            );
            Ok(verdict(m.completed && m.result.collision_count == 0))
        }
        Command::Park { scenario, common, stage } => {
            let s = common.load(&scenario)?;
            let seed = s.trial_seeds()[0];
            let out = common.out();
            let opts = stage.options();
            let run = run_trial(&s, seed, &opts)?;
            let dir = trial_dir(&out, seed);
            write_trial(&dir, &run.result, &run.log)?;
            if let Some(map) = opts.prior_map(&s)? {
                nigelpark_core::mapping::save_map(&map, &out.join("map.yaml"))?;
            }
            let r = &run.result;
            let e = r.final_pose_error;
            println!(
                "{} seed {seed}: {} in {:.2} s, error ({:.4}, {:.4}, {:.4}), collisions {}, replans {}",
                s.name,
                match r.cause {
                    None => "parked",
                    Some(c) => c.as_str(),
                },
                r.time_to_goal,
                e[0],
                e[1],
                e[2],
                r.collision_count,
                r.replans
            );
            Ok(verdict(r.goal_reached && r.collision_count == 0))
        }
        Command::Verify { scenario, common, stage } => {
            let s = common.load(&scenario)?;
            verify_and_print(&s, &stage.options(), &common.out())
        }
        Command::Replay { scenario, map, perturb, common } => {
            let s = common.load(&scenario)?;
            let opts = RunOptions { stage: Some(Stage::Replay), map: Some(map), perturb, ..RunOptions::default() };
            verify_and_print(&s, &opts, &common.out())
        }
        Command::Plot { log, map, output } => {
            let svg = plot_log(&log, map.as_deref())?;
            let path = output.unwrap_or_else(|| {
                let dir = if log.is_dir() { log.clone() } else { log.parent().map(Path::to_path_buf).unwrap_or_default() };
                dir.join("trajectory.svg")
            });
            write_file(&path, &svg)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn verify_and_print(s: &Scenario, opts: &RunOptions, out: &Path) -> Result<ExitCode> {
    let v = verify(s, opts, out)?;
    let r = &v.report;
    for t in &r.trials {
        let e = t.final_pose_error;
        println!(
            "seed {:>3}: {:<16} t {:6.2} s  error ({:.4}, {:.4}, {:.4})  collisions {}  replans {}",
            t.seed,
            t.cause.map_or("parked", |c| c.as_str()),
            t.time_to_goal,
            e[0],
            e[1],
            e[2],
            t.collision_count,
            t.replans
        );
    }
    if let Some(rep) = &r.repeatability {
        println!(
            "repeatability: mean {:.4} m, std {:.4} m, max {:.4} m (tolerance {:.4})",
            rep.mean, rep.std, rep.max, rep.tolerance
        );
    }
    println!(
        "firmware: steering {:.4} rad, wheel {:.4} rad/s (settled), {}",
        r.firmware.steering.max_settled,
        r.firmware.wheel_rate.max_settled,
        if r.firmware.pass { "pass" } else { "fail" }
    );
    for iou in &r.map_iou {
        println!("map IoU {iou:.3}");
    }
    println!("{}: {} ({})", r.scenario, if r.pass { "PASS" } else { "FAIL" }, out.join("report.json").display());
    Ok(verdict(r.pass))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
