//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Matrix3, Vector3};
use nigelpark::mapping_run::{run_mapping, save_mapping, MappingOutput};
use nigelpark::nav::navigate;
use nigelpark::report::{write_trial, TRIAL_FILES};
use nigelpark::verify::{verify, RunOptions, VerifyOutcome};
use nigelpark::{FailureCause, Scenario};
use nigelpark_core::firmware::StageTolerances;
use nigelpark_core::geometry::{angle_diff, ConvexPolygon};
use nigelpark_core::localization::{low_variance_counts, Amcl, AmclConfig, InitMode, LikelihoodField};
use nigelpark_core::mapping::{load_map, save_map};
use nigelpark_core::odometry::{accumulate, align_scans_with_prior, arc_delta, OdometryConfig};
use nigelpark_core::planning::*;
use nigelpark_core::sim::{sample_sensors, simulate_lidar, step_vehicle, LidarConfig, SensorConfig, VehicleState, World, SIM_DT};
use nigelpark_core::{AckermannCommand, Cell, OccupancyGrid, Pose2, Vec2, VehicleParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = std::result::Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(&root().join("scenarios").join(format!("{name}.yaml"))).expect("shipped scenario loads")
}

/// Outputs shared between criteria.
#[derive(Default)]
struct Shared {
    parking: Vec<(VerifyOutcome, f64, PathBuf)>,
    mapping: Option<MappingOutput>,
    map_dir: Option<PathBuf>,
}

// 1 -----------------------------------------------------------------------

fn parking_success(sh: &mut Shared, tmp: &Path) -> Check {
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["park_reverse", "park_parallel"] {
        let s = scenario(name);
        let out = tmp.join(name);
        let t0 = Instant::now();
        let v = verify(&s, &RunOptions::default(), &out).map_err(|e| e.to_string())?;
        // trials overlap in time, so the whole run bounds each one
        let wall = t0.elapsed().as_secs_f64();
        let r = &v.report;
        let reached = r.trials.iter().filter(|t| t.goal_reached && s.tolerances.accepts(t.final_pose_error)).count();
        let collisions: usize = r.trials.iter().map(|t| t.collision_count).sum();
        let worst = r.trials.iter().fold([0.0f64; 3], |m, t| {
            [m[0].max(t.final_pose_error[0]), m[1].max(t.final_pose_error[1]), m[2].max(t.final_pose_error[2])]
        });
        ok &= r.trials.len() == 5 && reached == 5 && collisions == 0 && wall < 60.0;
        lines.push(format!(
            "{name} {reached}/{} worst |dx| {:.4} |dy| {:.4} |dyaw| {:.4}, collisions {collisions}, wall <= {wall:.1} s",
            r.trials.len(),
            worst[0],
            worst[1],
            worst[2]
        ));
        sh.parking.push((v, wall, out));
    }
    ensure(ok, lines.join("; "))
}

// 2 -----------------------------------------------------------------------

fn repeatability(sh: &mut Shared, _: &Path) -> Check {
    if sh.parking.is_empty() {
        return Err("no parking runs".into());
    }
    let mut ok = true;
    let mut lines = Vec::new();
    for (v, _, _) in &sh.parking {
        match &v.repeatability {
            Some(r) => {
                ok &= r.pass && r.max <= 2.5e-2 && r.deviations.len() == 5;
                lines.push(format!("{} mean {:.4} std {:.4} max {:.4} m", r.scenario, r.mean, r.std, r.max));
            }
            None => {
                ok = false;
                lines.push(format!("{}: not computed", v.report.scenario));
            }
        }
    }
    ensure(ok, format!("{} (tol 2.5e-2 m)", lines.join("; ")))
}

// 3 -----------------------------------------------------------------------

fn firmware_equivalence(sh: &mut Shared, _: &Path) -> Check {
    let (_, _, out) = sh.parking.first().ok_or("no verify run")?;
    let text = std::fs::read_to_string(out.join("firmware/equivalence.json")).map_err(|e| e.to_string())?;
    let rep: nigelpark_core::firmware::EquivalenceReport = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let tol = StageTolerances::default();
    let tol_ok = tol.steering == 3e-2 && tol.wheel_rate == 3e-1;
    ensure(
        tol_ok && rep.pass && rep.steering.max_settled <= 3e-2 && rep.wheel_rate.max_settled <= 3e-1,
        format!(
            "steering max {:.4} rad (tol 3e-2), wheel rate max {:.4} rad/s (tol 3e-1) over {} samples",
            rep.steering.max_settled, rep.wheel_rate.max_settled, rep.settled_samples
        ),
    )
}

// 4 -----------------------------------------------------------------------

fn dynamic_obstacles(_: &mut Shared, tmp: &Path) -> Check {
    let s = scenario("park_blocked_path");
    let v = verify(&s, &RunOptions::default(), &tmp.join("blocked")).map_err(|e| e.to_string())?;
    let r = &v.report;
    let reached = r.trials.iter().filter(|t| t.goal_reached).count();
    let collisions: usize = r.trials.iter().map(|t| t.collision_count).sum();
    let replans: Vec<usize> = r.trials.iter().map(|t| t.replans).collect();
    let (neg, _) = navigate(&scenario("park_goal_blocked"), 1).map_err(|e| e.to_string())?;
    ensure(
        reached == 5 && collisions == 0 && replans.iter().all(|&n| n >= 1) && neg.cause == Some(FailureCause::Unreachable),
        format!(
            "blocked path {reached}/5, collisions {collisions}, replans {replans:?}; goal blocked -> {:?} at {:.1} s",
            neg.cause, neg.time_to_goal
        ),
    )
}

// 5 -----------------------------------------------------------------------

fn replay_stage(sh: &mut Shared, tmp: &Path) -> Check {
    let tour = scenario("map_garage");
    let m = run_mapping(&tour, 1).map_err(|e| e.to_string())?;
    let dir = tmp.join("recorded");
    save_mapping(&m, &dir).map_err(|e| e.to_string())?;
    let completed = m.completed;
    sh.mapping = Some(m);
    sh.map_dir = Some(dir.clone());
    if !completed {
        return Err("mapping tour did not complete".into());
    }

    let s = scenario("replay_reverse");
    let pert = s.load_perturbation().map_err(|e| e.to_string())?;
    let shift = pert.shift.iter().map(|x| x.offset.norm()).fold(0.0, f64::max);
    let opts = RunOptions { map: Some(dir), ..RunOptions::default() };
    let v = verify(&s, &opts, &tmp.join("replay")).map_err(|e| e.to_string())?;
    let r = &v.report;
    let reached = r.trials.iter().filter(|t| t.goal_reached).count();
    let collisions: usize = r.trials.iter().map(|t| t.collision_count).sum();
    ensure(
        r.stage == nigelpark::Stage::Replay && (shift - 0.05).abs() < 1e-12 && r.trials.len() == 5 && reached == 5 && collisions == 0,
        format!("SLAM-recorded map, obstacle shifted {shift:.2} m: {reached}/5, collisions {collisions}"),
    )
}

// 6 -----------------------------------------------------------------------

fn sensor_conformance(_: &mut Shared, _: &Path) -> Check {
    let cfg = SensorConfig::default();
    let lidar = cfg.lidar;
    let inc = lidar.angle_increment();
    let fov = inc * lidar.n_beams as f64;
    let world = walled_world();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let scan = simulate_lidar(&world, &Pose2::new(2.0, 1.5, 0.3), &lidar, 0.0, &mut rng);
    let covers = (fov - 2.0 * std::f64::consts::PI).abs() < 1e-12 && scan.ranges.len() == lidar.n_beams;
    let all_hit = scan.ranges.iter().all(|&r| r < lidar.range_max);

    let p = VehicleParams::default();
    let truth = Pose2::new(1.0, 1.0, 0.0);
    let state = VehicleState::at_rest(truth);
    let worst = (0..100_000)
        .map(|_| {
            let f = sample_sensors(&world, &state, &p, &cfg, false, &mut rng);
            (f.ips.x - truth.x).abs().max((f.ips.y - truth.y).abs())
        })
        .fold(0.0, f64::max);
    ensure(
        covers && all_hit && inc.to_degrees() <= 1.0 + 1e-12 && worst <= 5e-2,
        format!(
            "lidar {} beams over {:.1} deg at {:.3} deg, full sweep {covers}, every beam returns {all_hit}; IPS worst axis error {worst:.5} m over 1e5 samples",
            lidar.n_beams,
            fov.to_degrees(),
            inc.to_degrees()
        ),
    )
}

// 7 -----------------------------------------------------------------------

fn free_map(w: usize, h: usize, res: f64, origin: Pose2) -> OccupancyGrid {
    let mut m = OccupancyGrid::new(w, h, res, origin).unwrap();
    for i in 0..m.len() {
        let c = m.cell_of_index(i);
        m.set_free(c);
    }
    m
}

fn random_costmap(rng: &mut ChaCha8Rng) -> Costmap {
    let mut m = free_map(50, 50, 0.05, Pose2::IDENTITY);
    for _ in 0..rng.gen_range(5..40) {
        let (x, y) = (rng.gen_range(0..50), rng.gen_range(0..50));
        let (w, h) = (rng.gen_range(1..6), rng.gen_range(1..6));
        for iy in y..(y + h).min(50) {
            for ix in x..(x + w).min(50) {
                m.set_occupied(Cell::new(ix, iy));
            }
        }
    }
    Costmap::inflate(&m, CostmapParams { inscribed_radius: 0.03, inflation_radius: 0.2, ..CostmapParams::default() })
}

fn dijkstra(cm: &Costmap, gp: &GlobalPlannerParams, s: Cell, g: Cell) -> Option<u64> {
    let mut dist = vec![u64::MAX; cm.base.len()];
    let si = cm.index(s)?;
    dist[si] = 0;
    let mut heap = BinaryHeap::from([Reverse((0u64, si))]);
    while let Some(Reverse((d, i))) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let c = cm.base.cell_of_index(i);
        if c == g {
            return Some(d);
        }
        for (n, w) in neighbors(cm, gp, c) {
            let j = cm.index(n).unwrap();
            if d + w < dist[j] {
                dist[j] = d + w;
                heap.push(Reverse((d + w, j)));
            }
        }
    }
    None
}

fn oracles(_: &mut Shared, _: &Path) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let gp = GlobalPlannerParams::default();
    let (mut astar_ok, mut reachable) = (0, 0);
    for _ in 0..100 {
        let cm = random_costmap(&mut rng);
        let mut free = || loop {
            let c = Cell::new(rng.gen_range(0..50), rng.gen_range(0..50));
            if !cm.is_lethal(c) {
                return c;
            }
        };
        let (s, g) = (free(), free());
        let pose = |c: Cell| {
            let p = cm.base.grid_to_world(c);
            Pose2::new(p.x, p.y, 0.0)
        };
        match (plan_global(&cm, &pose(s), &pose(g), &gp), dijkstra(&cm, &gp, s, g)) {
            (Ok(path), Some(d)) if path.cost == d => {
                astar_ok += 1;
                reachable += 1;
            }
            (Err(PlanError::Unreachable), None) => astar_ok += 1,
            _ => {}
        }
    }

    let mut field_ok = 0;
    for k in 0..20 {
        let mut m = free_map(30, 30, 0.05, Pose2::new(-0.7, 0.4, 0.0));
        let density = [0.003, 0.03, 0.1, 0.3][k % 4];
        for c in m.cells().collect::<Vec<_>>() {
            if rng.gen::<f64>() < density {
                m.set_occupied(c);
            }
        }
        m.set_occupied(Cell::new(rng.gen_range(0..30), rng.gen_range(0..30)));
        let f = LikelihoodField::build(&m, 10.0).map_err(|e| e.to_string())?;
        let occ: Vec<Cell> = m.occupied_cells().collect();
        let exact = m.cells().all(|c| {
            let d2 = occ.iter().map(|o| (o.ix - c.ix).pow(2) + (o.iy - c.iy).pow(2)).min().unwrap();
            f.at(c) == ((d2 as f64).sqrt() * m.resolution).min(10.0)
        });
        field_ok += exact as usize;
    }

    let mut resample_ok = 0;
    for _ in 0..1000 {
        let k = rng.gen_range(1..80);
        let raw: Vec<f64> = (0..k).map(|_| rng.gen::<f64>().powi(3)).collect();
        let s: f64 = raw.iter().sum::<f64>().max(1e-300);
        let w: Vec<f64> = raw.iter().map(|r| r / s).collect();
        let n = rng.gen_range(1..2000);
        let counts = low_variance_counts(&w, n, &mut rng);
        let bounded = counts.iter().zip(&w).all(|(&c, wi)| {
            let e = n as f64 * wi;
            c as f64 >= (e - 1e-9).floor() && c as f64 <= (e + 1e-9).ceil()
        });
        resample_ok += (bounded && counts.iter().sum::<usize>() == n) as usize;
    }
    ensure(
        astar_ok == 100 && reachable > 50 && field_ok == 20 && resample_ok == 1000,
        format!(
            "A* = Dijkstra {astar_ok}/100 ({reachable} reachable); likelihood field = brute force {field_ok}/20; low-variance counts in floor/ceil {resample_ok}/1000"
        ),
    )
}

// 8 -----------------------------------------------------------------------

fn closed_form_arc(p0: &Pose2, v: f64, delta: f64, wheelbase: f64, t: f64) -> Pose2 {
    let omega = v * delta.tan() / wheelbase;
    if omega == 0.0 {
        return p0.compose(&Pose2::new(v * t, 0.0, 0.0));
    }
    let r = v / omega;
    let th = omega * t;
    p0.compose(&Pose2::new(r * th.sin(), r * (1.0 - th.cos()), th))
}

fn random_band(rng: &mut ChaCha8Rng, n: usize) -> ElasticBand {
    let mut poses = vec![Pose2::new(0.0, 0.0, rng.gen_range(-3.0..3.0))];
    for _ in 0..n {
        let last = *poses.last().unwrap();
        poses.push(Pose2::new(last.x + rng.gen_range(-0.3..0.3), last.y + rng.gen_range(-0.3..0.3), rng.gen_range(-3.0..3.0)));
    }
    let dts = (0..n).map(|_| rng.gen_range(0.05..0.5)).collect();
    ElasticBand::new(poses, dts).unwrap()
}

fn numerics(_: &mut Shared, _: &Path) -> Check {
    let p = VehicleParams { wheel_omega_max: 1e3, v_max: 2.0, ..VehicleParams::default() };
    let mut worst_arc = 0.0f64;
    for &v in &[0.2, -0.3, 0.5] {
        for &delta in &[-0.5, -0.2, 0.0, 0.1, 0.45] {
            let start = Pose2::new(0.3, -0.2, 0.7);
            let mut s = VehicleState { v, delta, wheel_omega: v / p.wheel_radius, ..VehicleState::at_rest(start) };
            let cmd = AckermannCommand { steering: delta, wheel_velocity: v / p.wheel_radius };
            let steps = 400;
            for _ in 0..steps {
                s = step_vehicle(&s, &cmd, &p, SIM_DT).unwrap();
            }
            let t = steps as f64 * SIM_DT;
            let exact = closed_form_arc(&start, v, delta, p.wheelbase, t);
            let err = s.pose.distance(&exact).max(angle_diff(s.pose.yaw, exact.yaw).abs());
            worst_arc = worst_arc.max(err / (v.abs() * t));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = TebConfig::default();
    let vp = VehicleParams::default();
    let (mut worst_jac, mut entries) = (0.0f64, 0usize);
    for _ in 0..40 {
        let n = rng.gen_range(1..8);
        let band = random_band(&mut rng, n);
        let obstacles: Vec<Vec2> = (0..15).map(|_| Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let lim = TebLimits::new(&cfg, &vp, rng.gen_range(-0.3..0.3));
        let (r0, j) = jacobian(&band, &obstacles, &cfg.weights, &lim);
        let x0 = variables(&band);
        let h = 1e-6;
        for k in 0..x0.len() {
            let (mut xp, mut xm) = (x0.clone(), x0.clone());
            xp[k] += h;
            xm[k] -= h;
            let (rp, _) = jacobian(&with_variables(&band, &xp), &obstacles, &cfg.weights, &lim);
            let (rm, _) = jacobian(&with_variables(&band, &xm), &obstacles, &cfg.weights, &lim);
            if rp.len() != r0.len() || rm.len() != r0.len() {
                continue;
            }
            for row in 0..r0.len() {
                // hinge switching inside the stencil has no derivative to compare
                if (rp[row] != 0.0) != (r0[row] != 0.0) || (rm[row] != 0.0) != (r0[row] != 0.0) {
                    continue;
                }
                let fd = (rp[row] - rm[row]) / (2.0 * h);
                let an = j[(row, k)];
                worst_jac = worst_jac.max((fd - an).abs() / an.abs().max(fd.abs()).max(1.0));
                entries += 1;
            }
        }
    }

    let mut monotone = 0;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = Pose2::new(0.0, 0.0, rng.gen_range(-0.5..0.5));
        let goal = Pose2::new(rng.gen_range(0.8..1.6), rng.gen_range(-0.4..0.4), rng.gen_range(-0.5..0.5));
        let mut band = ElasticBand::straight(start, goal, 8, 0.3).unwrap();
        for k in 1..band.poses.len() - 1 {
            band.poses[k].x += rng.gen_range(-0.05..0.05);
            band.poses[k].y += rng.gen_range(-0.05..0.05);
        }
        let obstacles: Vec<Vec2> = (0..5).map(|_| Vec2::new(rng.gen_range(0.2..1.4), rng.gen_range(-0.5..0.5))).collect();
        if let Ok((_, diag)) = teb_optimize(&band, &obstacles, &vp, &cfg, 0.0) {
            let ok = diag.accepted > 0 && diag.cost_history.iter().all(|h| h.windows(2).all(|w| w[1] <= w[0]));
            monotone += ok as usize;
        }
    }
    ensure(
        worst_arc <= 1e-6 && worst_jac <= 1e-5 && entries > 1000 && monotone == 20,
        format!(
            "bicycle vs arcs {worst_arc:.2e} /m (tol 1e-6); Jacobian vs central FD {worst_jac:.2e} over {entries} entries (tol 1e-5); TEB objective nonincreasing {monotone}/20"
        ),
    )
}

// 9 -----------------------------------------------------------------------

fn rect(lo: (f64, f64), hi: (f64, f64)) -> ConvexPolygon {
    ConvexPolygon::new(vec![Vec2::new(lo.0, lo.1), Vec2::new(hi.0, lo.1), Vec2::new(hi.0, hi.1), Vec2::new(lo.0, hi.1)]).unwrap()
}

/// 4 m x 3 m walled room with three boxes.
fn walled_world() -> World {
    let mut g = free_map(400, 300, 0.01, Pose2::IDENTITY);
    for (lo, hi) in [
        ((0.0, 0.0), (4.0, 0.125)),
        ((0.0, 2.875), (4.0, 3.0)),
        ((0.0, 0.0), (0.125, 3.0)),
        ((3.875, 0.0), (4.0, 3.0)),
        ((1.225, 0.925), (1.575, 1.275)),
        ((2.625, 1.825), (2.975, 2.075)),
        ((0.625, 2.225), (0.875, 2.875)),
    ] {
        g.fill_polygon(&rect(lo, hi));
    }
    World::new(g, vec![], (Vec2::zeros(), Vec2::new(4.0, 3.0))).unwrap()
}

/// Poses around a rounded rectangle about `step` apart, back to the start.
fn rounded_loop(x0: f64, y0: f64, w: f64, h: f64, radius: f64, step: f64) -> Vec<Pose2> {
    let mut out = vec![Pose2::new(x0, y0, 0.0)];
    let mut pose = out[0];
    for side in 0..4 {
        let len = if side % 2 == 0 { w } else { h } - 2.0 * radius;
        let n = (len / step).round().max(1.0) as usize;
        for _ in 0..n {
            pose = pose.compose(&Pose2::new(len / n as f64, 0.0, 0.0));
            out.push(pose);
        }
        let n = (std::f64::consts::FRAC_PI_2 * radius / step).round().max(1.0) as usize;
        let dpsi = std::f64::consts::FRAC_PI_2 / n as f64;
        let chord = 2.0 * radius * (dpsi / 2.0).sin();
        for _ in 0..n {
            pose = pose.compose(&Pose2::new(chord * (dpsi / 2.0).cos(), chord * (dpsi / 2.0).sin(), dpsi));
            out.push(pose);
        }
    }
    out
}

fn estimation(sh: &mut Shared, _: &Path) -> Check {
    let w = walled_world();
    let lidar = LidarConfig::default();
    let odo = OdometryConfig::default();
    let mut converged = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut truth = Pose2::new(1.0, 1.6, 0.1);
        let cov = Matrix3::from_diagonal(&Vector3::new(0.09, 0.09, 0.04));
        let start = Pose2::new(truth.x + 0.3 * rng.gen_range(-1.0..1.0), truth.y + 0.3 * rng.gen_range(-1.0..1.0), truth.yaw);
        let mut amcl = Amcl::new(&w.static_map, &InitMode::Gaussian { mean: start, cov }, 2000, AmclConfig::default(), &mut rng)
            .map_err(|e| e.to_string())?;
        for _ in 0..30 {
            truth = truth.compose(&Pose2::new(0.03, 0.0, 0.01));
            let scan = simulate_lidar(&w, &truth, &lidar, 0.0, &mut rng);
            // wheel odometry 2% long and slightly under-rotated
            amcl.predict(&arc_delta(0.03 * 1.02, 0.0095, &odo), &mut rng);
            let e = amcl.correct(&scan, &mut rng);
            if e.converged && e.pose.distance(&truth) < 5e-2 && angle_diff(e.pose.yaw, truth.yaw).abs() < 8.73e-2 {
                converged += 1;
                break;
            }
        }
    }

    let iou = sh.mapping.as_ref().map(|m| m.iou);

    let poses = rounded_loop(0.8, 0.6, 2.6, 1.8, 0.3, 0.03);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut est = poses[0];
    let mut length = 0.0;
    let mut prev = simulate_lidar(&w, &poses[0], &lidar, 0.0, &mut rng);
    for pair in poses.windows(2) {
        let step = pair[0].between(&pair[1]);
        length += step.translation().norm();
        let curr = simulate_lidar(&w, &pair[1], &lidar, 0.0, &mut rng);
        let prior = arc_delta(step.translation().norm() * 1.05, step.yaw * 0.9, &odo);
        est = accumulate(&est, &align_scans_with_prior(&prev, &curr, &prior, &odo));
        prev = curr;
    }
    let drift = est.distance(poses.last().unwrap()) / length;

    ensure(
        converged >= 19 && iou.is_some_and(|i| i >= 0.85) && drift < 0.02,
        format!(
            "MCL converged {converged}/20 within 30 updates; SLAM IoU {}; odometry drift {:.3}% of {length:.2} m",
            iou.map_or("n/a".into(), |i| format!("{i:.3}")),
            100.0 * drift
        ),
    )
}

// 10 ----------------------------------------------------------------------

fn trial_bytes(dir: &Path) -> Vec<Vec<u8>> {
    TRIAL_FILES.iter().map(|f| std::fs::read(dir.join(f)).unwrap_or_default()).collect()
}

fn determinism_and_formats(sh: &mut Shared, tmp: &Path) -> Check {
    let s = scenario("park_reverse");
    let mut runs = Vec::new();
    for k in 0..2 {
        let (r, log) = navigate(&s, 7).map_err(|e| e.to_string())?;
        let dir = tmp.join(format!("det_{k}"));
        write_trial(&dir, &r, &log).map_err(|e| e.to_string())?;
        runs.push(trial_bytes(&dir));
    }
    let identical = runs[0] == runs[1] && runs[0].iter().all(|b| !b.is_empty());

    let mut roundtrips = 0;
    let mut maps: Vec<OccupancyGrid> = vec![s.load_prior_map().map_err(|e| e.to_string())?.ok_or("no prior map")?];
    if let Some(dir) = &sh.map_dir {
        maps.push(load_map(&dir.join("map.yaml")).map_err(|e| e.to_string())?);
    }
    if let Some(m) = &sh.mapping {
        maps.push(m.map.clone());
    }
    for (k, m) in maps.iter().enumerate() {
        let p = tmp.join(format!("rt_{k}/map.yaml"));
        std::fs::create_dir_all(p.parent().unwrap()).map_err(|e| e.to_string())?;
        save_map(m, &p).map_err(|e| e.to_string())?;
        let back = load_map(&p).map_err(|e| e.to_string())?;
        let same = back.width == m.width
            && back.height == m.height
            && back.resolution == m.resolution
            && back.origin == m.origin
            && (0..m.len()).all(|i| back.trinary_at(i) == m.trinary_at(i));
        roundtrips += same as usize;
    }

    let schema: Value = serde_json::from_str(&std::fs::read_to_string(root().join("schemas/report.schema.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let compiled = jsonschema::JSONSchema::compile(&schema).map_err(|e| e.to_string())?;
    let mut valid = 0;
    let reports: Vec<&PathBuf> = sh.parking.iter().map(|(_, _, o)| o).collect();
    for out in &reports {
        let text = std::fs::read_to_string(out.join("report.json")).map_err(|e| e.to_string())?;
        let v: Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        valid += compiled.is_valid(&v) as usize;
    }
    ensure(
        identical && roundtrips == maps.len() && valid == reports.len() && !reports.is_empty(),
        format!(
            "seed 7 logs byte-identical: {identical}; map round trips {roundtrips}/{}; reports valid {valid}/{}",
            maps.len(),
            reports.len()
        ),
    )
}

type Criterion = fn(&mut Shared, &Path) -> Check;

fn main() {
    // cargo passes libtest flags; a filter argument that matches nothing skips the suite
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    if filter.as_deref().is_some_and(|f| !"acceptance".contains(f)) {
        return;
    }
    let criteria: [(&str, Criterion); 10] = [
        ("parking success", parking_success),
        ("repeatability", repeatability),
        ("firmware stage equivalence", firmware_equivalence),
        ("dynamic-obstacle robustness", dynamic_obstacles),
        ("replay stage", replay_stage),
        ("sensor conformance", sensor_conformance),
        ("oracle suites", oracles),
        ("numerical suites", numerics),
        ("estimation suites", estimation),
        ("determinism and formats", determinism_and_formats),
    ];
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut shared = Shared::default();
    let mut failed = 0;
    println!("acceptance criteria");
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut shared, tmp.path())))
            .unwrap_or_else(|p| Err(format!("panicked: {}", p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{tag}] {:>2}. {name}: {detail} ({:.1} s)", i + 1, t0.elapsed().as_secs_f64());
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
