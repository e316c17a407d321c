use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Costmap, PlanError};
use crate::geometry::{angle_diff, wrap, Pose2, Vec2};
use crate::types::{AckermannCommand, Footprint, VehicleParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TebWeights {
    pub w_time: f64,
    pub w_vel: f64,
    pub w_acc: f64,
    pub w_kin: f64,
    pub w_turn: f64,
    pub w_obs: f64,
    /// Clearance margin added to the safety distance (m).
    pub epsilon: f64,
}

impl Default for TebWeights {
    fn default() -> Self {
        TebWeights {
            w_time: 1.0,
            w_vel: 2.0,
            w_acc: 1.0,
            w_kin: 1000.0,
            w_turn: 50.0,
            w_obs: 50.0,
            epsilon: 0.02,
        }
    }
}

impl TebWeights {
    pub fn validate(&self) -> Result<(), PlanError> {
        let all = [self.w_time, self.w_vel, self.w_acc, self.w_kin, self.w_turn, self.w_obs];
        if all.iter().any(|w| !(*w >= 0.0)) || !all.iter().any(|w| *w > 0.0) || !(self.epsilon >= 0.0) {
            return Err(PlanError::InvalidParameters("weights must be nonnegative with at least one positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TebConfig {
    pub weights: TebWeights,
    pub dt_min: f64,
    pub dt_max: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// Centre-of-footprint clearance; `None` means half the footprint diagonal.
    pub d_safe: Option<f64>,
    /// Waypoint spacing when a band is built from a global path (m).
    pub spacing: f64,
    /// Speed limit used by the planner; `None` means the vehicle limit.
    pub v_max: Option<f64>,
    pub a_max: Option<f64>,
    /// The turning penalty starts this fraction below the curvature limit.
    pub turn_margin: f64,
    /// Obstacle points further than this from the vehicle are ignored (m).
    pub obstacle_window: f64,
}

impl Default for TebConfig {
    fn default() -> Self {
        TebConfig {
            weights: TebWeights::default(),
            dt_min: 0.1,
            dt_max: 0.4,
            outer_iterations: 4,
            inner_iterations: 8,
            d_safe: None,
            spacing: 0.15,
            v_max: None,
            a_max: None,
            turn_margin: 0.05,
            obstacle_window: 1.5,
        }
    }
}

/// Resolved numeric limits for one optimisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TebLimits {
    pub v_max: f64,
    pub a_max: f64,
    pub kappa_max: f64,
    pub d_safe: f64,
    /// Distance from the reference point forward to the footprint centre.
    pub centre_offset: f64,
    /// Velocity the band must start from (current vehicle speed, signed).
    pub v_start: f64,
}

impl TebLimits {
    pub fn new(cfg: &TebConfig, params: &VehicleParams, v_start: f64) -> Self {
        let fp = &params.footprint;
        TebLimits {
            v_max: cfg.v_max.unwrap_or(params.v_max),
            a_max: cfg.a_max.unwrap_or(params.a_max),
            kappa_max: params.max_curvature() * (1.0 - cfg.turn_margin),
            d_safe: cfg.d_safe.unwrap_or(0.5 * fp.diagonal()),
            centre_offset: fp.length / 2.0 - fp.rear_overhang,
            v_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticBand {
    pub poses: Vec<Pose2>,
    pub dts: Vec<f64>,
}

impl ElasticBand {
    pub fn new(poses: Vec<Pose2>, dts: Vec<f64>) -> Result<Self, PlanError> {
        if poses.len() < 2 || dts.len() + 1 != poses.len() {
            return Err(PlanError::DegenerateBand);
        }
        if dts.iter().any(|t| !(*t > 0.0 && t.is_finite())) || poses.iter().any(|p| !p.is_finite()) {
            return Err(PlanError::InvalidParameters("band needs finite poses and positive time steps".into()));
        }
        Ok(ElasticBand { poses, dts })
    }

    pub fn segments(&self) -> usize {
        self.dts.len()
    }

    pub fn start(&self) -> Pose2 {
        self.poses[0]
    }

    pub fn goal(&self) -> Pose2 {
        *self.poses.last().expect("band has poses")
    }

    pub fn duration(&self) -> f64 {
        self.dts.iter().sum()
    }

    pub fn length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].distance(&w[1])).sum()
    }

    /// Signed velocity of segment `i`: negative when moving against the heading.
    pub fn velocity(&self, i: usize) -> f64 {
        let (a, b) = (self.poses[i], self.poses[i + 1]);
        let d = b.translation() - a.translation();
        direction(&a, d) * d.norm() / self.dts[i]
    }

    /// Straight-line band from `start` to `goal` with `n` segments.
    pub fn straight(start: Pose2, goal: Pose2, n: usize, dt: f64) -> Result<Self, PlanError> {
        let n = n.max(1);
        let poses = (0..=n)
            .map(|k| {
                let t = k as f64 / n as f64;
                Pose2::new(
                    start.x + t * (goal.x - start.x),
                    start.y + t * (goal.y - start.y),
                    start.yaw + t * angle_diff(goal.yaw, start.yaw),
                )
            })
            .collect();
        ElasticBand::new(poses, vec![dt; n])
    }

    /// Inserts midpoints where a step is too long and merges steps that are
    /// too short, keeping both endpoints.
    /// +1 when segment `i` is driven forward, -1 in reverse.
    pub fn direction(&self, i: usize) -> f64 {
        direction(&self.poses[i], self.poses[i + 1].translation() - self.poses[i].translation())
    }

    pub fn autoresize(&mut self, dt_min: f64, dt_max: f64) {
        for _ in 0..100 {
            let mut changed = false;
            let mut i = 0;
            while i < self.dts.len() {
                if self.dts[i] > dt_max {
                    let (a, b) = (self.poses[i], self.poses[i + 1]);
                    let mid = Pose2::new((a.x + b.x) / 2.0, (a.y + b.y) / 2.0, a.yaw + angle_diff(b.yaw, a.yaw) / 2.0);
                    let half = self.dts[i] / 2.0;
                    self.poses.insert(i + 1, mid);
                    self.dts[i] = half;
                    self.dts.insert(i + 1, half);
                    changed = true;
                    i += 2;
                } else if self.dts[i] < dt_min && self.dts.len() > 1 {
                    // drop an interior pose next to the short step
                    let drop = if i + 1 < self.poses.len() - 1 { i + 1 } else { i };
                    let merged = self.dts[drop - 1] + self.dts[drop];
                    self.poses.remove(drop);
                    self.dts.remove(drop);
                    self.dts[drop - 1] = merged;
                    changed = true;
                } else {
                    i += 1;
                }
            }
            if !changed {
                break;
            }
        }
        if self.dts.len() == 1 && self.dts[0] < dt_min {
            self.dts[0] = dt_min;
        }
    }
}

fn direction(pose: &Pose2, d: Vec2) -> f64 {
    if d.x * pose.yaw.cos() + d.y * pose.yaw.sin() >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Chord curvature of the arc joining `a` to `b`.
pub fn segment_curvature(a: &Pose2, b: &Pose2) -> f64 {
    let l = a.distance(b);
    if l < 1e-9 {
        return 0.0;
    }
    2.0 * (angle_diff(b.yaw, a.yaw) / 2.0).sin() / l
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Time,
    Velocity,
    Acceleration,
    Kinematics,
    Turning,
    Obstacle,
}

/// One residual with its sparse gradient over the optimisation variables.
#[derive(Debug, Clone)]
pub struct Residual {
    pub term: Term,
    pub value: f64,
    pub grad: Vec<(usize, f64)>,
}

/// Variable layout: interior poses (x, y, yaw) first, then every time step.
#[derive(Debug, Clone, Copy)]
struct Layout {
    n: usize,
}

impl Layout {
    fn pose(&self, i: usize, k: usize) -> Option<usize> {
        (i >= 1 && i < self.n).then(|| 3 * (i - 1) + k)
    }

    fn dt(&self, i: usize) -> usize {
        3 * (self.n - 1) + i
    }

    fn size(&self) -> usize {
        3 * (self.n - 1) + self.n
    }
}

struct Builder {
    out: Vec<Residual>,
}

impl Builder {
    fn push(&mut self, term: Term, weight: f64, value: f64, grad: Vec<(Option<usize>, f64)>) {
        let s = weight.sqrt();
        self.out.push(Residual {
            term,
            value: s * value,
            grad: grad.into_iter().filter_map(|(i, g)| i.map(|i| (i, s * g))).collect(),
        });
    }
}

fn nearest(points: &[Vec2], p: Vec2) -> Option<Vec2> {
    points.iter().copied().min_by(|a, b| (a - p).norm_squared().total_cmp(&(b - p).norm_squared()))
}

/// All residuals of the band objective with analytic gradients.
pub fn residuals(band: &ElasticBand, obstacles: &[Vec2], w: &TebWeights, lim: &TebLimits) -> Vec<Residual> {
    let n = band.segments();
    let lay = Layout { n };
    let mut b = Builder { out: Vec::new() };
    let p = &band.poses;
    let px = |i: usize| lay.pose(i, 0);
    let py = |i: usize| lay.pose(i, 1);
    let pt = |i: usize| lay.pose(i, 2);

    for i in 0..n {
        b.push(Term::Time, w.w_time, band.dts[i], vec![(Some(lay.dt(i)), 1.0)]);
    }

    // per-segment signed velocity and its gradient
    struct Vel {
        v: f64,
        grad: Vec<(Option<usize>, f64)>,
    }
    let mut vels = Vec::with_capacity(n);
    for i in 0..n {
        let d = p[i + 1].translation() - p[i].translation();
        let l = d.norm();
        let dt = band.dts[i];
        let s = direction(&p[i], d);
        let mut grad = vec![(Some(lay.dt(i)), -s * l / (dt * dt))];
        if l > 1e-12 {
            let u = d / l * (s / dt);
            grad.extend([(px(i + 1), u.x), (py(i + 1), u.y), (px(i), -u.x), (py(i), -u.y)]);
        }
        vels.push(Vel { v: s * l / dt, grad });

        // speed limit
        let over = l / dt - lim.v_max;
        if over > 0.0 {
            let g: Vec<_> = vels[i].grad.iter().map(|(k, g)| (*k, s * g)).collect();
            b.push(Term::Velocity, w.w_vel, over, g);
        } else {
            b.push(Term::Velocity, w.w_vel, 0.0, vec![]);
        }

        // equal-turning-arc condition
        let (si, ci) = p[i].yaw.sin_cos();
        let (sj, cj) = p[i + 1].yaw.sin_cos();
        let e = (ci + cj) * d.y - (si + sj) * d.x;
        b.push(
            Term::Kinematics,
            w.w_kin,
            e,
            vec![
                (px(i + 1), -(si + sj)),
                (px(i), si + sj),
                (py(i + 1), ci + cj),
                (py(i), -(ci + cj)),
                (pt(i), -si * d.y - ci * d.x),
                (pt(i + 1), -sj * d.y - cj * d.x),
            ],
        );

        // curvature limit
        if l > 1e-9 {
            let dth = angle_diff(p[i + 1].yaw, p[i].yaw);
            let kappa = 2.0 * (dth / 2.0).sin() / l;
            let over = kappa.abs() - lim.kappa_max;
            if over > 0.0 {
                let sg = kappa.signum();
                let dk_dth = (dth / 2.0).cos() / l;
                let dk_dl = -kappa / l;
                let u = d / l;
                b.push(
                    Term::Turning,
                    w.w_turn,
                    over,
                    vec![
                        (pt(i + 1), sg * dk_dth),
                        (pt(i), -sg * dk_dth),
                        (px(i + 1), sg * dk_dl * u.x),
                        (py(i + 1), sg * dk_dl * u.y),
                        (px(i), -sg * dk_dl * u.x),
                        (py(i), -sg * dk_dl * u.y),
                    ],
                );
            } else {
                b.push(Term::Turning, w.w_turn, 0.0, vec![]);
            }
        }
    }

    // accelerations, including the boundary conditions v(0) = v_start and v(end) = 0
    let accel = |b: &mut Builder, a_num: f64, dv_grad: Vec<(Option<usize>, f64)>, t: f64, t_grad: Vec<(Option<usize>, f64)>| {
        let a = a_num / t;
        let over = a.abs() - lim.a_max;
        if over > 0.0 {
            let sg = a.signum();
            let mut g: Vec<(Option<usize>, f64)> = dv_grad.into_iter().map(|(k, g)| (k, sg * g / t)).collect();
            g.extend(t_grad.into_iter().map(|(k, g)| (k, -sg * a_num / (t * t) * g)));
            b.push(Term::Acceleration, w.w_acc, over, g);
        } else {
            b.push(Term::Acceleration, w.w_acc, 0.0, vec![]);
        }
    };
    {
        let g = vels[0].grad.clone();
        accel(&mut b, vels[0].v - lim.v_start, g, band.dts[0], vec![(Some(lay.dt(0)), 1.0)]);
    }
    for i in 0..n.saturating_sub(1) {
        let mut g: Vec<_> = vels[i + 1].grad.clone();
        g.extend(vels[i].grad.iter().map(|(k, v)| (*k, -v)));
        let t = 0.5 * (band.dts[i] + band.dts[i + 1]);
        accel(&mut b, vels[i + 1].v - vels[i].v, g, t, vec![(Some(lay.dt(i)), 0.5), (Some(lay.dt(i + 1)), 0.5)]);
    }
    {
        let g: Vec<_> = vels[n - 1].grad.iter().map(|(k, v)| (*k, -v)).collect();
        accel(&mut b, -vels[n - 1].v, g, band.dts[n - 1], vec![(Some(lay.dt(n - 1)), 1.0)]);
    }

    // clearance of the footprint centre for every free pose
    for (i, pose) in p.iter().enumerate().take(n).skip(1) {
        let (s, c) = pose.yaw.sin_cos();
        let centre = pose.translation() + lim.centre_offset * Vec2::new(c, s);
        let Some(o) = nearest(obstacles, centre) else {
            continue;
        };
        let diff = centre - o;
        let dist = diff.norm();
        let over = lim.d_safe + w.epsilon - dist;
        if over > 0.0 && dist > 1e-12 {
            let u = diff / dist;
            let dtheta = lim.centre_offset * (u.x * -s + u.y * c);
            b.push(Term::Obstacle, w.w_obs, over, vec![(px(i), -u.x), (py(i), -u.y), (pt(i), -dtheta)]);
        } else {
            b.push(Term::Obstacle, w.w_obs, 0.0, vec![]);
        }
    }
    b.out
}

pub fn cost(band: &ElasticBand, obstacles: &[Vec2], w: &TebWeights, lim: &TebLimits) -> f64 {
    residuals(band, obstacles, w, lim).iter().map(|r| r.value * r.value).sum()
}

/// Per-term objective contributions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TermCosts {
    pub time: f64,
    pub velocity: f64,
    pub acceleration: f64,
    pub kinematics: f64,
    pub turning: f64,
    pub obstacle: f64,
}

impl TermCosts {
    pub fn of(res: &[Residual]) -> Self {
        let mut t = TermCosts::default();
        for r in res {
            let v = r.value * r.value;
            match r.term {
                Term::Time => t.time += v,
                Term::Velocity => t.velocity += v,
                Term::Acceleration => t.acceleration += v,
                Term::Kinematics => t.kinematics += v,
                Term::Turning => t.turning += v,
                Term::Obstacle => t.obstacle += v,
            }
        }
        t
    }

    pub fn total(&self) -> f64 {
        self.time + self.velocity + self.acceleration + self.kinematics + self.turning + self.obstacle
    }
}

/// Dense residual vector and Jacobian, for inspection and tests.
pub fn jacobian(band: &ElasticBand, obstacles: &[Vec2], w: &TebWeights, lim: &TebLimits) -> (DVector<f64>, DMatrix<f64>) {
    let res = residuals(band, obstacles, w, lim);
    let m = Layout { n: band.segments() }.size();
    let mut r = DVector::zeros(res.len());
    let mut j = DMatrix::zeros(res.len(), m);
    for (k, e) in res.iter().enumerate() {
        r[k] = e.value;
        for (i, g) in &e.grad {
            j[(k, *i)] += g;
        }
    }
    (r, j)
}

/// Gauss–Newton system JᵀJ, Jᵀr accumulated from the sparse gradients.
fn normal_equations(res: &[Residual], m: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut h = DMatrix::zeros(m, m);
    let mut g = DVector::zeros(m);
    for e in res {
        for (a, ga) in &e.grad {
            g[*a] += ga * e.value;
            for (b, gb) in &e.grad {
                h[(*a, *b)] += ga * gb;
            }
        }
    }
    (h, g)
}

/// Flattened optimisation variables of `band`.
pub fn variables(band: &ElasticBand) -> DVector<f64> {
    let n = band.segments();
    let lay = Layout { n };
    let mut x = DVector::zeros(lay.size());
    for i in 1..n {
        x[3 * (i - 1)] = band.poses[i].x;
        x[3 * (i - 1) + 1] = band.poses[i].y;
        x[3 * (i - 1) + 2] = band.poses[i].yaw;
    }
    for i in 0..n {
        x[lay.dt(i)] = band.dts[i];
    }
    x
}

/// Band with the variables replaced by `x` (yaw left unwrapped).
pub fn with_variables(band: &ElasticBand, x: &DVector<f64>) -> ElasticBand {
    let n = band.segments();
    let lay = Layout { n };
    let mut out = band.clone();
    for i in 1..n {
        out.poses[i] = Pose2 { x: x[3 * (i - 1)], y: x[3 * (i - 1) + 1], yaw: x[3 * (i - 1) + 2] };
    }
    for i in 0..n {
        out.dts[i] = x[lay.dt(i)];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TebDiagnostics {
    pub initial: TermCosts,
    pub terms: TermCosts,
    pub iterations: usize,
    pub accepted: usize,
    /// Objective per outer loop: the value after autoresize, then one entry
    /// per accepted step.
    pub cost_history: Vec<Vec<f64>>,
    pub kinematics_max: f64,
    pub velocity_ok: bool,
    pub curvature_ok: bool,
}

/// Levenberg–Marquardt over the band with autoresize between outer loops.
pub fn teb_optimize(
    band: &ElasticBand,
    obstacles: &[Vec2],
    params: &VehicleParams,
    cfg: &TebConfig,
    v_start: f64,
) -> Result<(ElasticBand, TebDiagnostics), PlanError> {
    cfg.weights.validate()?;
    let lim = TebLimits::new(cfg, params, v_start);
    let w = &cfg.weights;
    let mut band = band.clone();
    if band.poses.len() < 2 {
        return Err(PlanError::DegenerateBand);
    }
    let initial = TermCosts::of(&residuals(&band, obstacles, w, &lim));
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut accepted = 0;
    for _ in 0..cfg.outer_iterations {
        band.autoresize(cfg.dt_min, cfg.dt_max);
        if band.poses.len() < 2 {
            return Err(PlanError::DegenerateBand);
        }
        let mut current = cost(&band, obstacles, w, &lim);
        history.push(vec![current]);
        let mut lambda = 1e-3;
        let mut system = None;
        for _ in 0..cfg.inner_iterations {
            iterations += 1;
            let (h0, g) = system.get_or_insert_with(|| {
                normal_equations(&residuals(&band, obstacles, w, &lim), Layout { n: band.segments() }.size())
            });
            let g = g.clone();
            let mut h = h0.clone();
            for k in 0..h.nrows() {
                h[(k, k)] += lambda * h[(k, k)].max(1e-6);
            }
            let Some(chol) = h.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let step = chol.solve(&(-g));
            let mut x = variables(&band) + &step;
            let n = band.segments();
            for i in 0..n {
                let k = Layout { n }.dt(i);
                x[k] = x[k].max(1e-3);
            }
            let mut trial = with_variables(&band, &x);
            for p in trial.poses.iter_mut() {
                p.yaw = wrap(p.yaw);
            }
            let c = cost(&trial, obstacles, w, &lim);
            if c <= current && c.is_finite() {
                band = trial;
                current = c;
                system = None;
                history.last_mut().expect("pushed above").push(c);
                accepted += 1;
                lambda = (lambda / 10.0).max(1e-9);
                if step.norm() < 1e-9 {
                    break;
                }
            } else {
                lambda *= 10.0;
            }
        }
    }
    let res = residuals(&band, obstacles, w, &lim);
    let terms = TermCosts::of(&res);
    let kinematics_max = res
        .iter()
        .filter(|r| r.term == Term::Kinematics)
        .map(|r| r.value.abs() / w.w_kin.sqrt().max(1e-300))
        .fold(0.0, f64::max);
    let velocity_ok = (0..band.segments()).all(|i| band.velocity(i).abs() <= lim.v_max * (1.0 + 1e-6));
    let kappa_limit = params.max_curvature();
    let curvature_ok = band.poses.windows(2).all(|p| segment_curvature(&p[0], &p[1]).abs() <= kappa_limit);
    Ok((
        band,
        TebDiagnostics {
            initial,
            terms,
            iterations,
            accepted,
            cost_history: history,
            kinematics_max,
            velocity_ok,
            curvature_ok,
        },
    ))
}

/// Builds a band along a global path. The whole band is driven in reverse
/// when the goal heading opposes the final approach direction.
pub fn init_band(waypoints: &[Vec2], start: &Pose2, goal: &Pose2, params: &VehicleParams, cfg: &TebConfig) -> Result<ElasticBand, PlanError> {
    let mut pts: Vec<Vec2> = Vec::with_capacity(waypoints.len() + 2);
    pts.push(start.translation());
    if waypoints.len() > 2 {
        pts.extend_from_slice(&waypoints[1..waypoints.len() - 1]);
    }
    pts.push(goal.translation());
    pts.dedup_by(|a, b| (*a - *b).norm() < 1e-9);
    let v_ref = 0.5 * cfg.v_max.unwrap_or(params.v_max);
    if pts.len() < 2 {
        // already there: a single short segment that only rotates in place
        return ElasticBand::new(vec![*start, *goal], vec![cfg.dt_min]);
    }
    let approach = pts[pts.len() - 1] - pts[pts.len() - 2];
    let approach_yaw = approach.y.atan2(approach.x);
    let reverse = angle_diff(goal.yaw, approach_yaw).abs() > std::f64::consts::FRAC_PI_2;

    // resample at fixed arc length
    let mut samples = vec![pts[0]];
    let mut carry = 0.0;
    for seg in pts.windows(2) {
        let d = seg[1] - seg[0];
        let len = d.norm();
        let mut s = cfg.spacing - carry;
        while s < len - 1e-9 {
            samples.push(seg[0] + d * (s / len));
            s += cfg.spacing;
        }
        carry = len - (s - cfg.spacing);
    }
    let last = *pts.last().expect("nonempty");
    if (samples.last().expect("nonempty") - last).norm() < 0.5 * cfg.spacing && samples.len() > 1 {
        samples.pop();
    }
    samples.push(last);

    let m = samples.len();
    let mut poses = Vec::with_capacity(m);
    for k in 0..m {
        let yaw = if k == 0 {
            start.yaw
        } else if k == m - 1 {
            goal.yaw
        } else {
            let d = samples[k + 1] - samples[k - 1];
            let t = d.y.atan2(d.x);
            if reverse {
                wrap(t + std::f64::consts::PI)
            } else {
                t
            }
        };
        poses.push(Pose2::new(samples[k].x, samples[k].y, yaw));
    }
    let dts = poses.windows(2).map(|w| (w[0].distance(&w[1]) / v_ref).max(cfg.dt_min)).collect();
    ElasticBand::new(poses, dts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Collision,
    Curvature,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Index of the band segment (or pose) where the check first failed.
    pub index: usize,
    pub kind: ViolationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violation: Option<Violation>,
}

/// Footprint sweep on the costmap obstacle layer plus the curvature bound.
pub fn check_feasibility(band: &ElasticBand, cm: &Costmap, footprint: &Footprint, params: &VehicleParams) -> Feasibility {
    check_feasibility_upto(band, cm, footprint, params, f64::INFINITY)
}

/// As [`check_feasibility`], sweeping only the first `horizon` seconds.
pub fn check_feasibility_upto(band: &ElasticBand, cm: &Costmap, footprint: &Footprint, params: &VehicleParams, horizon: f64) -> Feasibility {
    let kappa_max = params.max_curvature();
    let step = cm.resolution();
    let fail = |index, kind| Feasibility { feasible: false, violation: Some(Violation { index, kind }) };
    let mut t = 0.0;
    for i in 0..band.segments() {
        let (a, b) = (band.poses[i], band.poses[i + 1]);
        if segment_curvature(&a, &b).abs() > kappa_max {
            return fail(i, ViolationKind::Curvature);
        }
        let sweep = a.distance(&b).max(footprint.length * angle_diff(b.yaw, a.yaw).abs());
        let k = (sweep / step).ceil().max(1.0) as usize;
        for j in 0..=k {
            let s = j as f64 / k as f64;
            let p = Pose2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y), a.yaw + s * angle_diff(b.yaw, a.yaw));
            if cm.polygon_collides(&footprint.at(&p)) {
                return fail(i, ViolationKind::Collision);
            }
        }
        t += band.dts[i];
        if t >= horizon {
            break;
        }
    }
    Feasibility { feasible: true, violation: None }
}

/// First-segment Ackermann command: speed from the chord, yaw rate from the
/// heading change, steering from the bicycle relation.
pub fn extract_command(band: &ElasticBand, params: &VehicleParams, prev_steering: f64, v_eps: f64) -> AckermannCommand {
    let dt = band.dts[0];
    let v = band.velocity(0);
    let omega = angle_diff(band.poses[1].yaw, band.poses[0].yaw) / dt;
    let (steering, v) = if v.abs() > v_eps {
        ((params.wheelbase * omega / v).atan(), v)
    } else {
        (prev_steering, 0.0)
    };
    AckermannCommand { steering, wheel_velocity: v / params.wheel_radius }.saturated(params)
}
