//! Adaptive Monte-Carlo localization against a prior occupancy map.

use std::collections::HashSet;
use std::fmt::Write as _;

use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geometry::{angle_diff, Pose2, Vec2};
use crate::grid::{distance_transform, Cell, OccupancyGrid, Trinary};
use crate::odometry::OdometryDelta;
use crate::types::LaserScan;

/// Distance from every cell centre to the nearest occupied cell centre.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodField {
    pub resolution: f64,
    pub origin: Pose2,
    pub width: usize,
    pub height: usize,
    pub d_max: f64,
    pub distance: Vec<f64>,
}

impl LikelihoodField {
    pub fn build(map: &OccupancyGrid, d_max: f64) -> Result<Self> {
        if !(d_max > 0.0) {
            return Err(Error::InvalidArgument(format!("d_max must be positive, got {d_max}")));
        }
        let seeds: Vec<bool> = (0..map.len()).map(|i| map.trinary_at(i) == Trinary::Occupied).collect();
        if !seeds.iter().any(|s| *s) {
            return Err(Error::InvalidArgument("map has no occupied cells to localize against".into()));
        }
        let (w, h) = (map.width, map.height);
        let distance = distance_transform(w, h, &seeds).into_iter().map(|d| (d * map.resolution).min(d_max)).collect();
        Ok(LikelihoodField {
            resolution: map.resolution,
            origin: map.origin,
            width: w,
            height: h,
            d_max,
            distance,
        })
    }

    pub fn at(&self, c: Cell) -> f64 {
        if c.ix < 0 || c.iy < 0 || c.ix as usize >= self.width || c.iy as usize >= self.height {
            return self.d_max;
        }
        self.distance[c.iy as usize * self.width + c.ix as usize]
    }

    /// Distance at the cell containing world point `p`; `d_max` off the map.
    pub fn lookup(&self, p: Vec2) -> f64 {
        let m = self.origin.inverse_transform_point(p) / self.resolution;
        self.at(Cell::new(m.x.floor() as i64, m.y.floor() as i64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmclConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub alphas: [f64; 4],
    pub beams: usize,
    pub sigma_hit: f64,
    pub z_hit: f64,
    pub z_rand: f64,
    pub kld_epsilon: f64,
    pub kld_delta: f64,
    pub bin_xy: f64,
    pub bin_yaw: f64,
    pub d_max: f64,
    pub converged_xy: f64,
    pub converged_yaw: f64,
}

impl Default for AmclConfig {
    fn default() -> Self {
        AmclConfig {
            n_min: 100,
            n_max: 3000,
            alphas: [0.1, 0.1, 0.05, 0.05],
            beams: 60,
            sigma_hit: 0.05,
            z_hit: 0.95,
            z_rand: 0.05,
            kld_epsilon: 0.05,
            kld_delta: 0.01,
            bin_xy: 0.1,
            bin_yaw: 0.175,
            d_max: 2.0,
            converged_xy: 0.05,
            converged_yaw: 0.0873,
        }
    }
}

impl AmclConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(Error::InvalidArgument(format!("need 0 < n_min <= n_max, got {} and {}", self.n_min, self.n_max)));
        }
        if self.alphas.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::InvalidArgument("motion noise alphas must be nonnegative".into()));
        }
        if !(self.sigma_hit > 0.0) || self.z_hit < 0.0 || self.z_rand < 0.0 || self.beams == 0 {
            return Err(Error::InvalidArgument("invalid measurement model".into()));
        }
        if !(self.kld_epsilon > 0.0 && self.kld_delta > 0.0 && self.kld_delta < 1.0) {
            return Err(Error::InvalidArgument("invalid KLD parameters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pose: Pose2,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub n_min: usize,
    pub n_max: usize,
    pub stamp: f64,
    /// Set when every weight vanished in a measurement update.
    pub diverged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMode {
    Uniform,
    Gaussian { mean: Pose2, cov: Matrix3<f64> },
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.particles.iter().map(|p| p.weight * p.weight).sum::<f64>()
    }

    fn normalize(&mut self) -> bool {
        let s = self.weight_sum();
        if !(s > 0.0 && s.is_finite()) {
            return false;
        }
        for p in &mut self.particles {
            p.weight /= s;
        }
        true
    }

    fn reset_weights(&mut self) {
        let w = 1.0 / self.particles.len() as f64;
        for p in &mut self.particles {
            p.weight = w;
        }
    }
}

fn sample_free_pose<R: Rng + ?Sized>(map: &OccupancyGrid, free: &[Cell], rng: &mut R) -> Pose2 {
    let c = free[rng.gen_range(0..free.len())];
    let local = Vec2::new(
        (c.ix as f64 + rng.gen::<f64>()) * map.resolution,
        (c.iy as f64 + rng.gen::<f64>()) * map.resolution,
    );
    let p = map.origin.transform_point(local);
    // (-pi, pi]
    let yaw = std::f64::consts::PI - rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
    Pose2::new(p.x, p.y, yaw)
}

pub fn init_particles<R: Rng + ?Sized>(
    map: &OccupancyGrid,
    mode: &InitMode,
    n: usize,
    cfg: &AmclConfig,
    rng: &mut R,
) -> Result<ParticleSet> {
    cfg.validate()?;
    if n < cfg.n_min || n > cfg.n_max {
        return Err(Error::InvalidArgument(format!("particle count {n} outside [{}, {}]", cfg.n_min, cfg.n_max)));
    }
    let poses: Vec<Pose2> = match mode {
        InitMode::Uniform => {
            let free: Vec<Cell> = map.free_cells().collect();
            if free.is_empty() {
                return Err(Error::InvalidArgument("map has no free cells".into()));
            }
            (0..n).map(|_| sample_free_pose(map, &free, rng)).collect()
        }
        InitMode::Gaussian { mean, cov } => {
            let sym = (cov + cov.transpose()) / 2.0;
            if (sym - cov).abs().max() > 1e-12 || !cov.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument("covariance must be symmetric and finite".into()));
            }
            let eig = sym.symmetric_eigen();
            let scale = eig.eigenvalues.abs().max().max(1.0);
            if eig.eigenvalues.min() < -1e-12 * scale {
                return Err(Error::InvalidArgument("covariance is not positive semidefinite".into()));
            }
            let root = eig.eigenvectors * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
            (0..n)
                .map(|_| {
                    let z = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
                    let d: Vector3<f64> = root * z;
                    Pose2::new(mean.x + d[0], mean.y + d[1], mean.yaw + d[2])
                })
                .collect()
        }
    };
    let w = 1.0 / n as f64;
    Ok(ParticleSet {
        particles: poses.into_iter().map(|pose| Particle { pose, weight: w }).collect(),
        n_min: cfg.n_min,
        n_max: cfg.n_max,
        stamp: 0.0,
        diverged: false,
    })
}

/// Draws one noisy version of `delta` under the rotate–translate–rotate
/// odometry model. Backward motion is decomposed with a negative
/// translation so reversing does not read as a half turn.
pub fn sample_odometry_delta<R: Rng + ?Sized>(delta: &Pose2, alphas: &[f64; 4], rng: &mut R) -> Pose2 {
    let trans_abs = delta.x.hypot(delta.y);
    let backward = delta.x < 0.0;
    let (rot1, trans) = if trans_abs < 1e-9 {
        (0.0, 0.0)
    } else if backward {
        ((-delta.y).atan2(-delta.x), -trans_abs)
    } else {
        (delta.y.atan2(delta.x), trans_abs)
    };
    let rot2 = angle_diff(delta.yaw, rot1);
    let [a1, a2, a3, a4] = *alphas;
    let mut noisy = |var: f64| -> f64 {
        if var <= 0.0 {
            0.0
        } else {
            let z: f64 = StandardNormal.sample(rng);
            z * var.sqrt()
        }
    };
    let t2 = trans * trans;
    let r1 = rot1 - noisy(a1 * rot1 * rot1 + a2 * t2);
    let t = trans - noisy(a3 * t2 + a4 * (rot1 * rot1 + rot2 * rot2));
    let r2 = rot2 - noisy(a1 * rot2 * rot2 + a2 * t2);
    Pose2::new(t * r1.cos(), t * r1.sin(), r1 + r2)
}

pub fn motion_update<R: Rng + ?Sized>(ps: &mut ParticleSet, d: &OdometryDelta, alphas: &[f64; 4], rng: &mut R) {
    for p in &mut ps.particles {
        let noisy = sample_odometry_delta(&d.delta, alphas, rng);
        p.pose = p.pose.compose(&noisy);
    }
}

/// Log-likelihood of the subsampled scan at `pose`; max-range beams carry
/// no information and are skipped.
pub fn scan_log_likelihood(pose: &Pose2, scan: &LaserScan, field: &LikelihoodField, cfg: &AmclConfig) -> f64 {
    let n = scan.n_beams();
    let k = cfg.beams.min(n).max(1);
    let norm = 1.0 / (cfg.sigma_hit * (2.0 * std::f64::consts::PI).sqrt());
    let rand = cfg.z_rand / scan.range_max;
    let mut ll = 0.0;
    for j in 0..k {
        let i = j * n / k;
        if !scan.is_hit(i) {
            continue;
        }
        let p = pose.transform_point(scan.endpoint(i));
        let d = field.lookup(p);
        let hit = cfg.z_hit * norm * (-0.5 * (d / cfg.sigma_hit).powi(2)).exp();
        ll += (hit + rand).ln();
    }
    ll
}

/// Reweights by the likelihood-field beam model. Returns `false` (and
/// resets to uniform weights, flagging divergence) when all weights vanish.
pub fn measurement_update(ps: &mut ParticleSet, scan: &LaserScan, field: &LikelihoodField, cfg: &AmclConfig) -> bool {
    let logs: Vec<f64> = ps
        .particles
        .iter()
        .map(|p| p.weight.ln() + scan_log_likelihood(&p.pose, scan, field, cfg))
        .collect();
    ps.stamp = scan.stamp;
    // the plain-scale product underflows exactly when every exp() is zero
    let underflow = logs.iter().all(|l| l.exp() == 0.0 || l.is_nan());
    let best = logs.iter().copied().filter(|l| l.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if underflow || !best.is_finite() {
        ps.reset_weights();
        ps.diverged = true;
        return false;
    }
    for (p, l) in ps.particles.iter_mut().zip(&logs) {
        p.weight = (l - best).exp();
    }
    ps.normalize();
    true
}

/// KLD-sampling bound on the particle count for `k` occupied bins.
pub fn kld_bound(k: usize, epsilon: f64, delta: f64) -> f64 {
    if k <= 1 {
        return 0.0;
    }
    let z = Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(1.0 - delta);
    let km1 = (k - 1) as f64;
    let a = 2.0 / (9.0 * km1);
    km1 / (2.0 * epsilon) * (1.0 - a + a.sqrt() * z).powi(3)
}

pub fn occupied_bins(ps: &ParticleSet, cfg: &AmclConfig) -> usize {
    let bins: HashSet<(i64, i64, i64)> = ps
        .particles
        .iter()
        .filter(|p| p.weight > 0.0)
        .map(|p| {
            (
                (p.pose.x / cfg.bin_xy).floor() as i64,
                (p.pose.y / cfg.bin_xy).floor() as i64,
                (p.pose.yaw / cfg.bin_yaw).floor() as i64,
            )
        })
        .collect();
    bins.len()
}

/// Systematic resampling: returns, for each input particle, its offspring count.
pub fn low_variance_counts<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let mut counts = vec![0usize; weights.len()];
    if n == 0 || weights.is_empty() {
        return counts;
    }
    let step = 1.0 / n as f64;
    let r = rng.gen::<f64>() * step;
    let mut c = weights[0];
    let mut i = 0usize;
    for m in 0..n {
        let u = r + m as f64 * step;
        while u > c && i + 1 < weights.len() {
            i += 1;
            c += weights[i];
        }
        counts[i] += 1;
    }
    counts
}

/// Resamples when the effective sample size drops below half the count.
/// Returns whether resampling happened.
pub fn resample_adaptive<R: Rng + ?Sized>(ps: &mut ParticleSet, cfg: &AmclConfig, rng: &mut R) -> bool {
    let n = ps.len();
    if n == 0 || ps.effective_sample_size() >= n as f64 / 2.0 {
        return false;
    }
    let k = occupied_bins(ps, cfg);
    let target = kld_bound(k, cfg.kld_epsilon, cfg.kld_delta).ceil() as usize;
    let target = target.clamp(ps.n_min, ps.n_max);
    let weights: Vec<f64> = ps.particles.iter().map(|p| p.weight).collect();
    let counts = low_variance_counts(&weights, target, rng);
    let w = 1.0 / target as f64;
    let mut out = Vec::with_capacity(target);
    for (p, &c) in ps.particles.iter().zip(&counts) {
        for _ in 0..c {
            out.push(Particle { pose: p.pose, weight: w });
        }
    }
    ps.particles = out;
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseEstimate {
    pub pose: Pose2,
    pub cov: Matrix3<f64>,
    pub converged: bool,
}

pub fn estimate(ps: &ParticleSet, cfg: &AmclConfig) -> PoseEstimate {
    let total = ps.weight_sum();
    let (mut mx, mut my, mut ss, mut cs) = (0.0, 0.0, 0.0, 0.0);
    for p in &ps.particles {
        let w = p.weight / total;
        mx += w * p.pose.x;
        my += w * p.pose.y;
        ss += w * p.pose.yaw.sin();
        cs += w * p.pose.yaw.cos();
    }
    let yaw = ss.atan2(cs);
    let mut cov = Matrix3::zeros();
    for p in &ps.particles {
        let w = p.weight / total;
        let d = Vector3::new(p.pose.x - mx, p.pose.y - my, angle_diff(p.pose.yaw, yaw));
        cov += w * d * d.transpose();
    }
    let pos = Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);
    let pos_std = pos.symmetric_eigen().eigenvalues.max().max(0.0).sqrt();
    let yaw_std = cov[(2, 2)].max(0.0).sqrt();
    PoseEstimate {
        pose: Pose2::new(mx, my, yaw),
        cov,
        converged: pos_std <= cfg.converged_xy && yaw_std <= cfg.converged_yaw,
    }
}

/// Stateful filter bundling the particle set with its map field.
#[derive(Debug, Clone)]
pub struct Amcl {
    pub config: AmclConfig,
    pub field: LikelihoodField,
    pub particles: ParticleSet,
}

impl Amcl {
    pub fn new<R: Rng + ?Sized>(map: &OccupancyGrid, mode: &InitMode, n: usize, config: AmclConfig, rng: &mut R) -> Result<Self> {
        let field = LikelihoodField::build(map, config.d_max)?;
        let particles = init_particles(map, mode, n, &config, rng)?;
        Ok(Amcl { config, field, particles })
    }

    pub fn predict<R: Rng + ?Sized>(&mut self, d: &OdometryDelta, rng: &mut R) {
        motion_update(&mut self.particles, d, &self.config.alphas, rng);
    }

    pub fn correct<R: Rng + ?Sized>(&mut self, scan: &LaserScan, rng: &mut R) -> PoseEstimate {
        measurement_update(&mut self.particles, scan, &self.field, &self.config);
        resample_adaptive(&mut self.particles, &self.config, rng);
        self.estimate()
    }

    pub fn estimate(&self) -> PoseEstimate {
        estimate(&self.particles, &self.config)
    }
}

pub const POSE_CSV_HEADER: &str = "stamp,x,y,yaw,cov_xx,cov_yy,cov_yawyaw,n_particles,converged";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub stamp: f64,
    pub estimate: PoseEstimate,
    pub n_particles: usize,
}

pub fn pose_csv(records: &[PoseRecord]) -> String {
    let mut out = String::from(POSE_CSV_HEADER);
    out.push('\n');
    for r in records {
        let e = &r.estimate;
        let _ = writeln!(
            out,
            "{:.6},{:.9},{:.9},{:.9},{:.6e},{:.6e},{:.6e},{},{}",
            r.stamp,
            e.pose.x,
            e.pose.y,
            e.pose.yaw,
            e.cov[(0, 0)],
            e.cov[(1, 1)],
            e.cov[(2, 2)],
            r.n_particles,
            e.converged
        );
    }
    out
}
