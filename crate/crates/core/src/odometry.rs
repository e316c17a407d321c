//! Planar ego-motion: wheel + gyro dead reckoning and point-to-line scan
//! alignment.

use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap, Pose2, Vec2};
use crate::types::LaserScan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OdometryMethod {
    Matched,
    DeadReckoned,
}

impl OdometryMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            OdometryMethod::Matched => "matched",
            OdometryMethod::DeadReckoned => "dead-reckoned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometryDelta {
    /// Motion expressed in the previous body frame.
    pub delta: Pose2,
    pub cov: Matrix3<f64>,
    pub method: OdometryMethod,
}

impl OdometryDelta {
    pub fn identity() -> Self {
        OdometryDelta {
            delta: Pose2::IDENTITY,
            cov: Matrix3::zeros(),
            method: OdometryMethod::DeadReckoned,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdometryConfig {
    pub ticks_per_rad: f64,
    pub wheel_radius: f64,
    /// Proportional and constant parts of the travelled-distance sigma.
    pub ds_sigma: (f64, f64),
    pub dyaw_sigma: (f64, f64),
    pub gate: f64,
    pub huber: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Fraction of valid beams that must be associated to accept a match.
    pub min_association: f64,
    /// Consecutive endpoints further apart than this are not joined.
    pub max_segment: f64,
    /// Neighbours on each side used to fit a reference line.
    pub line_half_width: usize,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        OdometryConfig {
            ticks_per_rad: 4096.0 / (2.0 * std::f64::consts::PI),
            wheel_radius: 0.045,
            ds_sigma: (0.02, 1e-4),
            dyaw_sigma: (0.05, 1e-4),
            gate: 0.2,
            huber: 0.05,
            max_iterations: 30,
            tolerance: 1e-5,
            min_association: 0.4,
            max_segment: 0.15,
            line_half_width: 3,
        }
    }
}

/// Midpoint-arc dead reckoning from an encoder tick increment and a gyro rate.
pub fn dead_reckon(encoder_dticks: i64, imu_yaw_rate: f64, dt: f64, cfg: &OdometryConfig) -> Result<OdometryDelta> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let ds = encoder_dticks as f64 / cfg.ticks_per_rad * cfg.wheel_radius;
    Ok(arc_delta(ds, imu_yaw_rate * dt, cfg))
}

/// Midpoint-arc delta for travelled distance `ds` and heading change `dyaw`,
/// with first-order propagated covariance.
pub fn arc_delta(ds: f64, dyaw: f64, cfg: &OdometryConfig) -> OdometryDelta {
    let (s, c) = (dyaw / 2.0).sin_cos();
    let sd = cfg.ds_sigma.0 * ds.abs() + cfg.ds_sigma.1;
    let sy = cfg.dyaw_sigma.0 * dyaw.abs() + cfg.dyaw_sigma.1;
    let j = nalgebra::Matrix3x2::new(c, -ds * s / 2.0, s, ds * c / 2.0, 0.0, 1.0);
    let q = nalgebra::Matrix2::new(sd * sd, 0.0, 0.0, sy * sy);
    OdometryDelta {
        delta: Pose2::new(ds * c, ds * s, dyaw),
        cov: j * q * j.transpose(),
        method: OdometryMethod::DeadReckoned,
    }
}

pub fn accumulate(pose: &Pose2, d: &OdometryDelta) -> Pose2 {
    pose.compose(&d.delta)
}

/// Reference endpoint with a normal fitted to its contiguous neighbours.
struct LocalLine {
    point: Vec2,
    normal: Vec2,
}

fn local_lines(scan: &LaserScan, cfg: &OdometryConfig) -> Vec<LocalLine> {
    let n = scan.n_beams();
    let joined = |i: usize, j: usize| -> bool {
        if !(scan.is_hit(i) && scan.is_hit(j)) {
            return false;
        }
        // beams fan out with range, so the joining threshold scales too
        let limit = cfg.max_segment.max(3.0 * scan.angle_increment * scan.ranges[i].max(scan.ranges[j]));
        (scan.endpoint(i) - scan.endpoint(j)).norm() <= limit
    };
    let mut out = Vec::new();
    for i in 0..n {
        if !scan.is_hit(i) {
            continue;
        }
        let mut pts = vec![scan.endpoint(i)];
        let mut k = i;
        for _ in 0..cfg.line_half_width {
            let j = (k + 1) % n;
            if !joined(k, j) {
                break;
            }
            pts.push(scan.endpoint(j));
            k = j;
        }
        let mut k = i;
        for _ in 0..cfg.line_half_width {
            let j = (k + n - 1) % n;
            if !joined(k, j) {
                break;
            }
            pts.push(scan.endpoint(j));
            k = j;
        }
        if pts.len() < 2 {
            continue;
        }
        let centroid = pts.iter().sum::<Vec2>() / pts.len() as f64;
        let mut cov = nalgebra::Matrix2::zeros();
        for p in &pts {
            let d = p - centroid;
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let (lo, hi) = if eig.eigenvalues[0] <= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
        let p = scan.endpoint(i);
        // at corners the window is not collinear; fall back to the nearest neighbour's chord
        let normal = if pts.len() >= 3 && eig.eigenvalues[lo] <= 0.05 * eig.eigenvalues[hi] {
            eig.eigenvectors.column(lo).into_owned()
        } else {
            let q = pts[1..]
                .iter()
                .min_by(|a, b| (*a - p).norm_squared().total_cmp(&(*b - p).norm_squared()))
                .copied()
                .unwrap_or(pts[1]);
            let d = (q - p).normalize();
            Vec2::new(-d.y, d.x)
        };
        out.push(LocalLine { point: p, normal });
    }
    out
}

fn nearest_line(lines: &[LocalLine], p: Vec2, gate: f64) -> Option<usize> {
    let g2 = gate * gate;
    let mut best: Option<(usize, f64)> = None;
    for (k, l) in lines.iter().enumerate() {
        let d = (l.point - p).norm_squared();
        if d <= g2 && best.is_none_or(|(_, bd)| d < bd) {
            best = Some((k, d));
        }
    }
    best.map(|(k, _)| k)
}

/// Point-to-line ICP of `curr` against `prev`, starting from `guess`.
/// Falls back to the guess (dead-reckoned) when too few beams associate.
pub fn align_scans(prev: &LaserScan, curr: &LaserScan, guess: &Pose2, cfg: &OdometryConfig) -> OdometryDelta {
    let prior = OdometryDelta {
        delta: *guess,
        cov: Matrix3::from_diagonal(&Vector3::new(2.5e-3, 2.5e-3, 2.5e-3)),
        method: OdometryMethod::DeadReckoned,
    };
    align_scans_with_prior(prev, curr, &prior, cfg)
}

/// As [`align_scans`], returning `prior` unchanged on fallback.
pub fn align_scans_with_prior(prev: &LaserScan, curr: &LaserScan, prior: &OdometryDelta, cfg: &OdometryConfig) -> OdometryDelta {
    let fallback = OdometryDelta { method: OdometryMethod::DeadReckoned, ..*prior };
    if !prior.delta.is_finite() {
        return fallback;
    }
    let lines = local_lines(prev, cfg);
    let points: Vec<Vec2> = curr.hit_points().into_iter().map(|(_, p)| p).collect();
    if lines.is_empty() || points.len() < 3 {
        return fallback;
    }

    let mut xi = Vector3::new(prior.delta.x, prior.delta.y, prior.delta.yaw);
    let mut associated = 0usize;
    let mut h = Matrix3::zeros();
    let mut sq = 0.0;
    for _ in 0..cfg.max_iterations {
        let (s, c) = xi[2].sin_cos();
        h = Matrix3::zeros();
        let mut b = Vector3::zeros();
        associated = 0;
        sq = 0.0;
        for q in &points {
            let p = Vec2::new(xi[0] + c * q.x - s * q.y, xi[1] + s * q.x + c * q.y);
            let Some(k) = nearest_line(&lines, p, cfg.gate) else {
                continue;
            };
            let seg = &lines[k];
            let r = seg.normal.dot(&(p - seg.point));
            let w = if r.abs() <= cfg.huber { 1.0 } else { cfg.huber / r.abs() };
            let dq = Vec2::new(-s * q.x - c * q.y, c * q.x - s * q.y);
            let j = Vector3::new(seg.normal.x, seg.normal.y, seg.normal.dot(&dq));
            h += w * j * j.transpose();
            b -= w * r * j;
            sq += w * r * r;
            associated += 1;
        }
        if associated < 3 {
            return fallback;
        }
        let Some(step) = h.cholesky().map(|ch| ch.solve(&b)) else {
            return fallback;
        };
        xi += step;
        xi[2] = wrap(xi[2]);
        if step.norm() < cfg.tolerance {
            break;
        }
    }
    let coverage = associated as f64 / points.len() as f64;
    if coverage < cfg.min_association {
        return fallback;
    }
    let sigma2 = (sq / (associated.saturating_sub(3).max(1)) as f64).max(1e-8);
    let cov = h.try_inverse().map(|hi| hi * sigma2).unwrap_or(prior.cov);
    OdometryDelta {
        delta: Pose2::new(xi[0], xi[1], xi[2]),
        cov: (cov + cov.transpose()) / 2.0,
        method: OdometryMethod::Matched,
    }
}

/// One line of the odometry CSV log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometryRecord {
    pub stamp: f64,
    pub delta: OdometryDelta,
}

pub const ODOMETRY_CSV_HEADER: &str = "stamp,dx,dy,dyaw,method,cov_xx,cov_yy,cov_yawyaw";

pub fn odometry_csv(records: &[OdometryRecord]) -> String {
    let mut out = String::from(ODOMETRY_CSV_HEADER);
    out.push('\n');
    for r in records {
        let d = &r.delta;
        let _ = writeln!(
            out,
            "{:.6},{:.9},{:.9},{:.9},{},{:.6e},{:.6e},{:.6e}",
            r.stamp,
            d.delta.x,
            d.delta.y,
            d.delta.yaw,
            d.method.as_str(),
            d.cov[(0, 0)],
            d.cov[(1, 1)],
            d.cov[(2, 2)]
        );
    }
    out
}
