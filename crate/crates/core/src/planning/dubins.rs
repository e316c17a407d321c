//! Shortest bounded-curvature paths (Dubins) between two poses, driven either
//! all forward or all in reverse. Used as an analytic first guess for bands.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::teb::{ElasticBand, TebConfig};
use super::PlanError;
use crate::geometry::{wrap, Pose2};
use crate::types::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Steer {
    Left,
    Straight,
    Right,
}

impl Steer {
    fn sign(self) -> f64 {
        match self {
            Steer::Left => 1.0,
            Steer::Straight => 0.0,
            Steer::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DubinsPath {
    pub start: Pose2,
    pub radius: f64,
    /// Three segments with their lengths in meters.
    pub segments: [(Steer, f64); 3],
    /// Driven backwards; headings in `start` and the samples are the
    /// vehicle's, not the direction of travel.
    pub reverse: bool,
}

fn m2pi(a: f64) -> f64 {
    a.rem_euclid(TAU)
}

type Word = ([Steer; 3], fn(f64, f64, f64) -> Option<(f64, f64, f64)>);

const WORDS: [Word; 6] = {
    use Steer::{Left as L, Right as R, Straight as S};
    [
        ([L, S, L], lsl),
        ([R, S, R], rsr),
        ([L, S, R], lsr),
        ([R, S, L], rsl),
        ([R, L, R], rlr),
        ([L, R, L], lrl),
    ]
};

fn lsl(a: f64, b: f64, d: f64) -> Option<(f64, f64, f64)> {
    let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
    let p2 = 2.0 + d * d - 2.0 * (a - b).cos() + 2.0 * d * (sa - sb);
    if p2 < -1e-9 {
        return None;
    }
    let p2 = p2.max(0.0);
    let tmp = (cb - ca).atan2(d + sa - sb);
    Some((m2pi(tmp - a), p2.sqrt(), m2pi(b - tmp)))
}

fn rsr(a: f64, b: f64, d: f64) -> Option<(f64, f64, f64)> {
    let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
    let p2 = 2.0 + d * d - 2.0 * (a - b).cos() + 2.0 * d * (sb - sa);
    if p2 < -1e-9 {
        return None;
    }
    let p2 = p2.max(0.0);
    let tmp = (ca - cb).atan2(d - sa + sb);
    Some((m2pi(a - tmp), p2.sqrt(), m2pi(tmp - b)))
}

fn lsr(a: f64, b: f64, d: f64) -> Option<(f64, f64, f64)> {
    let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
    let p2 = -2.0 + d * d + 2.0 * (a - b).cos() + 2.0 * d * (sa + sb);
    if p2 < -1e-9 {
        return None;
    }
    let p2 = p2.max(0.0);
    let p = p2.sqrt();
    let tmp = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
    Some((m2pi(tmp - a), p, m2pi(tmp - b)))
}

fn rsl(a: f64, b: f64, d: f64) -> Option<(f64, f64, f64)> {
    let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
    let p2 = -2.0 + d * d + 2.0 * (a - b).cos() - 2.0 * d * (sa + sb);
    if p2 < -1e-9 {
        return None;
    }
    let p2 = p2.max(0.0);
    let p = p2.sqrt();
    let tmp = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
    Some((m2pi(a - tmp), p, m2pi(b - tmp)))
}

fn rlr(a: f64, b: f64, d: f64) -> Option<(f64, f64, f64)> {
    let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
    let tmp = (6.0 - d * d + 2.0 * (a - b).cos() + 2.0 * d * (sa - sb)) / 8.0;
    if tmp.abs() > 1.0 + 1e-9 {
        return None;
    }
    let tmp = tmp.clamp(-1.0, 1.0);
    let p = m2pi(TAU - tmp.acos());
    let t = m2pi(a - (ca - cb).atan2(d - sa + sb) + 0.5 * p);
    Some((t, p, m2pi(a - b - t + p)))
}

fn lrl(a: f64, b: f64, d: f64) -> Option<(f64, f64, f64)> {
    let (sa, ca, sb, cb) = (a.sin(), a.cos(), b.sin(), b.cos());
    let tmp = (6.0 - d * d + 2.0 * (b - a).cos() + 2.0 * d * (sb - sa)) / 8.0;
    if tmp.abs() > 1.0 + 1e-9 {
        return None;
    }
    let tmp = tmp.clamp(-1.0, 1.0);
    let p = m2pi(TAU - tmp.acos());
    let t = m2pi(-a - (ca - cb).atan2(d + sa - sb) + 0.5 * p);
    Some((t, p, m2pi(b - a - t + p)))
}

/// Pose after driving `s` meters forward with signed curvature `k`.
fn advance(p: &Pose2, k: f64, s: f64) -> Pose2 {
    if k == 0.0 {
        Pose2::new(p.x + s * p.yaw.cos(), p.y + s * p.yaw.sin(), p.yaw)
    } else {
        let yaw = p.yaw + k * s;
        Pose2::new(p.x + (yaw.sin() - p.yaw.sin()) / k, p.y + (p.yaw.cos() - yaw.cos()) / k, wrap(yaw))
    }
}

fn flip(p: &Pose2) -> Pose2 {
    Pose2::new(p.x, p.y, wrap(p.yaw + PI))
}

impl DubinsPath {
    /// All feasible words from `start` to `goal`, forward only.
    pub fn candidates(start: &Pose2, goal: &Pose2, radius: f64) -> Vec<DubinsPath> {
        let (dx, dy) = (goal.x - start.x, goal.y - start.y);
        let d = dx.hypot(dy) / radius;
        let th = if d > 0.0 { dy.atan2(dx) } else { 0.0 };
        let (a, b) = (m2pi(start.yaw - th), m2pi(goal.yaw - th));
        WORDS
            .iter()
            .filter_map(|(steer, f)| {
                let (t, p, q) = f(a, b, d)?;
                Some(DubinsPath {
                    start: *start,
                    radius,
                    segments: [(steer[0], t * radius), (steer[1], p * radius), (steer[2], q * radius)],
                    reverse: false,
                })
            })
            .collect()
    }

    /// Shortest path from `start` to `goal`, driving backwards if `reverse`.
    pub fn shortest(start: &Pose2, goal: &Pose2, radius: f64, reverse: bool) -> Option<DubinsPath> {
        let (s, g) = if reverse { (flip(start), flip(goal)) } else { (*start, *goal) };
        let mut best = Self::candidates(&s, &g, radius)
            .into_iter()
            .min_by(|x, y| x.length().total_cmp(&y.length()))?;
        if reverse {
            best.start = *start;
            best.reverse = true;
        }
        Some(best)
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.1).sum()
    }

    /// Vehicle pose after `s` meters of travel.
    pub fn pose_at(&self, s: f64) -> Pose2 {
        let mut p = if self.reverse { flip(&self.start) } else { self.start };
        let mut rest = s.clamp(0.0, self.length());
        for &(steer, len) in &self.segments {
            let step = rest.min(len);
            p = advance(&p, steer.sign() / self.radius, step);
            rest -= step;
            if rest <= 0.0 {
                break;
            }
        }
        if self.reverse {
            flip(&p)
        } else {
            p
        }
    }

    /// Poses about `spacing` apart, including both ends.
    pub fn sample(&self, spacing: f64) -> Vec<Pose2> {
        let len = self.length();
        let n = ((len / spacing).ceil() as usize).max(1);
        (0..=n).map(|i| self.pose_at(len * i as f64 / n as f64)).collect()
    }

    /// Band along the path with time steps for half the speed limit.
    pub fn to_band(&self, goal: &Pose2, params: &VehicleParams, cfg: &TebConfig) -> Result<ElasticBand, PlanError> {
        let mut poses = self.sample(cfg.spacing);
        if let Some(last) = poses.last_mut() {
            *last = *goal;
        }
        let v_ref = 0.5 * cfg.v_max.unwrap_or(params.v_max);
        let dts = poses.windows(2).map(|w| (w[0].distance(&w[1]) / v_ref).max(cfg.dt_min)).collect();
        ElasticBand::new(poses, dts)
    }
}
