//! Planar rigid-body geometry: angles, poses and convex polygons.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point or free vector in the plane, in meters.
pub type Vec2 = Vector2<f64>;

/// Wraps an angle into the half-open interval (-π, π].
pub fn normalize_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::InvalidArgument(format!("angle is not finite: {a}")));
    }
    Ok(wrap(a))
}

/// Infallible variant of [`normalize_angle`] for values already known to be finite.
#[inline]
pub fn wrap(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Smallest signed rotation taking `from` onto `to`.
#[inline]
pub fn angle_diff(to: f64, from: f64) -> f64 {
    wrap(to - from)
}

/// Planar pose (x, y, yaw). Yaw is kept in (-π, π].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl From<[f64; 3]> for Pose2 {
    fn from(v: [f64; 3]) -> Self {
        Pose2::new(v[0], v[1], v[2])
    }
}

impl From<Pose2> for [f64; 3] {
    fn from(p: Pose2) -> Self {
        [p.x, p.y, p.yaw]
    }
}

impl Pose2 {
    pub const IDENTITY: Pose2 = Pose2 {
        x: 0.0,
        y: 0.0,
        yaw: 0.0,
    };

    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Pose2 { x, y, yaw: wrap(yaw) }
    }

    /// Checked constructor rejecting non-finite components.
    pub fn try_new(x: f64, y: f64, yaw: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "pose translation not finite: ({x}, {y})"
            )));
        }
        Ok(Pose2 {
            x,
            y,
            yaw: normalize_angle(yaw)?,
        })
    }

    pub fn translation(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }

    /// `self ⊕ other`: `other` expressed in the frame of `self`, mapped to the parent frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.yaw.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.yaw + other.yaw,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.yaw.sin_cos();
        Pose2::new(
            -c * self.x - s * self.y,
            s * self.x - c * self.y,
            -self.yaw,
        )
    }

    /// Relative motion from `self` to `other`, expressed in `self`'s frame.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.yaw.sin_cos();
        Vec2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    pub fn inverse_transform_point(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.yaw.sin_cos();
        let d = p - self.translation();
        Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (self.translation() - other.translation()).norm()
    }
}

impl Mul for Pose2 {
    type Output = Pose2;

    fn mul(self, rhs: Pose2) -> Pose2 {
        self.compose(&rhs)
    }
}

/// Gap below which two outlines are considered in contact (m).
pub const CONTACT_TOLERANCE: f64 = 1e-9;

/// Convex polygon, vertices in counter-clockwise order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    pub vertices: Vec<Vec2>,
}

impl ConvexPolygon {
    /// Builds a polygon and orients its vertices counter-clockwise.
    pub fn new(mut vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if cross(b - a, c - b) < -1e-12 {
                return Err(Error::InvalidArgument("polygon is not convex".into()));
            }
        }
        Ok(ConvexPolygon { vertices })
    }

    /// Axis-aligned rectangle centred on the origin.
    pub fn rectangle(length: f64, width: f64) -> Self {
        let (hl, hw) = (0.5 * length, 0.5 * width);
        ConvexPolygon {
            vertices: vec![
                Vec2::new(-hl, -hw),
                Vec2::new(hl, -hw),
                Vec2::new(hl, hw),
                Vec2::new(-hl, hw),
            ],
        }
    }

    pub fn transformed(&self, pose: &Pose2) -> ConvexPolygon {
        ConvexPolygon {
            vertices: self
                .vertices
                .iter()
                .map(|v| pose.transform_point(*v))
                .collect(),
        }
    }

    /// Closed-set containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            cross(b - a, p - a) >= 0.0
        })
    }

    /// Closed-set intersection by separating axis theorem. Polygons touching or
    /// separated by less than [`CONTACT_TOLERANCE`] intersect.
    pub fn intersects(&self, other: &ConvexPolygon) -> bool {
        !has_separating_axis(self, other) && !has_separating_axis(other, self)
    }

    /// Smallest ray parameter `t ≥ 0` where `origin + t·dir` meets the boundary.
    pub fn ray_intersection(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let n = self.vertices.len();
        let mut best: Option<f64> = None;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if let Some(t) = ray_segment(origin, dir, a, b) {
                best = Some(best.map_or(t, |bt: f64| bt.min(t)));
            }
        }
        best
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn centroid(&self) -> Vec2 {
        let sum: Vec2 = self.vertices.iter().sum();
        sum / self.vertices.len() as f64
    }

    /// Radius of the smallest origin-centred circle containing all vertices.
    pub fn circumradius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

fn has_separating_axis(a: &ConvexPolygon, b: &ConvexPolygon) -> bool {
    a.edges().any(|(p, q)| {
        let e = q - p;
        let margin = -CONTACT_TOLERANCE * e.norm();
        // every vertex of b strictly on the outer side of this edge
        b.vertices.iter().all(|v| cross(e, v - p) < margin)
    })
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

fn signed_area(v: &[Vec2]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| cross(v[i], v[(i + 1) % n])).sum::<f64>()
}

/// Ray–segment intersection; returns the ray parameter when they meet.
pub fn ray_segment(origin: Vec2, dir: Vec2, a: Vec2, b: Vec2) -> Option<f64> {
    let e = b - a;
    let denom = cross(dir, e);
    if denom.abs() < 1e-15 {
        return None;
    }
    let w = a - origin;
    let t = cross(w, e) / denom;
    let u = cross(w, dir) / denom;
    if t >= 0.0 && (-1e-12..=1.0 + 1e-12).contains(&u) {
        Some(t)
    } else {
        None
    }
}

/// Euclidean distance from `p` to the segment `ab`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let e = b - a;
    let len2 = e.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&e) / len2).clamp(0.0, 1.0);
    (p - (a + e * t)).norm()
}
