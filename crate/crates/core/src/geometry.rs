//! Planar vectors and convex polygons.
//!
//! Every region the controllers reason about (reachable velocity sets,
//! velocity obstacles, their Minkowski sums and the feasible set left after
//! half-plane clipping) is a [`ConvexPolygon`]. Polygons are stored
//! counter-clockwise with collinear vertices removed and may degenerate to a
//! segment (two vertices) or a single point.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Tolerance used for orientation and containment predicates.
pub const GEOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Vector of length `r` pointing along `angle`.
    pub fn from_polar(r: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(r * c, r * s)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > GEOM_EPS).then(|| self / n)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Closest point to `p` on the segment `[a, b]`.
pub fn closest_on_segment(a: Vec2, b: Vec2, p: Vec2) -> Vec2 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq <= f64::EPSILON {
        return a;
    }
    let t = ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0);
    a + ab * t
}

/// Counter-clockwise convex polygon, possibly degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

impl ConvexPolygon {
    pub fn point(p: Vec2) -> Self {
        Self { vertices: vec![p] }
    }

    /// Convex hull of `points` (Andrew's monotone chain). Returns `None` for
    /// an empty input.
    pub fn hull(points: &[Vec2]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let mut pts: Vec<Vec2> = points.to_vec();
        pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
        pts.dedup_by(|a, b| (a.x - b.x).abs() <= 1e-12 && (a.y - b.y).abs() <= 1e-12);
        if pts.len() < 3 {
            return Some(Self { vertices: pts });
        }
        let mut hull: Vec<Vec2> = Vec::with_capacity(pts.len() * 2);
        for pass in 0..2 {
            let start = hull.len();
            let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 {
                Box::new(pts.iter())
            } else {
                Box::new(pts.iter().rev())
            };
            for &p in iter {
                while hull.len() >= start + 2 {
                    let a = hull[hull.len() - 2];
                    let b = hull[hull.len() - 1];
                    if (b - a).cross(p - a) <= 1e-12 * (1.0 + (b - a).norm() * (p - a).norm()) {
                        hull.pop();
                    } else {
                        break;
                    }
                }
                hull.push(p);
            }
            hull.pop();
        }
        if hull.len() < 2 {
            // All points collinear and the chain collapsed: keep the extremes.
            hull = vec![pts[0], pts[pts.len() - 1]];
        }
        Some(Self { vertices: hull })
    }

    /// Axis-aligned rectangle `[min, max]`.
    pub fn rect(min: Vec2, max: Vec2) -> Self {
        Self::hull(&[min, Vec2::new(max.x, min.y), max, Vec2::new(min.x, max.y)])
            .expect("non-empty")
    }

    /// Regular `n`-gon circumscribing the circle of `radius` about `center`.
    pub fn circumscribed_circle(center: Vec2, radius: f64, n: usize) -> Self {
        let n = n.max(3);
        let step = std::f64::consts::TAU / n as f64;
        let r = radius / (step / 2.0).cos();
        let pts: Vec<Vec2> = (0..n)
            .map(|i| center + Vec2::from_polar(r, step * (i as f64 + 0.5)))
            .collect();
        Self::hull(&pts).expect("non-empty")
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn translate(&self, d: Vec2) -> Self {
        Self {
            vertices: self.vertices.iter().map(|&v| v + d).collect(),
        }
    }

    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len() as f64;
        self.vertices.iter().fold(Vec2::ZERO, |acc, &v| acc + v) / n
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        if n < 3 {
            return 0.0;
        }
        (0..n)
            .map(|i| self.vertices[i].cross(self.vertices[(i + 1) % n]))
            .sum::<f64>()
            / 2.0
    }

    /// Every turn between consecutive edges is counter-clockwise (within `eps`).
    pub fn is_convex(&self, eps: f64) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return true;
        }
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            (b - a).cross(c - b) >= -eps
        })
    }

    /// Membership with a boundary tolerance `tol` (distance units).
    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        match self.vertices.len() {
            0 => false,
            1 => self.vertices[0].distance(p) <= tol,
            2 => closest_on_segment(self.vertices[0], self.vertices[1], p).distance(p) <= tol,
            n => (0..n).all(|i| {
                let a = self.vertices[i];
                let b = self.vertices[(i + 1) % n];
                let e = b - a;
                e.cross(p - a) >= -tol * e.norm()
            }),
        }
    }

    /// Closest boundary point to `p` and the outward normal of the feature it
    /// lies on. Candidates closer than [`GEOM_EPS`] of each other are tied and
    /// resolved toward the larger projection on `prefer`.
    pub fn closest_boundary_point(&self, p: Vec2, prefer: Vec2) -> (Vec2, Vec2) {
        let n = self.vertices.len();
        match n {
            0 => (p, Vec2::new(1.0, 0.0)),
            1 => {
                let q = self.vertices[0];
                let normal = (p - q)
                    .normalized()
                    .or_else(|| prefer.normalized())
                    .unwrap_or(Vec2::new(1.0, 0.0));
                (q, normal)
            }
            2 => {
                let (a, b) = (self.vertices[0], self.vertices[1]);
                let q = closest_on_segment(a, b, p);
                let edge_normal = (b - a).perp().normalized().unwrap_or(Vec2::new(1.0, 0.0));
                let normal = (p - q).normalized().unwrap_or_else(|| {
                    if edge_normal.dot(prefer) >= 0.0 {
                        edge_normal
                    } else {
                        -edge_normal
                    }
                });
                (q, normal)
            }
            _ => {
                let mut best: Option<(f64, Vec2, Vec2)> = None;
                for i in 0..n {
                    let a = self.vertices[i];
                    let b = self.vertices[(i + 1) % n];
                    let q = closest_on_segment(a, b, p);
                    let d = q.distance(p);
                    let outward = Vec2::new(b.y - a.y, a.x - b.x)
                        .normalized()
                        .unwrap_or(Vec2::new(1.0, 0.0));
                    let better = match best {
                        None => true,
                        Some((bd, bq, _)) => {
                            d < bd - GEOM_EPS
                                || (d <= bd + GEOM_EPS && (q - bq).dot(prefer) > GEOM_EPS)
                        }
                    };
                    if better {
                        best = Some((d, q, outward));
                    }
                }
                let (_, q, normal) = best.expect("polygon has edges");
                (q, normal)
            }
        }
    }

    /// Euclidean projection of `p` onto the polygon.
    pub fn project(&self, p: Vec2) -> Vec2 {
        if self.contains(p, 0.0) {
            p
        } else {
            self.closest_boundary_point(p, Vec2::ZERO).0
        }
    }

    /// Intersection with the half-plane `{v : (v - point)·normal >= 0}`.
    pub fn clip(&self, point: Vec2, normal: Vec2) -> Option<Self> {
        let side = |v: Vec2| (v - point).dot(normal);
        let n = self.vertices.len();
        match n {
            0 => None,
            1 => (side(self.vertices[0]) >= -GEOM_EPS).then(|| self.clone()),
            _ => {
                let mut out = Vec::with_capacity(n + 2);
                let edges = if n == 2 { 1 } else { n };
                for i in 0..edges {
                    let a = self.vertices[i];
                    let b = self.vertices[(i + 1) % n];
                    let (da, db) = (side(a), side(b));
                    if da >= 0.0 {
                        out.push(a);
                    }
                    if (da >= 0.0) != (db >= 0.0) {
                        let t = da / (da - db);
                        out.push(a + (b - a) * t);
                    }
                }
                if n == 2 && side(self.vertices[1]) >= 0.0 {
                    out.push(self.vertices[1]);
                }
                if out.is_empty() {
                    // A vertex sitting within tolerance on the line still counts.
                    let touching: Vec<Vec2> = self
                        .vertices
                        .iter()
                        .copied()
                        .filter(|&v| side(v) >= -GEOM_EPS)
                        .collect();
                    return Self::hull(&touching);
                }
                Self::hull(&out)
            }
        }
    }

    /// Minkowski sum by merging the two edge sequences in polar order.
    pub fn minkowski_sum(&self, other: &ConvexPolygon) -> ConvexPolygon {
        if self.vertices.len() == 1 {
            return other.translate(self.vertices[0]);
        }
        if other.vertices.len() == 1 {
            return self.translate(other.vertices[0]);
        }
        let a = self.rotated_to_lowest();
        let b = other.rotated_to_lowest();
        let (na, nb) = (a.len(), b.len());
        let edge = |poly: &[Vec2], i: usize| poly[(i + 1) % poly.len()] - poly[i % poly.len()];
        let mut out = Vec::with_capacity(na + nb);
        let (mut i, mut j) = (0, 0);
        while i < na || j < nb {
            out.push(a[i % na] + b[j % nb]);
            let turn = if i == na {
                -1.0
            } else if j == nb {
                1.0
            } else {
                edge(&a, i).cross(edge(&b, j))
            };
            if turn > 0.0 {
                i += 1;
            } else if turn < 0.0 {
                j += 1;
            } else {
                i += 1;
                j += 1;
            }
        }
        Self::hull(&out).expect("non-empty")
    }

    /// Outward inflation by `eps`, realised as a Minkowski sum with a
    /// circumscribed octagon so the result contains the true offset set.
    pub fn inflate(&self, eps: f64) -> ConvexPolygon {
        if eps <= 0.0 {
            return self.clone();
        }
        self.minkowski_sum(&ConvexPolygon::circumscribed_circle(Vec2::ZERO, eps, 8))
    }

    fn rotated_to_lowest(&self) -> Vec<Vec2> {
        let start = self
            .vertices
            .iter()
            .enumerate()
            .min_by(|(_, p), (_, q)| p.y.total_cmp(&q.y).then(p.x.total_cmp(&q.x)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let n = self.vertices.len();
        (0..n).map(|k| self.vertices[(start + k) % n]).collect()
    }
}

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn around(center: Vec2, half: Vec2) -> Self {
        Self::new(center - half, center + half)
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb::new(
            Vec2::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            Vec2::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        )
    }

    pub fn inflated(&self, dx: f64, dy: f64) -> Aabb {
        Aabb::new(self.min - Vec2::new(dx, dy), self.max + Vec2::new(dx, dy))
    }

    /// Positive-area overlap; touching boxes do not intersect.
    pub fn intersects(&self, o: &Aabb) -> bool {
        self.min.x < o.max.x && o.min.x < self.max.x && self.min.y < o.max.y && o.min.y < self.max.y
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        self.contains(o.min) && self.contains(o.max)
    }

    pub fn size(&self) -> Vec2 {
        self.max - self.min
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }
}
