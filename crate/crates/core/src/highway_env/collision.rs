//! Oriented-rectangle overlap by the separating axis test.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;

/// A vehicle footprint: centre, heading and full length/width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Vec2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedRect {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        Self {
            center,
            heading,
            length,
            width,
        }
    }

    /// Grows the rectangle by `dl` at each end and `dw` at each side.
    pub fn inflated(&self, dl: f64, dw: f64) -> Self {
        Self {
            length: self.length + 2.0 * dl,
            width: self.width + 2.0 * dw,
            ..*self
        }
    }

    fn axes(&self) -> (Vec2, Vec2) {
        let u = Vec2::from_polar(1.0, self.heading);
        (u, u.perp())
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let (u, n) = self.axes();
        let hl = u * (self.length / 2.0);
        let hw = n * (self.width / 2.0);
        let c = self.center;
        [c + hl + hw, c - hl + hw, c - hl - hw, c + hl - hw]
    }

    /// Axis-aligned bounds `(min, max)` of the footprint.
    pub fn aabb(&self) -> (Vec2, Vec2) {
        let (u, n) = self.axes();
        let ex = (u.x * self.length / 2.0).abs() + (n.x * self.width / 2.0).abs();
        let ey = (u.y * self.length / 2.0).abs() + (n.y * self.width / 2.0).abs();
        (
            Vec2::new(self.center.x - ex, self.center.y - ey),
            Vec2::new(self.center.x + ex, self.center.y + ey),
        )
    }

    fn half_extent_along(&self, axis: Vec2) -> f64 {
        let (u, n) = self.axes();
        (u.dot(axis) * self.length / 2.0).abs() + (n.dot(axis) * self.width / 2.0).abs()
    }

    /// Interior point test.
    pub fn contains(&self, p: Vec2) -> bool {
        let (u, n) = self.axes();
        let d = p - self.center;
        d.dot(u).abs() < self.length / 2.0 && d.dot(n).abs() < self.width / 2.0
    }
}

/// True iff the interiors overlap. Rectangles that merely touch (zero
/// penetration on some axis) do not collide.
pub fn rects_overlap(a: &OrientedRect, b: &OrientedRect) -> bool {
    let (ua, na) = a.axes();
    let (ub, nb) = b.axes();
    let d = b.center - a.center;
    [ua, na, ub, nb].iter().all(|&axis| {
        let overlap = a.half_extent_along(axis) + b.half_extent_along(axis) - d.dot(axis).abs();
        overlap > 0.0
    })
}
