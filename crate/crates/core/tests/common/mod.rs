//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simplex_drive::advanced_controllers::{Activation, MlpPolicy};
use simplex_drive::geometry::{ConvexPolygon, Vec2};
use simplex_drive::highway_env::{
    spawn_scenario, IdmParams, ObstacleVehicle, TrafficConfig, WorldParams, WorldState,
};
use simplex_drive::orca_drive::OrcaPlane;
use simplex_drive::vehicle_dynamics::VehicleState;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Default world with the ego at (500, lane 1) and the given obstacles,
/// each `(x, y, speed, crashed)`.
pub fn world_with(ego_speed: f64, obstacles: &[(f64, f64, f64, bool)]) -> WorldState {
    let params = WorldParams::default();
    let traffic = TrafficConfig {
        density: 0.0,
        ego_speed,
        ..TrafficConfig::default()
    };
    let mut w = spawn_scenario(&params, &traffic, 0).expect("empty road spawns");
    w.obstacles = obstacles
        .iter()
        .map(|&(x, y, v, crashed)| ObstacleVehicle {
            state: VehicleState::new(x, y, if crashed { 0.0 } else { v }, 0.0),
            length: params.vehicle_length,
            width: params.vehicle_width,
            idm: IdmParams::default(),
            crashed,
            lane: params.road.lane_of(y).unwrap_or(0),
        })
        .collect();
    w
}

/// Collision within `(0, τ]` sampled every millisecond.
pub fn vo_sampled(p: Vec2, r: f64, tau: f64, v: Vec2) -> bool {
    let n = (tau / 1e-3).round() as usize;
    (1..=n).any(|i| {
        let t = i as f64 * 1e-3;
        (p - v * t).norm() <= r
    })
}

/// Distance from `v` to the exact VO, the union of discs `(P/t, r/t)`.
pub fn vo_exact_distance(p: Vec2, r: f64, tau: f64, v: Vec2) -> f64 {
    let n = (tau / 1e-3).round() as usize;
    (1..=n)
        .map(|i| {
            let t = i as f64 * 1e-3;
            ((v - p * (1.0 / t)).norm() - r / t).max(0.0)
        })
        .fold(f64::INFINITY, f64::min)
}

pub fn random_polygon(rng: &mut impl Rng, center: Vec2, spread: f64) -> ConvexPolygon {
    loop {
        let n = rng.random_range(3..10);
        let pts: Vec<Vec2> = (0..n)
            .map(|_| {
                center
                    + Vec2::new(
                        rng.random_range(-spread..spread),
                        rng.random_range(-spread..spread),
                    )
            })
            .collect();
        if let Some(p) = ConvexPolygon::hull(&pts) {
            if p.area() > 1e-2 * spread * spread {
                return p;
            }
        }
    }
}

/// Random convex combination of the vertices.
pub fn sample_inside(rng: &mut impl Rng, poly: &ConvexPolygon) -> Vec2 {
    let w: Vec<f64> = poly
        .vertices()
        .iter()
        .map(|_| rng.random_range(0.0..1.0f64).powi(3))
        .collect();
    let total: f64 = w.iter().sum::<f64>().max(1e-12);
    poly.vertices()
        .iter()
        .zip(&w)
        .fold(Vec2::ZERO, |acc, (v, wi)| acc + *v * (wi / total))
}

/// Smallest distance from `v` to points placed every `spacing` along the boundary.
pub fn boundary_distance(poly: &ConvexPolygon, v: Vec2, spacing: f64) -> f64 {
    let vs = poly.vertices();
    let mut best = f64::INFINITY;
    for i in 0..vs.len() {
        let a = vs[i];
        let b = vs[(i + 1) % vs.len()];
        let n = ((b - a).norm() / spacing).ceil().max(1.0) as usize;
        for k in 0..=n {
            let q = a + (b - a) * (k as f64 / n as f64);
            best = best.min(q.distance(v));
        }
    }
    best
}

/// Point-in-polygon by edge signs, written without the library predicate.
pub fn inside_by_edges(poly: &ConvexPolygon, p: Vec2, tol: f64) -> bool {
    let vs = poly.vertices();
    if vs.len() < 3 {
        return vs.iter().any(|v| v.distance(p) <= tol);
    }
    (0..vs.len()).all(|i| {
        let a = vs[i];
        let b = vs[(i + 1) % vs.len()];
        let e = b - a;
        let len = e.norm().max(1e-300);
        (e.x * (p.y - a.y) - e.y * (p.x - a.x)) / len >= -tol
    })
}

/// Cell centres of an `n × n` grid over the bounding box of `region` that lie
/// in the region and on the allowed side of every plane.
pub fn grid_feasible(region: &ConvexPolygon, planes: &[OrcaPlane], n: usize) -> Vec<Vec2> {
    let (lo, hi) = region.bounding_box();
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let u = Vec2::new(
                lo.x + (hi.x - lo.x) * (i as f64 + 0.5) / n as f64,
                lo.y + (hi.y - lo.y) * (j as f64 + 0.5) / n as f64,
            );
            if inside_by_edges(region, u, 0.0)
                && planes.iter().all(|p| (u - p.point).dot(p.normal) >= 0.0)
            {
                out.push(u);
            }
        }
    }
    out
}

/// Feasible grid cell nearest `target`, as `(point, distance)`.
pub fn grid_argmin(
    region: &ConvexPolygon,
    planes: &[OrcaPlane],
    target: Vec2,
    n: usize,
) -> Option<(Vec2, f64)> {
    grid_feasible(region, planes, n)
        .into_iter()
        .map(|u| (u, u.distance(target)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Dense forward pass from the raw weight arrays.
pub fn mlp_oracle(policy: &MlpPolicy, obs: &[f64]) -> Vec<f64> {
    let mut x = obs.to_vec();
    for l in &policy.layers {
        let mut y = vec![0.0; l.output];
        for (o, yo) in y.iter_mut().enumerate() {
            let mut s = l.bias[o];
            for (i, xi) in x.iter().enumerate() {
                s += l.weights[o * l.input + i] * xi;
            }
            *yo = match l.activation {
                Activation::Relu => s.max(0.0),
                Activation::Tanh => s.tanh(),
            };
        }
        x = y;
    }
    x
}

/// Rectangle overlap decided by sampling points every `spacing` along each
/// perimeter and across each body, testing strict interior membership.
pub fn rect_overlap_sampled(
    a: (Vec2, f64, f64, f64),
    b: (Vec2, f64, f64, f64),
    spacing: f64,
) -> bool {
    let inside = |p: Vec2, (c, h, l, w): (Vec2, f64, f64, f64)| {
        let d = (p - c).rotate(-h);
        d.x.abs() < l / 2.0 && d.y.abs() < w / 2.0
    };
    let hits = |(c, h, l, w): (Vec2, f64, f64, f64), other| {
        let nl = (l / spacing).ceil() as usize;
        let nw = (w / spacing).ceil() as usize;
        let at = |sx: f64, sy: f64| c + Vec2::new(sx * l / 2.0, sy * w / 2.0).rotate(h);
        (0..=nl).any(|i| {
            let sx = -1.0 + 2.0 * i as f64 / nl as f64;
            inside(at(sx, 1.0), other) || inside(at(sx, -1.0), other) || inside(at(sx, 0.0), other)
        }) || (0..=nw).any(|j| {
            let sy = -1.0 + 2.0 * j as f64 / nw as f64;
            inside(at(1.0, sy), other) || inside(at(-1.0, sy), other)
        })
    };
    hits(a, b) || hits(b, a)
}

/// Signed separation of two rectangles along the best of their four axes;
/// negative means penetration.
pub fn rect_separation(a: (Vec2, f64, f64, f64), b: (Vec2, f64, f64, f64)) -> f64 {
    let corners = |(c, h, l, w): (Vec2, f64, f64, f64)| {
        [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)]
            .map(|(sx, sy)| c + Vec2::new(sx * l / 2.0, sy * w / 2.0).rotate(h))
    };
    let (ca, cb) = (corners(a), corners(b));
    let axes = [
        Vec2::from_polar(1.0, a.1),
        Vec2::from_polar(1.0, a.1).perp(),
        Vec2::from_polar(1.0, b.1),
        Vec2::from_polar(1.0, b.1).perp(),
    ];
    axes.iter()
        .map(|ax| {
            let pa = ca.iter().map(|p| p.dot(*ax));
            let pb = cb.iter().map(|p| p.dot(*ax));
            let (amin, amax) = pa.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            let (bmin, bmax) = pb.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
            (bmin - amax).max(amin - bmax)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
