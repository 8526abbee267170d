//! Velocity-obstacle baseline controller for car-like vehicles.
//!
//! Each nearby obstacle contributes a truncated velocity-obstacle cone,
//! dilated by the obstacle's reachable velocity set. The ego velocity is
//! pushed out of every such region by one half-plane constraint; the
//! preferred velocity is then projected onto the intersection of those
//! half-planes with the ego's own reachable set. If the intersection is
//! empty a deterministic weighted grid search takes over.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Controller;
use crate::geometry::{ConvexPolygon, Vec2, GEOM_EPS};
use crate::highway_env::WorldState;
use crate::vehicle_dynamics::{
    reachable_velocity_set, velocity_to_action, ControlAction, VehicleState, VelocityRegion,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrcaError {
    #[error("vehicles already overlap: distance {distance} <= combined radius {radius}")]
    Overlap { distance: f64, radius: f64 },
    #[error("invalid velocity obstacle: {0}")]
    Invalid(&'static str),
    #[error("invalid controller config: {0}")]
    Config(String),
}

/// Radius of the smallest circle enclosing a `length × width` rectangle.
pub fn bounding_radius(length: f64, width: f64) -> f64 {
    ((length / 2.0).powi(2) + (width / 2.0).powi(2)).sqrt()
}

/// Velocity obstacle of a disc of radius `radius` at relative position
/// `rel_position`, truncated at `horizon`, as a convex polygon in relative
/// velocity space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityObstacle {
    pub rel_position: Vec2,
    pub radius: f64,
    pub horizon: f64,
    pub region: VelocityRegion,
}

/// Relative speeds beyond this are outside every VO polygon.
pub const VO_FAR_SPEED: f64 = 100.0;

/// Builds the VO polygon: the cutoff disc (centre `P/τ`, radius `r/τ`) as a
/// circumscribed `m`-gon, hulled with the two tangent legs extended until
/// their chord lies [`VO_FAR_SPEED`] from the apex.
pub fn velocity_obstacle(
    rel_position: Vec2,
    radius: f64,
    horizon: f64,
    m: usize,
) -> Result<VelocityObstacle, OrcaError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(OrcaError::Invalid("radius must be positive"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(OrcaError::Invalid("horizon must be positive"));
    }
    if !rel_position.is_finite() {
        return Err(OrcaError::Invalid("non-finite relative position"));
    }
    let distance = rel_position.norm();
    if distance <= radius {
        return Err(OrcaError::Overlap { distance, radius });
    }
    let dir = rel_position / distance;
    let alpha = (radius / distance).asin();
    let leg = VO_FAR_SPEED / alpha.cos();
    let mut pts: Vec<Vec2> =
        ConvexPolygon::circumscribed_circle(rel_position / horizon, radius / horizon, m.max(8))
            .vertices()
            .to_vec();
    pts.push(dir.rotate(alpha) * leg);
    pts.push(dir.rotate(-alpha) * leg);
    let region = ConvexPolygon::hull(&pts).expect("non-empty");
    Ok(VelocityObstacle {
        rel_position,
        radius,
        horizon,
        region,
    })
}

pub fn minkowski_sum(a: &VelocityRegion, b: &VelocityRegion) -> VelocityRegion {
    a.minkowski_sum(b)
}

/// Smallest change taking `v` out of `region`, zero if `v` is already
/// outside. Equidistant exits are resolved toward `prefer`.
pub fn min_exit_change(region: &VelocityRegion, v: Vec2, prefer: Vec2) -> Vec2 {
    exit_with_normal(region, v, prefer).map_or(Vec2::ZERO, |(dv, _)| dv)
}

fn exit_with_normal(region: &VelocityRegion, v: Vec2, prefer: Vec2) -> Option<(Vec2, Vec2)> {
    if !strictly_inside(region, v) {
        return None;
    }
    let (q, normal) = region.closest_boundary_point(v, prefer);
    Some((q - v, normal))
}

fn strictly_inside(region: &VelocityRegion, v: Vec2) -> bool {
    let vs = region.vertices();
    if vs.len() < 3 {
        return false;
    }
    (0..vs.len()).all(|i| {
        let a = vs[i];
        let b = vs[(i + 1) % vs.len()];
        (b - a).cross(v - a) > 0.0
    })
}

/// Half-plane `{v : (v − point)·normal ≥ 0}` in ego velocity space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrcaPlane {
    pub point: Vec2,
    pub normal: Vec2,
    pub dv: Vec2,
    /// Index of the obstacle that produced the plane.
    pub obstacle: usize,
}

impl OrcaPlane {
    /// Signed distance of `v` into the allowed side.
    pub fn signed_distance(&self, v: Vec2) -> f64 {
        (v - self.point).dot(self.normal)
    }

    pub fn allows(&self, v: Vec2, tol: f64) -> bool {
        self.signed_distance(v) >= -tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BcConfig {
    /// VO horizon τ.
    pub tau: f64,
    /// Prediction period; the plan is recomputed this often.
    pub dt: f64,
    pub w_orca: f64,
    pub w_current: f64,
    /// Fallback grid is `grid × grid` over V_A's bounding box.
    pub grid: usize,
    pub arc_segments: usize,
    pub sensing_radius: f64,
    /// Added to the sum of bounding radii.
    pub radius_margin: f64,
    /// Half-angle of the admissible heading cone about the road axis.
    pub heading_cone: f64,
    /// Time within which the road-bound planes must keep the ego on the road.
    pub road_horizon: f64,
    /// Distance the road-bound planes keep the ego centre from each edge.
    pub road_margin: f64,
    /// Weight of the target-lane direction in the preferred heading.
    pub lane_blend: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self {
            tau: 2.0,
            dt: 0.5,
            w_orca: 0.7,
            w_current: 0.3,
            grid: 16,
            arc_segments: 16,
            sensing_radius: 60.0,
            radius_margin: 0.5,
            heading_cone: 0.25,
            road_horizon: 0.5,
            road_margin: 0.4,
            lane_blend: 0.2,
        }
    }
}

impl BcConfig {
    pub fn sample_count(&self) -> usize {
        self.grid * self.grid
    }

    pub fn validate(&self) -> Result<(), OrcaError> {
        let bad = |m: &str| Err(OrcaError::Config(m.to_string()));
        if (self.w_orca + self.w_current - 1.0).abs() > 1e-9 {
            return bad("w_orca + w_current must equal 1");
        }
        if self.w_orca < 0.0 || self.w_current < 0.0 {
            return bad("weights must be non-negative");
        }
        if self.sample_count() < 64 {
            return bad("fallback needs at least 64 samples");
        }
        for (v, name) in [
            (self.tau, "tau"),
            (self.dt, "dt"),
            (self.sensing_radius, "sensing_radius"),
            (self.road_horizon, "road_horizon"),
            (self.road_margin, "road_margin"),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.radius_margin >= 0.0) || !(0.0..=1.0).contains(&self.lane_blend) {
            return bad("radius_margin or lane_blend out of range");
        }
        Ok(())
    }
}

/// Combined-region record for one obstacle, kept for plan dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionRegion {
    pub obstacle: usize,
    /// `None` when the vehicles already overlap and a braking plane is used.
    pub region: Option<VelocityRegion>,
}

/// Builds one plane per sensed obstacle whose combined region contains the
/// current ego velocity. Also returns the combined regions.
pub fn build_orca_planes_detailed(
    world: &WorldState,
    cfg: &BcConfig,
) -> (Vec<OrcaPlane>, Vec<CollisionRegion>) {
    let p = &world.params;
    let ego = &world.ego;
    let v_a = ego.velocity();
    let r_a = bounding_radius(p.vehicle_length, p.vehicle_width);
    let mut planes = Vec::new();
    let mut regions = Vec::new();
    for (i, o) in world.obstacles.iter().enumerate() {
        let rel = o.state.position() - ego.position();
        if rel.norm() > cfg.sensing_radius {
            continue;
        }
        let r = r_a + bounding_radius(o.length, o.width) + cfg.radius_margin;
        let v_b = o.state.velocity();
        let away = -rel.normalized().unwrap_or(Vec2::new(1.0, 0.0));
        match velocity_obstacle(rel, r, cfg.tau, cfg.arc_segments) {
            Err(_) => {
                // Inside the bounding discs: forbid closing along the road
                // axis on which the bodies are currently farther apart.
                let gx = rel.x.abs() - (p.vehicle_length + o.length) / 2.0;
                let gy = rel.y.abs() - (p.vehicle_width + o.width) / 2.0;
                let normal = if gx >= gy {
                    Vec2::new(-rel.x.signum(), 0.0)
                } else {
                    Vec2::new(0.0, -rel.y.signum())
                };
                planes.push(OrcaPlane {
                    point: v_b,
                    normal,
                    dv: v_b - v_a,
                    obstacle: i,
                });
                regions.push(CollisionRegion {
                    obstacle: i,
                    region: None,
                });
            }
            Ok(vo) => {
                let reach_b = if o.crashed {
                    ConvexPolygon::point(Vec2::ZERO)
                } else {
                    let set = reachable_velocity_set(&o.state, &p.obstacle_limits, cfg.dt)
                        .unwrap_or_else(|_| ConvexPolygon::point(v_b));
                    // Traffic speeds up no faster than its own IDM limit.
                    let fwd = Vec2::from_polar(1.0, o.state.heading);
                    let cap = fwd * (o.state.speed + o.idm.max_accel * cfg.dt);
                    set.clip(cap, fwd * -1.0).unwrap_or(set)
                };
                let ca = minkowski_sum(&vo.region, &reach_b);
                if let Some((dv, edge_normal)) = exit_with_normal(&ca, v_a, away) {
                    let normal = dv.normalized().unwrap_or(edge_normal);
                    planes.push(OrcaPlane {
                        point: v_a + dv,
                        normal,
                        dv,
                        obstacle: i,
                    });
                }
                regions.push(CollisionRegion {
                    obstacle: i,
                    region: Some(ca),
                });
            }
        }
    }
    (planes, regions)
}

pub fn build_orca_planes(world: &WorldState, cfg: &BcConfig) -> Vec<OrcaPlane> {
    build_orca_planes_detailed(world, cfg).0
}

/// Ego reachable velocities restricted to the heading cone and the road-bound
/// planes. Each restriction is skipped if it would empty the set.
pub fn admissible_velocities(world: &WorldState, cfg: &BcConfig) -> VelocityRegion {
    let p = &world.params;
    let ego = &world.ego;
    let mut region = reachable_velocity_set(ego, &p.ego_limits, cfg.dt)
        .unwrap_or_else(|_| ConvexPolygon::point(ego.velocity()));
    let c = cfg.heading_cone;
    let margin = cfg.road_margin;
    let y_hi = p.road.width() - margin;
    // Lateral travel over the held period is the mean of the current and
    // final lateral speeds; after it the ego needs `road_horizon` to settle.
    let vy0 = ego.velocity().y;
    let span = cfg.dt / 2.0 + cfg.road_horizon;
    let half = cfg.dt / 2.0;
    let up = y_hi - ego.y - half * vy0;
    let down = margin - ego.y - half * vy0;
    let mut vy_max = (up / half).min(up / span);
    let mut vy_min = (down / half).max(down / span);
    // Lateral speed changes about linearly over the period. When it has to
    // reverse before an edge, the mid-period peak `vy0² dt / (2 (vy0 − vy1))`
    // is what must fit.
    let gap_hi = y_hi - ego.y;
    if vy0 > 0.0 && gap_hi > 0.0 {
        let cap = vy0 - vy0 * vy0 * cfg.dt / (2.0 * gap_hi);
        if cap < 0.0 {
            vy_max = vy_max.min(cap);
        }
    }
    let gap_lo = ego.y - margin;
    if vy0 < 0.0 && gap_lo > 0.0 {
        let cap = vy0 + vy0 * vy0 * cfg.dt / (2.0 * gap_lo);
        if cap > 0.0 {
            vy_min = vy_min.max(cap);
        }
    }
    // Inside the cone the annulus lies beyond the chord of its inner arc.
    let lim = &p.ego_limits;
    let s_lo = (ego.speed.clamp(0.0, lim.v_max) - lim.max_accel * cfg.dt).max(0.0);
    let cuts = [
        (Vec2::ZERO, Vec2::new(c.sin(), -c.cos())),
        (Vec2::new(s_lo * c.cos(), 0.0), Vec2::new(1.0, 0.0)),
        (Vec2::ZERO, Vec2::new(c.sin(), c.cos())),
        (Vec2::new(0.0, vy_max), Vec2::new(0.0, -1.0)),
        (Vec2::new(0.0, vy_min), Vec2::new(0.0, 1.0)),
    ];
    for (point, normal) in cuts {
        if let Some(clipped) = region.clip(point, normal) {
            region = clipped;
        }
    }
    region
}

/// Point of `V_A ∩ planes` closest to `v_pref`, or `None` if empty.
pub fn solve_optimal(v_a: &VelocityRegion, planes: &[OrcaPlane], v_pref: Vec2) -> Option<Vec2> {
    let mut region = v_a.clone();
    for pl in planes {
        region = region.clip(pl.point, pl.normal)?;
    }
    Some(region.project(v_pref))
}

/// Deterministic grid points of `V_A` (bounding-box grid filtered to the
/// region; the vertices if no grid point falls inside).
pub fn fallback_samples(v_a: &VelocityRegion, grid: usize) -> Vec<Vec2> {
    let (lo, hi) = v_a.bounding_box();
    let g = grid.max(2);
    let mut out = Vec::with_capacity(g * g);
    for j in 0..g {
        for i in 0..g {
            let u = Vec2::new(
                lo.x + (hi.x - lo.x) * i as f64 / (g - 1) as f64,
                lo.y + (hi.y - lo.y) * j as f64 / (g - 1) as f64,
            );
            if v_a.contains(u, 1e-12) {
                out.push(u);
            }
        }
    }
    if out.is_empty() {
        out = v_a.vertices().to_vec();
    }
    out
}

/// Weight of one fallback candidate: slack to every plane (negative when
/// violated) plus a closeness bonus to the current velocity.
pub fn fallback_weight(u: Vec2, planes: &[OrcaPlane], v_current: Vec2, cfg: &BcConfig) -> f64 {
    let slack: f64 = planes
        .iter()
        .map(|p| cfg.w_orca * p.signed_distance(u))
        .sum();
    slack - cfg.w_current * u.distance(v_current)
}

/// Highest-weight candidate; ties go to the one nearer `v_current`, then to
/// the lower index.
pub fn select_weighted(
    samples: &[Vec2],
    planes: &[OrcaPlane],
    v_current: Vec2,
    cfg: &BcConfig,
) -> Option<Vec2> {
    let mut best: Option<(f64, f64, Vec2)> = None;
    for &u in samples {
        let w = fallback_weight(u, planes, v_current, cfg);
        let d = u.distance(v_current);
        let better = match best {
            None => true,
            Some((bw, bd, _)) => w > bw + 1e-12 || ((w - bw).abs() <= 1e-12 && d < bd - 1e-12),
        };
        if better {
            best = Some((w, d, u));
        }
    }
    best.map(|(_, _, u)| u)
}

pub fn fallback_weighted_sample(
    v_a: &VelocityRegion,
    planes: &[OrcaPlane],
    v_current: Vec2,
    cfg: &BcConfig,
) -> Vec2 {
    if v_a.len() == 1 {
        return v_a.vertices()[0];
    }
    let samples = fallback_samples(v_a, cfg.grid);
    select_weighted(&samples, planes, v_current, cfg).unwrap_or(v_current)
}

/// Highest speed at which every vehicle ahead in the ego's corridor stays
/// outside the velocity obstacle after braking hard for one period, with a
/// second period of its braking kept in reserve.
pub fn corridor_speed_cap(world: &WorldState, cfg: &BcConfig) -> f64 {
    let p = &world.params;
    let ego = &world.ego;
    let r_a = bounding_radius(p.vehicle_length, p.vehicle_width);
    let corridor = p.road.lane_width;
    world
        .obstacles
        .iter()
        .filter(|o| {
            let dx = o.state.x - ego.x;
            // Lateral offset now and after τ at the current lateral speeds.
            let dy = o.state.y - ego.y;
            let dy_tau = dy + (o.state.velocity().y - ego.velocity().y) * cfg.tau;
            let near = dy.abs() < corridor || dy_tau.abs() < corridor || dy * dy_tau < 0.0;
            dx > 0.0 && dx < cfg.sensing_radius && near
        })
        .map(|o| {
            let r = r_a + bounding_radius(o.length, o.width) + cfg.radius_margin;
            let dx = o.state.x - ego.x;
            let brake = if o.crashed {
                0.0
            } else {
                p.obstacle_limits.max_accel * cfg.dt
            };
            let closing = ((dx - r) / cfg.tau - brake).max(0.0);
            (o.state.speed - brake).max(0.0) + closing
        })
        .fold(f64::INFINITY, f64::min)
}

/// Preferred velocity: target speed along the current heading, bent toward
/// a lookahead point on the target-lane centreline.
pub fn preferred_velocity(
    ego: &VehicleState,
    target_y: f64,
    v_target: f64,
    v_max: f64,
    blend: f64,
) -> Vec2 {
    let speed = v_target.min(v_max);
    let lookahead = Vec2::new(ego.x + (2.0 * ego.speed).max(10.0), target_y);
    let to_lane = (lookahead - ego.position())
        .normalized()
        .unwrap_or(Vec2::new(1.0, 0.0));
    let heading = Vec2::from_polar(1.0, ego.heading);
    let dir = (heading * (1.0 - blend) + to_lane * blend)
        .normalized()
        .unwrap_or(heading);
    dir * speed
}

/// Everything computed at one replanning instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrcaPlan {
    pub time: f64,
    pub v_current: Vec2,
    pub v_pref: Vec2,
    pub admissible: VelocityRegion,
    pub regions: Vec<CollisionRegion>,
    pub planes: Vec<OrcaPlane>,
    pub v_opt: Vec2,
    /// True when the constrained optimum existed; false means the fallback chose `v_opt`.
    pub feasible: bool,
    pub action: ControlAction,
}

/// One full planning pass on `world`.
pub fn plan(world: &WorldState, cfg: &BcConfig, target_y: f64, v_target: f64) -> OrcaPlan {
    let ego = &world.ego;
    let limits = &world.params.ego_limits;
    let (planes, regions) = build_orca_planes_detailed(world, cfg);
    let admissible = admissible_velocities(world, cfg);
    let v_goal = v_target.min(corridor_speed_cap(world, cfg));
    let v_pref = preferred_velocity(ego, target_y, v_goal, limits.v_max, cfg.lane_blend);
    let v_current = ego.velocity();
    let (v_opt, feasible) = match solve_optimal(&admissible, &planes, v_pref) {
        Some(v) => (v, true),
        None => (
            fallback_weighted_sample(&admissible, &planes, v_current, cfg),
            false,
        ),
    };
    let action = velocity_to_action(ego, v_opt, limits, cfg.dt)
        .map(|s| s.action)
        .unwrap_or(ControlAction::new(-limits.max_accel, 0.0))
        .clamped(limits);
    OrcaPlan {
        time: world.time,
        v_current,
        v_pref,
        admissible,
        regions,
        planes,
        v_opt,
        feasible,
        action,
    }
}

/// The baseline controller. Replans every `cfg.dt` seconds of world time and
/// holds the action in between.
#[derive(Debug, Clone)]
pub struct OrcaDrive {
    pub cfg: BcConfig,
    pub target_lane: usize,
    pub v_target: f64,
    next_replan: Option<f64>,
    last: Option<OrcaPlan>,
    infeasible_count: usize,
}

impl OrcaDrive {
    pub fn new(cfg: BcConfig, target_lane: usize, v_target: f64) -> Result<Self, OrcaError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            target_lane,
            v_target,
            next_replan: None,
            last: None,
            infeasible_count: 0,
        })
    }

    pub fn last_plan(&self) -> Option<&OrcaPlan> {
        self.last.as_ref()
    }

    /// Replans since the last reset whose constrained optimum was empty.
    pub fn infeasible_count(&self) -> usize {
        self.infeasible_count
    }

    /// True when the next `control` call will replan.
    pub fn due(&self, world: &WorldState) -> bool {
        self.next_replan.is_none_or(|t| world.time >= t - 1e-9)
    }
}

impl Controller for OrcaDrive {
    fn name(&self) -> String {
        "orca".into()
    }

    fn control(&mut self, world: &WorldState) -> ControlAction {
        if self.due(world) || self.last.is_none() {
            let target_y = world.params.road.lane_center(self.target_lane);
            let pl = plan(world, &self.cfg, target_y, self.v_target);
            if !pl.feasible {
                self.infeasible_count += 1;
            }
            self.next_replan = Some(world.time + self.cfg.dt);
            self.last = Some(pl);
        }
        self.last.as_ref().map_or(ControlAction::ZERO, |p| p.action)
    }

    fn reset(&mut self) {
        self.next_replan = None;
        self.last = None;
        self.infeasible_count = 0;
    }

    fn boxed_clone(&self) -> Box<dyn Controller> {
        Box::new(self.clone())
    }

    fn infeasible_plans(&self) -> usize {
        self.infeasible_count
    }
}

/// Exact VO membership: `∃ t ∈ (0, τ] : ‖P − v·t‖ ≤ r`.
pub fn in_exact_vo(rel_position: Vec2, radius: f64, horizon: f64, v: Vec2) -> bool {
    // ‖P − v t‖² is a convex quadratic in t; check its minimum over (0, τ].
    let vv = v.norm_sq();
    let t_star = if vv > GEOM_EPS * GEOM_EPS {
        (rel_position.dot(v) / vv).clamp(0.0, horizon)
    } else {
        horizon
    };
    let t = if t_star <= 0.0 {
        f64::MIN_POSITIVE
    } else {
        t_star
    };
    (rel_position - v * t).norm() <= radius
}
