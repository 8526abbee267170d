//! Deterministic multi-lane highway: straight road, IDM traffic with lane
//! keeping, optional crashed vehicles, collision detection and the safe set.
//!
//! Coordinates: `x` runs along the road, `y` across it with lane `i` centred
//! at `(i + 0.5)·lane_width`. Lane 0 is the rightmost lane; heading 0 points
//! down the road.

mod collision;
mod idm;
mod reward;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;
use crate::vehicle_dynamics::{step_bicycle, ControlAction, KinematicLimits, VehicleState};

pub use collision::{rects_overlap, OrientedRect};
pub use idm::{idm_acceleration, IdmParams, Leader};
pub use reward::{step_reward, RewardConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("cannot place {wanted} vehicles with {min_gap} m spacing (placed {placed})")]
    Infeasible {
        wanted: usize,
        placed: usize,
        min_gap: f64,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoadGeometry {
    pub lane_count: usize,
    pub lane_width: f64,
    pub length: f64,
}

impl Default for RoadGeometry {
    fn default() -> Self {
        Self {
            lane_count: 3,
            lane_width: 2.5,
            length: 5000.0,
        }
    }
}

impl RoadGeometry {
    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    pub fn width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }

    /// Lane whose strip contains `y`, if any.
    pub fn lane_of(&self, y: f64) -> Option<usize> {
        if y < 0.0 || y >= self.width() {
            return None;
        }
        Some(((y / self.lane_width).floor() as usize).min(self.lane_count - 1))
    }
}

/// Static parameters every world carries so stepping is self-contained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    pub road: RoadGeometry,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub ego_limits: KinematicLimits,
    pub obstacle_limits: KinematicLimits,
    /// Obstacles farther than this from the ego (longitudinally) respawn.
    pub despawn_distance: f64,
    pub min_spawn_gap: f64,
    pub obstacle_speed: f64,
    pub lane_keep_gain_y: f64,
    pub lane_keep_gain_heading: f64,
    /// Cap on the heading reference of obstacle lane keeping.
    pub lane_keep_max_heading: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            road: RoadGeometry::default(),
            vehicle_length: 5.0,
            vehicle_width: 2.0,
            ego_limits: KinematicLimits::ego(),
            obstacle_limits: KinematicLimits {
                max_accel: 6.0,
                max_steer: 0.02,
                wheelbase: 2.5,
                v_max: 20.0,
            },
            despawn_distance: 200.0,
            min_spawn_gap: 15.0,
            obstacle_speed: 15.0,
            lane_keep_gain_y: 0.08,
            lane_keep_gain_heading: 1.0,
            lane_keep_max_heading: 0.08,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleVehicle {
    pub state: VehicleState,
    pub length: f64,
    pub width: f64,
    pub idm: IdmParams,
    pub crashed: bool,
    /// Lane the vehicle keeps.
    pub lane: usize,
}

impl ObstacleVehicle {
    pub fn footprint(&self) -> OrientedRect {
        OrientedRect::new(
            self.state.position(),
            self.state.heading,
            self.length,
            self.width,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub ego: VehicleState,
    pub obstacles: Vec<ObstacleVehicle>,
    pub time: f64,
    pub step_index: usize,
    pub rng_seed: u64,
    pub respawn_count: u64,
    pub params: WorldParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lane_changes: Vec<LaneChange>,
}

impl WorldState {
    pub fn ego_footprint(&self) -> OrientedRect {
        OrientedRect::new(
            self.ego.position(),
            self.ego.heading,
            self.params.vehicle_length,
            self.params.vehicle_width,
        )
    }

    /// Centre-to-centre distance from the ego to the nearest obstacle.
    pub fn min_distance(&self) -> Option<f64> {
        self.obstacles
            .iter()
            .map(|o| o.state.position().distance(self.ego.position()))
            .min_by(f64::total_cmp)
    }

    pub fn ego_lane(&self) -> Option<usize> {
        self.params.road.lane_of(self.ego.y)
    }
}

/// Scripted lane change: obstacle `vehicle` (spawn index) switches its
/// lane-keeping target to `lane` once the world clock reaches `at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneChange {
    pub vehicle: usize,
    pub at: f64,
    pub lane: usize,
}

/// Placement of one stationary vehicle relative to the ego's start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrashedPlacement {
    pub lane: usize,
    pub ahead: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrafficConfig {
    /// Vehicles per lane in the spawn window.
    pub density: f64,
    pub crashed_count: usize,
    /// Explicit crashed-vehicle placements; when empty, `crashed_count`
    /// vehicles are lined up in the ego lane from `crash_distance` on.
    pub crashed: Vec<CrashedPlacement>,
    pub crash_distance: f64,
    pub crash_spacing: f64,
    pub spawn_behind: f64,
    pub spawn_ahead: f64,
    pub idm: IdmParams,
    pub ego_lane: usize,
    pub ego_speed: f64,
    pub ego_x: f64,
    /// Opt-in obstacle lane changes; none by default.
    pub lane_changes: Vec<LaneChange>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            density: 1.0,
            crashed_count: 0,
            crashed: Vec::new(),
            crash_distance: 60.0,
            crash_spacing: 15.0,
            spawn_behind: 40.0,
            spawn_ahead: 160.0,
            idm: IdmParams::default(),
            ego_lane: 1,
            ego_speed: 20.0,
            ego_x: 500.0,
            lane_changes: Vec::new(),
        }
    }
}

impl TrafficConfig {
    fn crashed_placements(&self) -> Vec<CrashedPlacement> {
        if !self.crashed.is_empty() {
            return self.crashed.clone();
        }
        (0..self.crashed_count)
            .map(|i| CrashedPlacement {
                lane: self.ego_lane,
                ahead: self.crash_distance + self.crash_spacing * i as f64,
            })
            .collect()
    }
}

const PLACEMENT_ATTEMPTS: usize = 4000;

/// A moving vehicle entering at `pos` keeps `min_spawn_gap` to everyone and,
/// behind a crashed vehicle in its lane, room to stop at full braking.
fn spawn_clear(
    params: &WorldParams,
    others: &[ObstacleVehicle],
    skip: Option<usize>,
    pos: Vec2,
    speed: f64,
) -> bool {
    let stop = speed * speed / (2.0 * params.obstacle_limits.max_accel)
        + params.vehicle_length
        + params.min_spawn_gap;
    others.iter().enumerate().all(|(j, q)| {
        if Some(j) == skip {
            return true;
        }
        let qp = q.state.position();
        let dx = qp.x - pos.x;
        let same_lane = (qp.y - pos.y).abs() < params.vehicle_width;
        qp.distance(pos) >= params.min_spawn_gap
            && !(q.crashed && same_lane && dx >= 0.0 && dx < stop)
    })
}

/// Builds the initial world. `round(density · lane_count)` vehicles are
/// placed (crashed ones included) with centre spacing of at least
/// `min_spawn_gap` to every other vehicle and the ego.
pub fn spawn_scenario(
    params: &WorldParams,
    traffic: &TrafficConfig,
    seed: u64,
) -> Result<WorldState, ScenarioError> {
    let road = &params.road;
    if road.lane_count < 2 {
        return Err(ScenarioError::Invalid("at least two lanes required".into()));
    }
    if !(traffic.density.is_finite() && traffic.density >= 0.0) {
        return Err(ScenarioError::Invalid(format!(
            "density must be non-negative, got {}",
            traffic.density
        )));
    }
    if traffic.ego_lane >= road.lane_count {
        return Err(ScenarioError::Invalid("ego lane outside road".into()));
    }
    if !traffic.idm.is_valid() {
        return Err(ScenarioError::Invalid(
            "IDM parameters must be positive".into(),
        ));
    }
    let crashed = traffic.crashed_placements();
    if crashed.iter().any(|c| c.lane >= road.lane_count) {
        return Err(ScenarioError::Invalid(
            "crashed vehicle lane outside road".into(),
        ));
    }

    if traffic
        .lane_changes
        .iter()
        .any(|c| c.lane >= road.lane_count || !c.at.is_finite())
    {
        return Err(ScenarioError::Invalid(
            "lane change outside road or at non-finite time".into(),
        ));
    }

    let ego = VehicleState::new(
        traffic.ego_x,
        road.lane_center(traffic.ego_lane),
        traffic.ego_speed.clamp(0.0, params.ego_limits.v_max),
        0.0,
    );
    let total = ((traffic.density * road.lane_count as f64).round() as usize).max(crashed.len());

    let make = |x: f64, lane: usize, speed: f64, crashed: bool| ObstacleVehicle {
        state: VehicleState::new(x, road.lane_center(lane), speed, 0.0),
        length: params.vehicle_length,
        width: params.vehicle_width,
        idm: traffic.idm,
        crashed,
        lane,
    };
    let mut obstacles: Vec<ObstacleVehicle> = crashed
        .iter()
        .map(|c| make(ego.x + c.ahead, c.lane, 0.0, true))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while obstacles.len() < total {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let lane = rng.random_range(0..road.lane_count);
            let x = rng.random_range(ego.x - traffic.spawn_behind..=ego.x + traffic.spawn_ahead);
            let p = Vec2::new(x, road.lane_center(lane));
            let clear = p.distance(ego.position()) >= params.min_spawn_gap
                && spawn_clear(params, &obstacles, None, p, params.obstacle_speed);
            if clear {
                obstacles.push(make(x, lane, params.obstacle_speed, false));
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(ScenarioError::Infeasible {
                wanted: total,
                placed: obstacles.len(),
                min_gap: params.min_spawn_gap,
            });
        }
    }
    if let Some(c) = traffic
        .lane_changes
        .iter()
        .find(|c| c.vehicle >= obstacles.len())
    {
        return Err(ScenarioError::Invalid(format!(
            "lane change for vehicle {} but only {} spawned",
            c.vehicle,
            obstacles.len()
        )));
    }

    Ok(WorldState {
        ego,
        obstacles,
        time: 0.0,
        step_index: 0,
        rng_seed: seed,
        respawn_count: 0,
        params: *params,
        lane_changes: traffic.lane_changes.clone(),
    })
}

/// Vehicle directly ahead of obstacle `idx` in its lane (ego included).
fn leader_of(world: &WorldState, idx: usize) -> Option<Leader> {
    let me = &world.obstacles[idx];
    let lateral_overlap = |y: f64, w: f64| (y - me.state.y).abs() < (me.width + w) / 2.0;
    let ego_len = world.params.vehicle_length;
    let ego_w = world.params.vehicle_width;
    let others = world
        .obstacles
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != idx)
        .map(|(_, o)| (o.state.x, o.state.y, o.state.speed, o.length, o.width))
        .chain(std::iter::once((
            world.ego.x,
            world.ego.y,
            world.ego.speed,
            ego_len,
            ego_w,
        )));
    others
        .filter(|&(x, y, _, _, w)| x > me.state.x && lateral_overlap(y, w))
        .map(|(x, _, speed, len, _)| Leader {
            gap: x - me.state.x - (me.length + len) / 2.0,
            speed,
        })
        .min_by(|a, b| a.gap.total_cmp(&b.gap))
}

/// Nominal obstacle behaviour: IDM longitudinally; laterally a capped heading
/// reference from the lane offset, tracked proportionally. Frozen when crashed.
pub fn nominal_obstacle_action(world: &WorldState, idx: usize) -> ControlAction {
    let o = &world.obstacles[idx];
    let p = &world.params;
    let accel = idm_acceleration(o, leader_of(world, idx));
    let lane_y = p.road.lane_center(o.lane);
    let h = p.lane_keep_max_heading;
    let heading_ref = (p.lane_keep_gain_y * (lane_y - o.state.y)).clamp(-h, h);
    let steer = p.lane_keep_gain_heading * (heading_ref - o.state.heading);
    ControlAction::new(accel, steer).clamped(&p.obstacle_limits)
}

/// Per-obstacle behaviour override used by reachability and sampling code.
pub type BehaviorFn<'a> = dyn FnMut(usize, &WorldState) -> Option<ControlAction> + 'a;

/// Advances the world one step under `ego_action`.
pub fn step_world(world: &WorldState, ego_action: ControlAction, dt: f64) -> WorldState {
    step_world_with(world, ego_action, dt, &mut |_, _| None, true)
}

/// Like [`step_world`], but `behavior` may replace the nominal action of any
/// obstacle, and respawning can be disabled.
pub fn step_world_with(
    world: &WorldState,
    ego_action: ControlAction,
    dt: f64,
    behavior: &mut BehaviorFn<'_>,
    respawn: bool,
) -> WorldState {
    let p = world.params;
    let ego_action = ego_action.clamped(&p.ego_limits);
    let ego = step_bicycle(&world.ego, ego_action, &p.ego_limits, dt).unwrap_or(world.ego);

    let obstacles = world
        .obstacles
        .iter()
        .enumerate()
        .map(|(i, o)| {
            if o.crashed {
                return *o;
            }
            let action = behavior(i, world).unwrap_or_else(|| nominal_obstacle_action(world, i));
            let state = step_bicycle(&o.state, action, &p.obstacle_limits, dt).unwrap_or(o.state);
            ObstacleVehicle { state, ..*o }
        })
        .collect();

    let mut next = WorldState {
        ego,
        obstacles,
        time: world.time + dt,
        step_index: world.step_index + 1,
        rng_seed: world.rng_seed,
        respawn_count: world.respawn_count,
        params: p,
        lane_changes: world.lane_changes.clone(),
    };
    apply_lane_changes(&mut next);
    if respawn {
        respawn_far_obstacles(&mut next);
    }
    next
}

/// Each vehicle follows its latest due lane change one lane at a time, once
/// settled in its current lane and while no other vehicle (ego included) is
/// within `min_spawn_gap` in the next lane.
fn apply_lane_changes(world: &mut WorldState) {
    let p = world.params;
    for i in 0..world.obstacles.len() {
        let Some(c) = world
            .lane_changes
            .iter()
            .filter(|c| c.vehicle == i && c.at <= world.time + 1e-9)
            .max_by(|a, b| a.at.total_cmp(&b.at))
        else {
            continue;
        };
        let o = world.obstacles[i];
        let settled = (o.state.y - p.road.lane_center(o.lane)).abs() < 0.3;
        if o.crashed || o.lane == c.lane || !settled {
            continue;
        }
        let step_lane = if c.lane > o.lane {
            o.lane + 1
        } else {
            o.lane - 1
        };
        let target_y = p.road.lane_center(step_lane);
        let near = |x: f64, y: f64| {
            (y - target_y).abs() < p.road.lane_width / 2.0 + p.vehicle_width / 2.0
                && (x - o.state.x).abs() < p.min_spawn_gap
        };
        let blocked = near(world.ego.x, world.ego.y)
            || world
                .obstacles
                .iter()
                .enumerate()
                .any(|(j, q)| j != i && near(q.state.x, q.state.y));
        if !blocked {
            world.obstacles[i].lane = step_lane;
        }
    }
}

fn respawn_far_obstacles(world: &mut WorldState) {
    let p = world.params;
    for i in 0..world.obstacles.len() {
        let o = world.obstacles[i];
        let dx = o.state.x - world.ego.x;
        if o.crashed || dx.abs() <= p.despawn_distance {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(
            world.rng_seed
                ^ (world.respawn_count.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15),
        );
        world.respawn_count += 1;
        // Re-enter at the opposite horizon.
        let x = world.ego.x - dx.signum() * (p.despawn_distance - 1.0);
        let lane = rng.random_range(0..p.road.lane_count);
        let pos = Vec2::new(x, p.road.lane_center(lane));
        let clear = spawn_clear(&p, &world.obstacles, Some(i), pos, p.obstacle_speed);
        if clear {
            world.obstacles[i] = ObstacleVehicle {
                state: VehicleState::new(x, pos.y, p.obstacle_speed, 0.0),
                lane,
                ..o
            };
        }
    }
}

/// Any pair of footprints overlapping, or the ego centre leaving the road.
pub fn check_collision(world: &WorldState) -> bool {
    let y = world.ego.y;
    if y < 0.0 || y > world.params.road.width() {
        return true;
    }
    any_overlap(world, 0.0, 0.0)
}

fn any_overlap(world: &WorldState, dl: f64, dw: f64) -> bool {
    let rects: Vec<OrientedRect> = std::iter::once(world.ego_footprint())
        .chain(world.obstacles.iter().map(|o| o.footprint()))
        .map(|r| r.inflated(dl, dw))
        .collect();
    (0..rects.len()).any(|i| {
        (i + 1..rects.len()).any(|j| {
            let (a, b) = (&rects[i], &rects[j]);
            // Cheap reject before the exact test.
            let reach = (a.length + a.width + b.length + b.width) / 2.0;
            a.center.distance(b.center) < reach && rects_overlap(a, b)
        })
    })
}

/// The safe set: spacing between vehicles and road-bound containment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SafeSetSpec {
    /// Ego centre must stay this far inside the road edges.
    pub lateral_margin: f64,
    /// Required longitudinal clearance between footprints.
    pub min_separation: f64,
    /// Required side-to-side clearance between footprints.
    pub lateral_separation: f64,
}

impl Default for SafeSetSpec {
    fn default() -> Self {
        Self {
            lateral_margin: 0.25,
            min_separation: 1.0,
            lateral_separation: 0.2,
        }
    }
}

impl SafeSetSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.min_separation > 0.0) {
            return Err("min_separation must be positive".into());
        }
        if !(self.lateral_margin >= 0.0 && self.lateral_separation >= 0.0) {
            return Err("safe-set margins must be non-negative".into());
        }
        Ok(())
    }
}

pub fn in_safe_set(world: &WorldState, spec: &SafeSetSpec) -> bool {
    let y = world.ego.y;
    let w = world.params.road.width();
    if y < spec.lateral_margin || y > w - spec.lateral_margin {
        return false;
    }
    !any_overlap(
        world,
        spec.min_separation / 2.0,
        spec.lateral_separation / 2.0,
    )
}

/// Ego centred on `lane` within 0.3 m and aligned within 0.1 rad.
pub fn at_lane_center(world: &WorldState, lane: usize) -> bool {
    (world.ego.y - world.params.road.lane_center(lane)).abs() < 0.3 && world.ego.heading.abs() < 0.1
}
