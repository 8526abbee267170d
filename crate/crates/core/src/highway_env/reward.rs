use serde::{Deserialize, Serialize};

use super::{at_lane_center, check_collision, WorldState};
use crate::vehicle_dynamics::ControlAction;

/// Reward constants. The total is
/// `r1·[arrived] + r2·[collision] + λ2·(v − v_target) + λ2·cos θ + r5·[violation]`
/// where `arrived` fires on the step the ego first settles on the target lane
/// centre and `violation` is `|θ| > π/4` or the ego body crossing a road edge.
/// `lambda1` is carried for completeness and not used by the default composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub r1: f64,
    pub r2: f64,
    pub r5: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub v_target: f64,
    pub target_lane: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            r1: 2.0,
            r2: -5.0,
            r5: -2.0,
            lambda1: -0.2,
            lambda2: 0.2,
            v_target: 20.0,
            target_lane: 2,
        }
    }
}

pub fn step_reward(
    prev: &WorldState,
    _action: ControlAction,
    next: &WorldState,
    cfg: &RewardConfig,
) -> f64 {
    let arrived = at_lane_center(next, cfg.target_lane) && !at_lane_center(prev, cfg.target_lane);
    let collided = check_collision(next);
    let (lo, hi) = next.ego_footprint().aabb();
    let off_road = lo.y < 0.0 || hi.y > next.params.road.width();
    let violation = next.ego.heading.abs() > std::f64::consts::FRAC_PI_4 || off_road;

    let mut r =
        cfg.lambda2 * (next.ego.speed - cfg.v_target) + cfg.lambda2 * next.ego.heading.cos();
    if arrived {
        r += cfg.r1;
    }
    if collided {
        r += cfg.r2;
    }
    if violation {
        r += cfg.r5;
    }
    if r.is_finite() {
        r
    } else {
        cfg.r2
    }
}
