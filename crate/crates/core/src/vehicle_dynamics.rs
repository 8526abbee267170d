//! Kinematic bicycle model (rear-axle reference) and its velocity-space
//! abstractions.
//!
//! State propagation uses fixed sub-steps of at most [`MAX_SUBSTEP`] seconds.
//! Within a sub-step the heading rate is evaluated at the sub-step's initial
//! speed and the position advances along the mid-step heading, which keeps a
//! constant-steer path on its turning circle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_angle, ConvexPolygon, Vec2};

pub use crate::geometry::ConvexPolygon as VelocityRegion;

/// Upper bound on the internal integration step, in seconds.
pub const MAX_SUBSTEP: f64 = 0.05;

/// Outward inflation applied to reachable velocity sets, m/s.
pub const REACH_INFLATION: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("time step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("invalid kinematic limits: {0}")]
    InvalidLimits(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
    pub heading: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, speed: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            speed,
            heading: wrap_angle(heading),
        }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_polar(self.speed, self.heading)
    }

    fn check_finite(&self) -> Result<(), DynamicsError> {
        if [self.x, self.y, self.speed, self.heading]
            .iter()
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(DynamicsError::NonFinite("vehicle state"))
        }
    }
}

/// Longitudinal acceleration (m/s²) and front-wheel steering angle (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlAction {
    pub accel: f64,
    pub steer: f64,
}

impl ControlAction {
    pub const ZERO: ControlAction = ControlAction {
        accel: 0.0,
        steer: 0.0,
    };

    pub fn new(accel: f64, steer: f64) -> Self {
        Self { accel, steer }
    }

    pub fn clamped(self, limits: &KinematicLimits) -> Self {
        let clamp_or_zero = |v: f64, lim: f64| {
            if v.is_finite() {
                v.clamp(-lim, lim)
            } else {
                0.0
            }
        };
        Self {
            accel: clamp_or_zero(self.accel, limits.max_accel),
            steer: clamp_or_zero(self.steer, limits.max_steer),
        }
    }

    pub fn within(&self, limits: &KinematicLimits) -> bool {
        self.accel.abs() <= limits.max_accel && self.steer.abs() <= limits.max_steer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KinematicLimits {
    pub max_accel: f64,
    pub max_steer: f64,
    pub wheelbase: f64,
    pub v_max: f64,
}

impl Default for KinematicLimits {
    fn default() -> Self {
        Self::ego()
    }
}

impl KinematicLimits {
    /// Ego vehicle: ±5 m/s², ±π/6 steering, 2.5 m wheelbase, 20 m/s top speed.
    pub fn ego() -> Self {
        Self {
            max_accel: 5.0,
            max_steer: PI / 6.0,
            wheelbase: 2.5,
            v_max: 20.0,
        }
    }

    /// Minimum turning radius `wheelbase / tan(max_steer)`.
    pub fn min_turn_radius(&self) -> f64 {
        self.wheelbase / self.max_steer.tan()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let all_positive = [self.max_accel, self.max_steer, self.wheelbase, self.v_max]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(DynamicsError::InvalidLimits(
                "all limits must be finite and positive",
            ));
        }
        if self.max_steer >= PI / 2.0 {
            return Err(DynamicsError::InvalidLimits("max_steer must be below π/2"));
        }
        Ok(())
    }
}

fn substeps(dt: f64) -> (usize, f64) {
    let n = (dt / MAX_SUBSTEP).ceil().max(1.0) as usize;
    (n, dt / n as f64)
}

fn check_step(dt: f64) -> Result<(), DynamicsError> {
    if !dt.is_finite() {
        Err(DynamicsError::NonFinite("time step"))
    } else if dt <= 0.0 {
        Err(DynamicsError::InvalidStep(dt))
    } else {
        Ok(())
    }
}

/// Advances `state` by `dt` under a constant `action` (clamped to `limits`).
pub fn step_bicycle(
    state: &VehicleState,
    action: ControlAction,
    limits: &KinematicLimits,
    dt: f64,
) -> Result<VehicleState, DynamicsError> {
    check_step(dt)?;
    state.check_finite()?;
    if !action.accel.is_finite() || !action.steer.is_finite() {
        return Err(DynamicsError::NonFinite("control action"));
    }
    let action = action.clamped(limits);
    let curvature = action.steer.tan() / limits.wheelbase;
    let (n, h) = substeps(dt);
    let mut s = *state;
    s.speed = s.speed.clamp(0.0, limits.v_max);
    for _ in 0..n {
        let v0 = s.speed;
        let v1 = (v0 + action.accel * h).clamp(0.0, limits.v_max);
        let dtheta = v0 * curvature * h;
        let mid = s.heading + dtheta / 2.0;
        let dist = (v0 + v1) / 2.0 * h;
        s.x += dist * mid.cos();
        s.y += dist * mid.sin();
        s.heading += dtheta;
        s.speed = v1;
    }
    s.heading = wrap_angle(s.heading);
    Ok(s)
}

/// Sum of `h·v_k` over sub-steps, the quantity that multiplies the
/// curvature in the heading update.
fn heading_integral(speed: f64, accel: f64, v_max: f64, dt: f64) -> f64 {
    let (n, h) = substeps(dt);
    let mut v = speed.clamp(0.0, v_max);
    let mut total = 0.0;
    for _ in 0..n {
        total += v * h;
        v = (v + accel * h).clamp(0.0, v_max);
    }
    total
}

/// Upper bound on `∫ v dt` over `[0, dt]` under `|accel| <= a`.
fn max_distance(speed: f64, a: f64, v_max: f64, dt: f64) -> f64 {
    let v = speed.clamp(0.0, v_max);
    let t_sat = ((v_max - v) / a).max(0.0);
    if t_sat >= dt {
        v * dt + 0.5 * a * dt * dt
    } else {
        v * t_sat + 0.5 * a * t_sat * t_sat + v_max * (dt - t_sat)
    }
}

/// Convex over-approximation of every velocity vector reachable after `dt`.
///
/// Terminal speed lies in `[max(0, v - a·dt), min(v_max, v + a·dt)]` and the
/// heading change is bounded by `tan(max_steer) / wheelbase · ∫ v dt`. The
/// resulting annular sector is hulled with a circumscribed outer arc and then
/// inflated by `min(REACH_INFLATION, a·dt)`.
pub fn reachable_velocity_set(
    state: &VehicleState,
    limits: &KinematicLimits,
    dt: f64,
) -> Result<VelocityRegion, DynamicsError> {
    check_step(dt)?;
    state.check_finite()?;
    let v = state.speed.clamp(0.0, limits.v_max);
    let s_lo = (v - limits.max_accel * dt).max(0.0);
    let s_hi = (v + limits.max_accel * dt).min(limits.v_max);
    let dtheta = (limits.max_steer.tan() / limits.wheelbase
        * max_distance(v, limits.max_accel, limits.v_max, dt))
    .min(PI);
    let theta = state.heading;

    let mut pts = Vec::with_capacity(24);
    if s_hi <= 0.0 {
        pts.push(Vec2::ZERO);
    } else {
        let segments = ((2.0 * dtheta) / (PI / 16.0)).ceil().clamp(8.0, 16.0) as usize;
        let step = 2.0 * dtheta / segments as f64;
        let outer = s_hi / (step / 2.0).cos();
        pts.push(Vec2::from_polar(s_hi, theta - dtheta));
        pts.push(Vec2::from_polar(s_hi, theta + dtheta));
        for i in 0..segments {
            pts.push(Vec2::from_polar(
                outer,
                theta - dtheta + step * (i as f64 + 0.5),
            ));
        }
        pts.push(Vec2::from_polar(s_lo, theta - dtheta));
        pts.push(Vec2::from_polar(s_lo, theta + dtheta));
    }
    let region = ConvexPolygon::hull(&pts).expect("non-empty");
    Ok(region.inflate(REACH_INFLATION.min(limits.max_accel * dt)))
}

/// Result of inverting the model for one prediction period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSolution {
    pub action: ControlAction,
    /// False when the desired velocity could not be met within the limits
    /// and `action` is the limit-clamped best effort.
    pub feasible: bool,
}

/// Constant action that drives the velocity vector to `desired` after `dt`.
pub fn velocity_to_action(
    state: &VehicleState,
    desired: Vec2,
    limits: &KinematicLimits,
    dt: f64,
) -> Result<ActionSolution, DynamicsError> {
    check_step(dt)?;
    state.check_finite()?;
    if !desired.is_finite() {
        return Err(DynamicsError::NonFinite("desired velocity"));
    }
    let mut feasible = true;
    let target_speed = desired.norm();
    let v = state.speed.clamp(0.0, limits.v_max);

    let raw_accel = (target_speed - v) / dt;
    let accel = raw_accel.clamp(-limits.max_accel, limits.max_accel);
    if (raw_accel - accel).abs() > 1e-9 || target_speed > limits.v_max + 1e-9 {
        feasible = false;
    }

    let dtheta = if target_speed > 1e-6 {
        wrap_angle(desired.angle() - state.heading)
    } else {
        0.0
    };
    let travelled = heading_integral(v, accel, limits.v_max, dt);
    let steer = if travelled > 1e-9 {
        (dtheta * limits.wheelbase / travelled).atan()
    } else {
        if dtheta.abs() > 1e-9 {
            feasible = false;
        }
        0.0
    };
    let clamped = steer.clamp(-limits.max_steer, limits.max_steer);
    if (clamped - steer).abs() > 1e-12 {
        feasible = false;
    }
    Ok(ActionSolution {
        action: ControlAction::new(accel, clamped),
        feasible,
    })
}
