//! Mode manager: sampled reachability, the recoverability test and the
//! AC/BC switching rule, plus a monitor that checks the safety invariant on
//! a finished episode.
//!
//! Reachability is estimated by closed-loop simulation. One nominal run has
//! every obstacle follow its normal IDM/lane-keeping behaviour; then, for each
//! moving obstacle and each behaviour in the family, one more run perturbs
//! that obstacle alone. Per-step boxes from all runs, inflated by a
//! disturbance margin, form the envelope.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Controller;
use crate::geometry::{Aabb, Vec2};
use crate::highway_env::{
    check_collision, in_safe_set, nominal_obstacle_action, step_world_with, SafeSetSpec, WorldState,
};
use crate::vehicle_dynamics::{ControlAction, VehicleState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModeError {
    #[error("invalid reachability config: {0}")]
    Config(String),
    #[error("horizon {0} s exceeds the {1} s limit")]
    HorizonTooLong(f64, f64),
    #[error("incomplete mode trace: {0}")]
    IncompleteTrace(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControlMode {
    #[serde(rename = "AC")]
    Ac,
    #[serde(rename = "BC")]
    Bc,
}

impl ControlMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControlMode::Ac => "AC",
            ControlMode::Bc => "BC",
        }
    }
}

impl std::fmt::Display for ControlMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Offsets added to an obstacle's nominal acceleration and steering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleBehavior {
    pub accel: f64,
    pub steer: f64,
}

impl ObstacleBehavior {
    pub const NOMINAL: ObstacleBehavior = ObstacleBehavior {
        accel: 0.0,
        steer: 0.0,
    };

    /// `{−a, 0, a} × {−δ, 0, δ}`.
    pub fn corners(a: f64, delta: f64) -> Vec<ObstacleBehavior> {
        let mut out = Vec::with_capacity(9);
        for sa in [-1.0, 0.0, 1.0] {
            for sd in [-1.0, 0.0, 1.0] {
                out.push(ObstacleBehavior {
                    accel: sa * a,
                    steer: sd * delta,
                });
            }
        }
        out
    }

    pub fn apply(&self, world: &WorldState, idx: usize) -> ControlAction {
        let n = nominal_obstacle_action(world, idx);
        ControlAction::new(n.accel + self.accel, n.steer + self.steer)
            .clamped(&world.params.obstacle_limits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReachabilityConfig {
    /// MM period Δt.
    pub dt: f64,
    /// The AC check looks `k·Δt` ahead.
    pub k: usize,
    pub behaviors: Vec<ObstacleBehavior>,
    /// Box inflation along the road.
    pub margin_longitudinal: f64,
    /// Box inflation across the road.
    pub margin_lateral: f64,
    /// Finite stand-in for the unbounded recovery horizon.
    pub t_rec: f64,
    pub t_ac: f64,
    pub t_bc: f64,
    /// Simulation step used inside reachability runs.
    pub sim_step: f64,
    pub max_horizon: f64,
}

impl Default for ReachabilityConfig {
    fn default() -> Self {
        Self {
            dt: 0.5,
            k: 2,
            behaviors: ObstacleBehavior::corners(3.0, 0.02),
            margin_longitudinal: 0.5,
            margin_lateral: 0.1,
            t_rec: 5.0,
            t_ac: 0.1,
            t_bc: 0.1,
            sim_step: 0.1,
            max_horizon: 20.0,
        }
    }
}

impl ReachabilityConfig {
    pub fn validate(&self) -> Result<(), ModeError> {
        let bad = |m: String| Err(ModeError::Config(m));
        if self.k <= 1 {
            return bad(format!("k must exceed 1, got {}", self.k));
        }
        if !(self.dt > self.t_ac && self.dt > self.t_bc) {
            return bad(format!(
                "dt {} must exceed both controller periods ({}, {})",
                self.dt, self.t_ac, self.t_bc
            ));
        }
        if !(self.t_ac > 0.0 && self.t_bc > 0.0 && self.sim_step > 0.0) {
            return bad("controller periods and sim_step must be positive".into());
        }
        if !(self.margin_longitudinal >= 0.0 && self.margin_lateral >= 0.0) {
            return bad("margins must be non-negative".into());
        }
        if !(self.t_rec > 0.0) || self.t_rec > self.max_horizon {
            return bad(format!(
                "t_rec {} outside (0, {}]",
                self.t_rec, self.max_horizon
            ));
        }
        let ratio = self.dt / self.sim_step;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return bad("dt must be a multiple of sim_step".into());
        }
        Ok(())
    }

    fn margin(&self) -> Vec2 {
        Vec2::new(self.margin_longitudinal, self.margin_lateral)
    }

    fn steps_for(&self, horizon: f64) -> Result<usize, ModeError> {
        if horizon > self.max_horizon + 1e-9 {
            return Err(ModeError::HorizonTooLong(horizon, self.max_horizon));
        }
        if !(horizon >= 0.0) {
            return Err(ModeError::Config(format!("negative horizon {horizon}")));
        }
        Ok((horizon / self.sim_step).round() as usize)
    }
}

/// One simulated trajectory of the envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachRun {
    /// Perturbed obstacle and its behaviour; `None` for the nominal run.
    pub perturbed: Option<(usize, ObstacleBehavior)>,
    /// Ego footprint bounds per step, inflated by the margin.
    pub ego: Vec<Aabb>,
    /// Ego reference point per step, inflated by the margin.
    pub ego_center: Vec<Aabb>,
    /// `obstacles[step][i]`: footprint bounds of obstacle `i`, inflated.
    pub obstacles: Vec<Vec<Aabb>>,
    /// All planning passes along the run found a feasible velocity.
    pub feasible: bool,
    /// Ego state after the last step.
    pub final_ego: VehicleState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachEnvelope {
    pub step: f64,
    pub margin: Vec2,
    pub road_width: f64,
    pub runs: Vec<ReachRun>,
}

impl ReachEnvelope {
    /// Number of recorded instants, the initial one included.
    pub fn len(&self) -> usize {
        self.runs.first().map_or(0, |r| r.ego.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn union_of(&self, f: impl Fn(&ReachRun) -> Option<Aabb>) -> Option<Aabb> {
        self.runs.iter().filter_map(f).reduce(|a, b| a.union(&b))
    }

    pub fn ego_box(&self, step: usize) -> Option<Aabb> {
        self.union_of(|r| r.ego.get(step).copied())
    }

    pub fn ego_center_box(&self, step: usize) -> Option<Aabb> {
        self.union_of(|r| r.ego_center.get(step).copied())
    }

    pub fn obstacle_box(&self, step: usize, idx: usize) -> Option<Aabb> {
        self.union_of(|r| r.obstacles.get(step).and_then(|o| o.get(idx).copied()))
    }

    pub fn all_feasible(&self) -> bool {
        self.runs.iter().all(|r| r.feasible)
    }
}

fn footprint_box(center: Vec2, heading: f64, length: f64, width: f64, m: Vec2) -> Aabb {
    let (c, s) = (heading.cos().abs(), heading.sin().abs());
    let half = Vec2::new(
        c * length / 2.0 + s * width / 2.0,
        s * length / 2.0 + c * width / 2.0,
    );
    Aabb::around(center, half + m)
}

fn record(world: &WorldState, m: Vec2) -> (Aabb, Aabb, Vec<Aabb>) {
    let p = &world.params;
    let e = &world.ego;
    let ego = footprint_box(
        e.position(),
        e.heading,
        p.vehicle_length,
        p.vehicle_width,
        m,
    );
    let center = Aabb::around(e.position(), m);
    let obs = world
        .obstacles
        .iter()
        .map(|o| footprint_box(o.state.position(), o.state.heading, o.length, o.width, m))
        .collect();
    (ego, center, obs)
}

/// Safety of one recorded instant: no ego box meets an obstacle box grown by
/// the required separation, and the reference point stays inside the road.
fn instant_safe(
    ego: &Aabb,
    center: &Aabb,
    obstacles: &[Aabb],
    spec: &SafeSetSpec,
    road_width: f64,
) -> bool {
    if center.min.y < spec.lateral_margin || center.max.y > road_width - spec.lateral_margin {
        return false;
    }
    obstacles
        .iter()
        .all(|o| !ego.intersects(&o.inflated(spec.min_separation, spec.lateral_separation)))
}

/// Runs the envelope simulations. With `spec` given, stops at the first
/// unsafe instant (or infeasible plan when `require_feasible`) and returns
/// `Ok(None)`.
fn simulate(
    world: &WorldState,
    controller: &dyn Controller,
    steps: usize,
    cfg: &ReachabilityConfig,
    check: Option<(&SafeSetSpec, bool)>,
) -> Option<ReachEnvelope> {
    let m = cfg.margin();
    let road_width = world.params.road.width();
    let mut variants: Vec<Option<(usize, ObstacleBehavior)>> = vec![None];
    for (i, o) in world.obstacles.iter().enumerate() {
        if o.crashed {
            continue;
        }
        for b in &cfg.behaviors {
            if *b != ObstacleBehavior::NOMINAL {
                variants.push(Some((i, *b)));
            }
        }
    }
    let mut runs = Vec::with_capacity(variants.len());
    for perturbed in variants {
        let mut ctrl = controller.boxed_clone();
        ctrl.reset();
        let mut w = world.clone();
        let (e0, c0, o0) = record(&w, m);
        if let Some((spec, _)) = check {
            if !instant_safe(&e0, &c0, &o0, spec, road_width) {
                return None;
            }
        }
        let mut run = ReachRun {
            perturbed,
            ego: vec![e0],
            ego_center: vec![c0],
            obstacles: vec![o0],
            feasible: true,
            final_ego: w.ego,
        };
        for _ in 0..steps {
            let action = ctrl.control(&w);
            let mut behavior = |i: usize, s: &WorldState| match perturbed {
                Some((j, b)) if j == i => Some(b.apply(s, i)),
                _ => None,
            };
            w = step_world_with(&w, action, cfg.sim_step, &mut behavior, false);
            let (e, c, o) = record(&w, m);
            if let Some((spec, need_feasible)) = check {
                if !instant_safe(&e, &c, &o, spec, road_width)
                    || (need_feasible && ctrl.infeasible_plans() > 0)
                {
                    return None;
                }
            }
            run.ego.push(e);
            run.ego_center.push(c);
            run.obstacles.push(o);
        }
        run.feasible = ctrl.infeasible_plans() == 0;
        run.final_ego = w.ego;
        runs.push(run);
    }
    Some(ReachEnvelope {
        step: cfg.sim_step,
        margin: m,
        road_width,
        runs,
    })
}

/// Sampled reachable envelope of the closed loop under `controller` over
/// `horizon` seconds.
pub fn reach_envelope(
    world: &WorldState,
    controller: &dyn Controller,
    horizon: f64,
    cfg: &ReachabilityConfig,
) -> Result<ReachEnvelope, ModeError> {
    let steps = cfg.steps_for(horizon)?;
    Ok(simulate(world, controller, steps, cfg, None)
        .expect("unchecked simulation always completes"))
}

/// Envelope inside the safe set at every instant. Ego and obstacle boxes
/// are compared run by run.
pub fn reach_safe(env: &ReachEnvelope, spec: &SafeSetSpec) -> bool {
    env.runs.iter().all(|r| {
        (0..r.ego.len()).all(|k| {
            instant_safe(
                &r.ego[k],
                &r.ego_center[k],
                &r.obstacles[k],
                spec,
                env.road_width,
            )
        })
    })
}

/// Same verdict as `reach_safe(reach_envelope(..))`, stopping at the first
/// violation. With `require_feasible`, a planning pass without a feasible
/// velocity also fails the check.
pub fn check_reach(
    world: &WorldState,
    controller: &dyn Controller,
    horizon: f64,
    cfg: &ReachabilityConfig,
    spec: &SafeSetSpec,
    require_feasible: bool,
) -> Result<bool, ModeError> {
    let steps = cfg.steps_for(horizon)?;
    Ok(simulate(
        world,
        controller,
        steps,
        cfg,
        Some((spec, require_feasible)),
    )
    .is_some())
}

/// Outcome of the recoverability test, condition by condition. Later
/// conditions are not evaluated once one fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recoverability {
    pub in_safe_set: bool,
    pub ac_step: Option<bool>,
    pub bc_now: Option<bool>,
    pub bc_after_ac: Option<bool>,
}

impl Recoverability {
    pub fn holds(&self) -> bool {
        self.in_safe_set
            && self.ac_step == Some(true)
            && self.bc_now == Some(true)
            && self.bc_after_ac == Some(true)
    }
}

/// Recoverability of `world`: safe now; safe for one Δt under the AC; the BC
/// keeps the loop safe and feasible for `t_rec` from here; and the same BC
/// check passes from every corner of where the AC can put the ego in Δt.
pub fn recoverability(
    world: &WorldState,
    ac: &dyn Controller,
    bc: &dyn Controller,
    cfg: &ReachabilityConfig,
    spec: &SafeSetSpec,
) -> Result<Recoverability, ModeError> {
    let mut r = Recoverability {
        in_safe_set: in_safe_set(world, spec),
        ac_step: None,
        bc_now: None,
        bc_after_ac: None,
    };
    if !r.in_safe_set {
        return Ok(r);
    }
    let steps = cfg.steps_for(cfg.dt)?;
    let ac_env = simulate(world, ac, steps, cfg, Some((spec, false)));
    r.ac_step = Some(ac_env.is_some());
    let Some(ac_env) = ac_env else {
        return Ok(r);
    };
    r.bc_now = Some(check_reach(world, bc, cfg.t_rec, cfg, spec, true)?);
    if r.bc_now != Some(true) {
        return Ok(r);
    }
    // The nominal AC run gives the obstacle states; the ego is placed at each
    // corner of its reference-point box with the nominal speed and heading.
    let center_box = ac_env
        .ego_center_box(ac_env.len() - 1)
        .expect("non-empty envelope");
    let mut end = world.clone();
    let mut ctrl = ac.boxed_clone();
    ctrl.reset();
    for _ in 0..steps {
        let a = ctrl.control(&end);
        end = step_world_with(&end, a, cfg.sim_step, &mut |_, _| None, false);
    }
    let final_ego = end.ego;
    let mut ok = true;
    for corner in center_box.corners() {
        let mut w = end.clone();
        w.ego = VehicleState::new(corner.x, corner.y, final_ego.speed, final_ego.heading);
        if !check_reach(&w, bc, cfg.t_rec, cfg, spec, true)? {
            ok = false;
            break;
        }
    }
    r.bc_after_ac = Some(ok);
    Ok(r)
}

pub fn is_recoverable(
    world: &WorldState,
    ac: &dyn Controller,
    bc: &dyn Controller,
    cfg: &ReachabilityConfig,
    spec: &SafeSetSpec,
) -> Result<bool, ModeError> {
    Ok(recoverability(world, ac, bc, cfg, spec)?.holds())
}

/// One mode-manager decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub time: f64,
    pub step: usize,
    pub mode_before: ControlMode,
    pub mode: ControlMode,
    pub switched: bool,
    /// AC envelope over `k·Δt` inside the safe set (evaluated in AC mode).
    pub ac_reach_safe: Option<bool>,
    /// AC envelope over one Δt inside the safe set.
    pub ac_step_safe: Option<bool>,
    /// Recoverability verdict (evaluated in BC mode).
    pub recoverable: Option<bool>,
    pub in_safe_set: bool,
}

/// The switching rule: leave AC when its `k·Δt` envelope leaves the safe
/// set, leave BC when the state is recoverable, otherwise stay.
pub fn decide_mode(
    cm: ControlMode,
    world: &WorldState,
    ac: &dyn Controller,
    bc: &dyn Controller,
    cfg: &ReachabilityConfig,
    spec: &SafeSetSpec,
) -> Result<ModeRecord, ModeError> {
    let safe_now = in_safe_set(world, spec);
    let mut rec = ModeRecord {
        time: world.time,
        step: world.step_index,
        mode_before: cm,
        mode: cm,
        switched: false,
        ac_reach_safe: None,
        ac_step_safe: None,
        recoverable: None,
        in_safe_set: safe_now,
    };
    match cm {
        ControlMode::Ac => {
            let long = check_reach(world, ac, cfg.k as f64 * cfg.dt, cfg, spec, false)?;
            rec.ac_reach_safe = Some(long);
            if long {
                // The Δt envelope is a prefix of the k·Δt one.
                rec.ac_step_safe = Some(true);
            } else {
                rec.ac_step_safe = Some(check_reach(world, ac, cfg.dt, cfg, spec, false)?);
                rec.mode = ControlMode::Bc;
            }
        }
        ControlMode::Bc => {
            let r = recoverability(world, ac, bc, cfg, spec)?;
            rec.recoverable = Some(r.holds());
            rec.ac_step_safe = r.ac_step;
            if r.holds() {
                rec.mode = ControlMode::Ac;
            }
        }
    }
    rec.switched = rec.mode != rec.mode_before;
    Ok(rec)
}

/// Checks the invariant at every decision instant: in BC the state is in
/// the safe set, in AC the one-interval AC envelope is. Any collision in
/// `worlds` (indexed by step) fails the episode.
pub fn invariant_monitor(
    trace: &[ModeRecord],
    worlds: &[WorldState],
    spec: &SafeSetSpec,
    dt: f64,
) -> Result<bool, ModeError> {
    if trace.is_empty() {
        return Err(ModeError::IncompleteTrace("no mode records".into()));
    }
    if worlds.is_empty() {
        return Err(ModeError::IncompleteTrace("no world states".into()));
    }
    for pair in trace.windows(2) {
        let gap = pair[1].time - pair[0].time;
        if (gap - dt).abs() > 1e-6 {
            return Err(ModeError::IncompleteTrace(format!(
                "records at {} and {} are not {dt} s apart",
                pair[0].time, pair[1].time
            )));
        }
    }
    if trace[0].step != worlds[0].step_index {
        return Err(ModeError::IncompleteTrace(
            "first decision does not match the first state".into(),
        ));
    }
    let span = worlds.last().map_or(0.0, |w| w.time) - worlds[0].time;
    let needed = ((span / dt - 1e-6).ceil() as usize).max(1);
    if trace.len() < needed {
        return Err(ModeError::IncompleteTrace(format!(
            "{} decisions for {span} s of states, expected {needed}",
            trace.len()
        )));
    }
    if worlds.iter().any(check_collision) {
        return Ok(false);
    }
    for rec in trace {
        let Some(world) = worlds.iter().find(|w| w.step_index == rec.step) else {
            return Err(ModeError::IncompleteTrace(format!(
                "no world for step {}",
                rec.step
            )));
        };
        let holds = match rec.mode {
            ControlMode::Bc => in_safe_set(world, spec),
            ControlMode::Ac => match rec.ac_step_safe {
                Some(v) => v,
                None => {
                    return Err(ModeError::IncompleteTrace(format!(
                        "AC record at step {} lacks a reach verdict",
                        rec.step
                    )))
                }
            },
        };
        if !holds {
            return Ok(false);
        }
    }
    Ok(true)
}
