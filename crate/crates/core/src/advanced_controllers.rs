//! Unverified performance controllers: a scripted lane-changer, a constant
//! acceleration dummy and a feed-forward MLP policy loaded from JSON.
//!
//! # Weight file format
//!
//! ```json
//! {"layers": [
//!   {"in": 29, "out": 16, "weights": [/* out·in values, row-major */],
//!    "bias": [/* out values */], "activation": "relu"},
//!   {"in": 16, "out": 2, "weights": [...], "bias": [...], "activation": "tanh"}
//! ]}
//! ```
//!
//! Row `o` of `weights` holds the `in` coefficients of output `o`. Layer
//! sizes must chain, the last layer must output 2 values through `tanh`, and
//! the first layer's `in` must equal the observation length `4 + 5·k`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Controller;
use crate::highway_env::WorldState;
use crate::vehicle_dynamics::{ControlAction, KinematicLimits};

pub const DEFAULT_K: usize = 5;
pub const SCRIPTED_K_Y: f64 = 0.15;
pub const SCRIPTED_K_THETA: f64 = 0.6;
pub const SCRIPTED_K_V: f64 = 1.0;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("reading policy {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing policy: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid policy: {0}")]
    Invalid(String),
    #[error("invalid controller spec {0:?}: expected scripted, dummy:<accel> or mlp:<path>")]
    Spec(String),
}

/// Flat observation: ego `(x, y, speed, heading)` followed by `k` slots of
/// `(rel x, rel y, speed, heading, present)` for the nearest obstacles.
pub fn build_observation(world: &WorldState, k: usize) -> Vec<f64> {
    let ego = &world.ego;
    let mut obs = Vec::with_capacity(4 + 5 * k);
    obs.extend([ego.x, ego.y, ego.speed, ego.heading]);
    let mut rows: Vec<[f64; 5]> = world
        .obstacles
        .iter()
        .map(|o| {
            let dx = o.state.x - ego.x;
            let dy = o.state.y - ego.y;
            [
                dx,
                dy,
                o.state.speed,
                o.state.heading,
                (dx * dx + dy * dy).sqrt(),
            ]
        })
        .collect();
    // Equal distances are ordered by content so obstacle order never matters.
    rows.sort_by(|a, b| {
        a[4].total_cmp(&b[4])
            .then(a[0].total_cmp(&b[0]))
            .then(a[1].total_cmp(&b[1]))
            .then(a[2].total_cmp(&b[2]))
            .then(a[3].total_cmp(&b[3]))
    });
    for slot in 0..k {
        match rows.get(slot) {
            Some(r) => obs.extend([r[0], r[1], r[2], r[3], 1.0]),
            None => obs.extend([0.0; 5]),
        }
    }
    obs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    #[serde(rename = "in")]
    pub input: usize,
    #[serde(rename = "out")]
    pub output: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpPolicy {
    pub layers: Vec<DenseLayer>,
}

impl MlpPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: String| Err(PolicyError::Invalid(m));
        let Some(last) = self.layers.last() else {
            return bad("no layers".into());
        };
        for (i, l) in self.layers.iter().enumerate() {
            if l.input == 0 || l.output == 0 {
                return bad(format!("layer {i} has a zero dimension"));
            }
            if l.weights.len() != l.input * l.output {
                return bad(format!(
                    "layer {i}: {} weights for {}x{}",
                    l.weights.len(),
                    l.output,
                    l.input
                ));
            }
            if l.bias.len() != l.output {
                return bad(format!(
                    "layer {i}: {} biases for {} outputs",
                    l.bias.len(),
                    l.output
                ));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return bad(format!("layer {i} has non-finite parameters"));
            }
            if i > 0 && self.layers[i - 1].output != l.input {
                return bad(format!("layer {i} input does not match previous output"));
            }
        }
        if last.output != 2 {
            return bad(format!(
                "final layer outputs {} values, expected 2",
                last.output
            ));
        }
        if last.activation != Activation::Tanh {
            return bad("final activation must be tanh".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, PolicyError> {
        let p: MlpPolicy = serde_json::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PolicyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// All-zero policy for observation length `input`.
    pub fn zeros(input: usize) -> Self {
        Self {
            layers: vec![DenseLayer {
                input,
                output: 2,
                weights: vec![0.0; 2 * input],
                bias: vec![0.0; 2],
                activation: Activation::Tanh,
            }],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input)
    }

    /// Raw network output in `[-1, 1]²`.
    pub fn forward(&self, obs: &[f64]) -> Result<[f64; 2], PolicyError> {
        if obs.len() != self.input_dim() {
            return Err(PolicyError::Invalid(format!(
                "observation has {} entries, policy expects {}",
                obs.len(),
                self.input_dim()
            )));
        }
        let mut x = obs.to_vec();
        for l in &self.layers {
            x = (0..l.output)
                .map(|o| {
                    let row = &l.weights[o * l.input..(o + 1) * l.input];
                    let z = l.bias[o] + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
                    match l.activation {
                        Activation::Relu => z.max(0.0),
                        Activation::Tanh => z.tanh(),
                    }
                })
                .collect();
        }
        Ok([x[0], x[1]])
    }
}

/// Maps a policy output to an action: `accel = out₀·max_accel`,
/// `steer = out₁·max_steer`.
pub fn mlp_forward(
    obs: &[f64],
    policy: &MlpPolicy,
    limits: &KinematicLimits,
) -> Result<ControlAction, PolicyError> {
    let [a, s] = policy.forward(obs)?;
    Ok(ControlAction::new(a * limits.max_accel, s * limits.max_steer).clamped(limits))
}

/// Proportional lane change toward `target_lane` with cruise control to
/// `v_target`. Blind to obstacles.
pub fn scripted_lane_change(
    world: &WorldState,
    target_lane: usize,
    v_target: f64,
) -> ControlAction {
    let ego = &world.ego;
    let dy = world.params.road.lane_center(target_lane) - ego.y;
    let steer = SCRIPTED_K_Y * dy + SCRIPTED_K_THETA * (0.0 - ego.heading);
    let accel = SCRIPTED_K_V * (v_target - ego.speed);
    ControlAction::new(accel, steer).clamped(&world.params.ego_limits)
}

pub fn dummy_constant(accel_level: f64, limits: &KinematicLimits) -> ControlAction {
    ControlAction::new(accel_level, 0.0).clamped(limits)
}

#[derive(Debug, Clone)]
pub struct ScriptedLaneChange {
    pub target_lane: usize,
    pub v_target: f64,
}

impl Controller for ScriptedLaneChange {
    fn name(&self) -> String {
        "scripted".into()
    }

    fn control(&mut self, world: &WorldState) -> ControlAction {
        scripted_lane_change(world, self.target_lane, self.v_target)
    }

    fn boxed_clone(&self) -> Box<dyn Controller> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone)]
pub struct DummyConstant {
    pub accel: f64,
}

impl Controller for DummyConstant {
    fn name(&self) -> String {
        format!("dummy:{}", self.accel)
    }

    fn control(&mut self, world: &WorldState) -> ControlAction {
        dummy_constant(self.accel, &world.params.ego_limits)
    }

    fn boxed_clone(&self) -> Box<dyn Controller> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone)]
pub struct MlpController {
    pub policy: MlpPolicy,
    pub k: usize,
    label: String,
}

impl MlpController {
    pub fn new(policy: MlpPolicy, k: usize, label: impl Into<String>) -> Result<Self, PolicyError> {
        policy.validate()?;
        if policy.input_dim() != 4 + 5 * k {
            return Err(PolicyError::Invalid(format!(
                "policy input {} does not match observation length {}",
                policy.input_dim(),
                4 + 5 * k
            )));
        }
        Ok(Self {
            policy,
            k,
            label: label.into(),
        })
    }
}

impl Controller for MlpController {
    fn name(&self) -> String {
        format!("mlp:{}", self.label)
    }

    fn control(&mut self, world: &WorldState) -> ControlAction {
        let obs = build_observation(world, self.k);
        mlp_forward(&obs, &self.policy, &world.params.ego_limits).unwrap_or(ControlAction::ZERO)
    }

    fn boxed_clone(&self) -> Box<dyn Controller> {
        Box::new(self.clone())
    }
}

/// Textual AC selection: `scripted`, `dummy:<accel>`, `mlp:<path>` or
/// `mlp:zero` for the built-in all-zero policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AcSpec {
    Scripted,
    Dummy(f64),
    Mlp(String),
}

pub const ZERO_POLICY: &str = "zero";

impl FromStr for AcSpec {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "scripted" {
            return Ok(AcSpec::Scripted);
        }
        if let Some(level) = s.strip_prefix("dummy:") {
            let v: f64 = level.parse().map_err(|_| PolicyError::Spec(s.into()))?;
            if !(v.is_finite() && v.abs() <= 5.0) {
                return Err(PolicyError::Spec(s.into()));
            }
            return Ok(AcSpec::Dummy(v));
        }
        if let Some(path) = s.strip_prefix("mlp:") {
            if !path.is_empty() {
                return Ok(AcSpec::Mlp(path.into()));
            }
        }
        Err(PolicyError::Spec(s.into()))
    }
}

impl fmt::Display for AcSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AcSpec::Scripted => write!(f, "scripted"),
            AcSpec::Dummy(v) => write!(f, "dummy:{v}"),
            AcSpec::Mlp(p) => write!(f, "mlp:{p}"),
        }
    }
}

impl TryFrom<String> for AcSpec {
    type Error = PolicyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<AcSpec> for String {
    fn from(s: AcSpec) -> String {
        s.to_string()
    }
}

impl AcSpec {
    pub fn build(
        &self,
        target_lane: usize,
        v_target: f64,
    ) -> Result<Box<dyn Controller>, PolicyError> {
        Ok(match self {
            AcSpec::Scripted => Box::new(ScriptedLaneChange {
                target_lane,
                v_target,
            }),
            AcSpec::Dummy(a) => Box::new(DummyConstant { accel: *a }),
            AcSpec::Mlp(path) if path == ZERO_POLICY => Box::new(MlpController::new(
                MlpPolicy::zeros(4 + 5 * DEFAULT_K),
                DEFAULT_K,
                ZERO_POLICY,
            )?),
            AcSpec::Mlp(path) => Box::new(MlpController::new(
                MlpPolicy::load(path)?,
                DEFAULT_K,
                path.clone(),
            )?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::highway_env::{
        spawn_scenario, IdmParams, ObstacleVehicle, TrafficConfig, WorldParams,
    };
    use crate::vehicle_dynamics::VehicleState;

    fn empty() -> WorldState {
        let t = TrafficConfig {
            density: 0.0,
            ..TrafficConfig::default()
        };
        spawn_scenario(&WorldParams::default(), &t, 0).unwrap()
    }

    fn obstacle(x: f64, y: f64) -> ObstacleVehicle {
        ObstacleVehicle {
            state: VehicleState::new(x, y, 15.0, 0.0),
            length: 5.0,
            width: 2.0,
            idm: IdmParams::default(),
            crashed: false,
            lane: 0,
        }
    }

    #[test]
    fn empty_observation_is_padded() {
        let obs = build_observation(&empty(), 5);
        assert_eq!(obs.len(), 29);
        assert!(obs[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn obstacle_ahead_fills_first_slot() {
        let mut w = empty();
        w.obstacles.push(obstacle(w.ego.x + 10.0, w.ego.y));
        let obs = build_observation(&w, 5);
        assert_eq!(&obs[4..9], &[10.0, 0.0, 15.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_layer_by_hand() {
        let p = MlpPolicy {
            layers: vec![DenseLayer {
                input: 2,
                output: 2,
                weights: vec![1.0, 0.0, 0.0, 1.0],
                bias: vec![0.0, 0.0],
                activation: Activation::Tanh,
            }],
        };
        let a = mlp_forward(&[1.0, -1.0], &p, &KinematicLimits::ego()).unwrap();
        assert!((a.accel - 1f64.tanh() * 5.0).abs() < 1e-12);
        assert!((a.steer + 1f64.tanh() * std::f64::consts::FRAC_PI_6).abs() < 1e-12);
    }

    #[test]
    fn saturation_hits_bounds() {
        let p = MlpPolicy {
            layers: vec![DenseLayer {
                input: 1,
                output: 2,
                weights: vec![1e3, -1e3],
                bias: vec![0.0, 0.0],
                activation: Activation::Tanh,
            }],
        };
        let limits = KinematicLimits::ego();
        let a = mlp_forward(&[1.0], &p, &limits).unwrap();
        assert_eq!(a.accel, 5.0);
        assert_eq!(a.steer, -limits.max_steer);
        assert!((limits.max_steer - std::f64::consts::FRAC_PI_6).abs() < 1e-15);
    }

    #[test]
    fn zero_policy_outputs_zero() {
        let mut c = AcSpec::Mlp(ZERO_POLICY.into()).build(2, 20.0).unwrap();
        assert_eq!(c.control(&empty()), ControlAction::ZERO);
    }

    #[test]
    fn invalid_policies_rejected() {
        let mut p = MlpPolicy::zeros(3);
        p.layers[0].activation = Activation::Relu;
        assert!(p.validate().is_err());
        let mut p = MlpPolicy::zeros(3);
        p.layers[0].weights.pop();
        assert!(p.validate().is_err());
        assert!(MlpController::new(MlpPolicy::zeros(3), 5, "x").is_err());
        assert!(MlpPolicy::from_json("{\"layers\": []}").is_err());
    }

    #[test]
    fn scripted_setpoint_and_signs() {
        let mut w = empty();
        w.ego.y = w.params.road.lane_center(2);
        let a = scripted_lane_change(&w, 2, 20.0);
        assert!(a.accel.abs() < 1e-12 && a.steer.abs() < 1e-12);
        let w = empty();
        assert!(scripted_lane_change(&w, 2, 20.0).steer > 0.0);
        let mut slow = empty();
        slow.ego.speed = 15.0;
        assert!(scripted_lane_change(&slow, 1, 20.0).accel > 0.0);
    }

    #[test]
    fn dummy_levels() {
        let l = KinematicLimits::ego();
        assert_eq!(dummy_constant(1.0, &l), ControlAction::new(1.0, 0.0));
        assert_eq!(dummy_constant(5.0, &l), ControlAction::new(5.0, 0.0));
        assert_eq!(dummy_constant(0.0, &l), ControlAction::ZERO);
    }

    #[test]
    fn spec_parsing() {
        assert_eq!("scripted".parse::<AcSpec>().unwrap(), AcSpec::Scripted);
        assert_eq!("dummy:5".parse::<AcSpec>().unwrap(), AcSpec::Dummy(5.0));
        assert_eq!(
            "mlp:a.json".parse::<AcSpec>().unwrap(),
            AcSpec::Mlp("a.json".into())
        );
        assert!("dummy:9".parse::<AcSpec>().is_err());
        assert!("ppo".parse::<AcSpec>().is_err());
        assert_eq!(AcSpec::Dummy(1.0).to_string(), "dummy:1");
    }
}
