use serde::{Deserialize, Serialize};

use super::ObstacleVehicle;

/// Intelligent Driver Model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub time_headway: f64,
    pub min_gap: f64,
    pub max_accel: f64,
    pub comfortable_decel: f64,
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 15.0,
            time_headway: 1.5,
            min_gap: 5.0,
            max_accel: 3.0,
            comfortable_decel: 3.0,
            exponent: 4.0,
        }
    }
}

impl IdmParams {
    pub fn is_valid(&self) -> bool {
        [
            self.desired_speed,
            self.time_headway,
            self.min_gap,
            self.max_accel,
            self.comfortable_decel,
            self.exponent,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0)
    }

    /// Hardest braking the model will command.
    pub fn max_brake(&self) -> f64 {
        2.0 * self.comfortable_decel
    }
}

/// The vehicle ahead as seen by a follower: bumper-to-bumper gap and speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leader {
    pub gap: f64,
    pub speed: f64,
}

/// IDM acceleration `a·[1 − (v/v₀)^δ − (s*/s)²]` with
/// `s* = s₀ + v·T + v·Δv / (2√(a·b))`, clamped to `[−2b, a]`.
pub fn idm_acceleration(follower: &ObstacleVehicle, leader: Option<Leader>) -> f64 {
    idm_accel_raw(&follower.idm, follower.state.speed, leader)
}

pub(crate) fn idm_accel_raw(p: &IdmParams, speed: f64, leader: Option<Leader>) -> f64 {
    let v = speed.max(0.0);
    let free = 1.0 - (v / p.desired_speed).powf(p.exponent);
    let interaction = match leader {
        None => 0.0,
        Some(l) if l.gap <= 1e-3 => f64::INFINITY,
        Some(l) => {
            let dv = v - l.speed;
            let s_star = (p.min_gap
                + v * p.time_headway
                + v * dv / (2.0 * (p.max_accel * p.comfortable_decel).sqrt()))
            .max(0.0);
            (s_star / l.gap).powi(2)
        }
    };
    let a = p.max_accel * (free - interaction);
    if a.is_nan() {
        return -p.max_brake();
    }
    a.clamp(-p.max_brake(), p.max_accel)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> IdmParams {
        IdmParams::default()
    }

    #[test]
    fn free_flow_at_desired_speed_is_equilibrium() {
        assert!(idm_accel_raw(&params(), 15.0, None).abs() < 1e-12);
    }

    #[test]
    fn free_road_start_uses_max_accel() {
        assert_eq!(idm_accel_raw(&params(), 0.0, None), 3.0);
    }

    #[test]
    fn standstill_at_min_gap_is_equilibrium() {
        // Closed form at v = 0, Δv = 0: s* = s₀, so a·[1 − 0 − (s₀/s₀)²] = 0.
        let p = params();
        let expected = p.max_accel * (1.0 - 0.0 - (p.min_gap / p.min_gap).powi(2));
        let got = idm_accel_raw(
            &p,
            0.0,
            Some(Leader {
                gap: p.min_gap,
                speed: 0.0,
            }),
        );
        assert_eq!(got, expected);
        assert_eq!(got, 0.0);
    }

    #[test]
    fn overlap_brakes_at_limit() {
        let p = params();
        let a = idm_accel_raw(
            &p,
            10.0,
            Some(Leader {
                gap: 0.0,
                speed: 0.0,
            }),
        );
        assert_eq!(a, -p.max_brake());
    }

    #[test]
    fn closing_on_slow_leader_decelerates() {
        let a = idm_accel_raw(
            &params(),
            15.0,
            Some(Leader {
                gap: 10.0,
                speed: 5.0,
            }),
        );
        assert!(a < 0.0);
    }
}
