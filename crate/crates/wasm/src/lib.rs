//! Browser bindings. Every export takes plain numbers or JSON text and
//! returns JSON text, so the page needs no generated glue beyond
//! wasm-bindgen's own.

use serde_json::{json, Value};
use simplex_drive::geometry::{ConvexPolygon, Vec2};
use simplex_drive::highway_env::WorldParams;
use simplex_drive::orca_drive::{min_exit_change, minkowski_sum, velocity_obstacle};
use simplex_drive::sim::{run_episode, ControllerChoice, EpisodeOptions, ScenarioConfig};
use simplex_drive::vehicle_dynamics::{reachable_velocity_set, KinematicLimits, VehicleState};
use wasm_bindgen::prelude::*;

fn points(poly: &ConvexPolygon) -> Value {
    poly.vertices().iter().map(|v| json!([v.x, v.y])).collect()
}

/// Velocity obstacle of a disc at `(px, py)` relative to the ego, dilated by
/// the reachable velocities of an obstacle driving along the road at
/// `obstacle_speed`, probed at ego velocity `(vx, vy)`.
pub fn collision_cone(
    px: f64,
    py: f64,
    radius: f64,
    tau: f64,
    obstacle_speed: f64,
    vx: f64,
    vy: f64,
) -> Result<String, String> {
    let vo = velocity_obstacle(Vec2::new(px, py), radius, tau, 16).map_err(|e| e.to_string())?;
    let limits = WorldParams::default().obstacle_limits;
    let other = VehicleState::new(0.0, 0.0, obstacle_speed, 0.0);
    let v_b = reachable_velocity_set(&other, &limits, 0.5).map_err(|e| e.to_string())?;
    let ca = minkowski_sum(&vo.region, &v_b);
    let v = Vec2::new(vx, vy);
    let dv = min_exit_change(&ca, v, Vec2::new(0.0, 1.0));
    Ok(json!({
        "vo": points(&vo.region),
        "obstacle_velocities": points(&v_b),
        "cone": points(&ca),
        "inside": ca.contains(v, 0.0),
        "exit_change": [dv.x, dv.y],
    })
    .to_string())
}

/// Ego velocities reachable after `dt` from `speed` and `heading`.
pub fn reachable_set(speed: f64, heading: f64, dt: f64) -> Result<String, String> {
    let state = VehicleState::new(0.0, 0.0, speed, heading);
    let set =
        reachable_velocity_set(&state, &KinematicLimits::ego(), dt).map_err(|e| e.to_string())?;
    Ok(json!({ "polygon": points(&set) }).to_string())
}

/// One episode as JSON: metrics, per-step trace and mode decisions. An empty
/// config string uses the defaults.
pub fn simulate(config: &str, controller: &str, seed: u64, density: f64) -> Result<String, String> {
    let mut cfg = if config.trim().is_empty() {
        ScenarioConfig::default()
    } else {
        ScenarioConfig::from_json(config).map_err(|e| e.to_string())?
    };
    cfg.traffic.density = density;
    let choice: ControllerChoice = controller
        .parse()
        .map_err(|e: simplex_drive::sim::SimError| e.to_string())?;
    let ep =
        run_episode(&cfg, &choice, seed, EpisodeOptions::default()).map_err(|e| e.to_string())?;
    let road = &cfg.world.road;
    Ok(json!({
        "road": { "lanes": road.lane_count, "lane_width": road.lane_width },
        "vehicle": [cfg.world.vehicle_length, cfg.world.vehicle_width],
        "result": ep.result,
        "trace": ep.trace,
        "modes": ep.modes,
    })
    .to_string())
}

#[wasm_bindgen(js_name = collisionCone)]
pub fn collision_cone_js(
    px: f64,
    py: f64,
    radius: f64,
    tau: f64,
    obstacle_speed: f64,
    vx: f64,
    vy: f64,
) -> Result<String, JsError> {
    collision_cone(px, py, radius, tau, obstacle_speed, vx, vy).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = reachableSet)]
pub fn reachable_set_js(speed: f64, heading: f64, dt: f64) -> Result<String, JsError> {
    reachable_set(speed, heading, dt).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_js(
    config: &str,
    controller: &str,
    seed: u32,
    density: f64,
) -> Result<String, JsError> {
    simulate(config, controller, seed as u64, density).map_err(|e| JsError::new(&e))
}
