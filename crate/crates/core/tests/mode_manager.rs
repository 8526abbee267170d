mod common;

use common::world_with;
use proptest::prelude::*;
use rand::Rng;
use simplex_drive::advanced_controllers::{AcSpec, DummyConstant, ScriptedLaneChange};
use simplex_drive::controller::Controller;
use simplex_drive::geometry::{Aabb, Vec2};
use simplex_drive::highway_env::{
    check_collision, in_safe_set, spawn_scenario, step_world, step_world_with, SafeSetSpec,
    TrafficConfig, WorldParams, WorldState,
};
use simplex_drive::mode_manager::{
    decide_mode, invariant_monitor, is_recoverable, reach_envelope, reach_safe, recoverability,
    ControlMode, ModeRecord, ObstacleBehavior, ReachEnvelope, ReachabilityConfig,
};
use simplex_drive::orca_drive::{BcConfig, OrcaDrive};
use simplex_drive::vehicle_dynamics::ControlAction;

fn bc() -> OrcaDrive {
    OrcaDrive::new(BcConfig::default(), 2, 20.0).unwrap()
}

fn scripted() -> ScriptedLaneChange {
    ScriptedLaneChange {
        target_lane: 2,
        v_target: 20.0,
    }
}

fn cfg() -> ReachabilityConfig {
    ReachabilityConfig::default()
}

fn spawned(seed: u64, density: f64, crashed: usize) -> WorldState {
    let t = TrafficConfig {
        density,
        crashed_count: crashed,
        ..TrafficConfig::default()
    };
    spawn_scenario(&WorldParams::default(), &t, seed).unwrap()
}

#[test]
fn config_conditions_are_enforced() {
    assert!(cfg().validate().is_ok());
    assert!(ReachabilityConfig { k: 1, ..cfg() }.validate().is_err());
    assert!(ReachabilityConfig { t_ac: 0.5, ..cfg() }
        .validate()
        .is_err());
    assert!(ReachabilityConfig { t_bc: 0.7, ..cfg() }
        .validate()
        .is_err());
    let w = world_with(20.0, &[]);
    assert!(reach_envelope(&w, &bc(), 25.0, &cfg()).is_err());
}

#[test]
fn empty_road_envelope_is_thin() {
    let w = world_with(20.0, &[]);
    let c = cfg();
    let env = reach_envelope(&w, &bc(), 1.0, &c).unwrap();
    assert_eq!(env.len(), 11);
    assert_eq!(env.runs.len(), 1);
    for k in 0..env.len() {
        let s = env.ego_center_box(k).unwrap().size();
        assert!(s.y <= 2.0 * c.margin_lateral + 1e-9);
        assert!(s.x <= 2.0 * c.margin_longitudinal + 1e-9);
    }
}

#[test]
fn zero_horizon_is_the_current_state() {
    let w = spawned(1, 1.0, 0);
    let c = cfg();
    let env = reach_envelope(&w, &scripted(), 0.0, &c).unwrap();
    assert_eq!(env.len(), 1);
    let b = env.ego_center_box(0).unwrap();
    let m = Vec2::new(c.margin_longitudinal, c.margin_lateral);
    assert_eq!(b, Aabb::around(w.ego.position(), m));
    for (i, o) in w.obstacles.iter().enumerate() {
        let ob = env.obstacle_box(0, i).unwrap();
        assert!(o.footprint().corners().iter().all(|p| ob.contains(*p)));
    }
}

#[test]
fn reach_safe_examples() {
    let spec = SafeSetSpec::default();
    let w = world_with(20.0, &[]);
    assert!(reach_safe(
        &reach_envelope(&w, &scripted(), 1.0, &cfg()).unwrap(),
        &spec
    ));
    let w = world_with(20.0, &[(520.0, 3.75, 0.0, true)]);
    let env = reach_envelope(&w, &DummyConstant { accel: 5.0 }, 1.0, &cfg()).unwrap();
    assert!(!reach_safe(&env, &spec));
}

/// Pairwise box intersection written out coordinate by coordinate.
fn brute_force_safe(env: &ReachEnvelope, spec: &SafeSetSpec) -> bool {
    for run in &env.runs {
        for k in 0..run.ego.len() {
            let c = run.ego_center[k];
            if c.min.y < spec.lateral_margin || c.max.y > env.road_width - spec.lateral_margin {
                return false;
            }
            let e = run.ego[k];
            for o in &run.obstacles[k] {
                let (lo_x, hi_x) = (o.min.x - spec.min_separation, o.max.x + spec.min_separation);
                let (lo_y, hi_y) = (
                    o.min.y - spec.lateral_separation,
                    o.max.y + spec.lateral_separation,
                );
                if e.min.x <= hi_x && e.max.x >= lo_x && e.min.y <= hi_y && e.max.y >= lo_y {
                    return false;
                }
            }
        }
    }
    true
}

#[test]
fn reach_safe_matches_pairwise_oracle() {
    let spec = SafeSetSpec::default();
    let mut verdicts = [0, 0];
    for seed in 0..60 {
        let w = spawned(
            seed,
            [1.0, 1.5, 2.0][seed as usize % 3],
            (seed % 2) as usize,
        );
        let ctrl: Box<dyn Controller> = match seed % 3 {
            0 => Box::new(scripted()),
            1 => Box::new(DummyConstant { accel: 5.0 }),
            _ => Box::new(bc()),
        };
        let env = reach_envelope(&w, ctrl.as_ref(), 1.0 + (seed % 4) as f64, &cfg()).unwrap();
        let got = reach_safe(&env, &spec);
        assert_eq!(got, brute_force_safe(&env, &spec), "seed {seed}");
        verdicts[got as usize] += 1;
    }
    assert!(verdicts[0] > 0 && verdicts[1] > 0);
}

fn corners_inside(corners: [Vec2; 4], b: Aabb) -> bool {
    corners.iter().all(|p| {
        p.x >= b.min.x - 1e-9
            && p.x <= b.max.x + 1e-9
            && p.y >= b.min.y - 1e-9
            && p.y <= b.max.y + 1e-9
    })
}

/// Samples piecewise-constant behaviours from the hull of the corner family
/// for one obstacle at a time and checks every footprint stays in the boxes.
fn containment(
    world: &WorldState,
    ctrl: &dyn Controller,
    horizon: f64,
    samples: usize,
    seed: u64,
) -> usize {
    let c = cfg();
    let env = reach_envelope(world, ctrl, horizon, &c).unwrap();
    let movers: Vec<usize> = (0..world.obstacles.len())
        .filter(|&i| !world.obstacles[i].crashed)
        .collect();
    let mut rng = common::rng(seed);
    let mut escapes = 0;
    for _ in 0..samples {
        let chosen = if movers.is_empty() {
            None
        } else {
            Some(movers[rng.random_range(0..movers.len())])
        };
        let mut w = world.clone();
        let mut ctl = ctrl.boxed_clone();
        ctl.reset();
        let mut b = ObstacleBehavior::NOMINAL;
        for k in 1..env.len() {
            if k == 1 || rng.random_bool(0.3) {
                b = ObstacleBehavior {
                    accel: rng.random_range(-3.0..=3.0),
                    steer: rng.random_range(-0.02..=0.02),
                };
            }
            let a = ctl.control(&w);
            let mut behavior =
                |i: usize, s: &WorldState| (Some(i) == chosen).then(|| b.apply(s, i));
            w = step_world_with(&w, a, c.sim_step, &mut behavior, false);
            let ego_ok = corners_inside(w.ego_footprint().corners(), env.ego_box(k).unwrap());
            let obs_ok = w.obstacles.iter().enumerate().all(|(i, o)| {
                corners_inside(o.footprint().corners(), env.obstacle_box(k, i).unwrap())
            });
            if !(ego_ok && obs_ok) {
                escapes += 1;
                break;
            }
        }
    }
    escapes
}

#[test]
fn sampled_behaviours_stay_in_the_envelope() {
    for scenario in 0..20u64 {
        let w = spawned(
            100 + scenario,
            [1.0, 1.5, 2.0][scenario as usize % 3],
            (scenario % 4 == 0) as usize,
        );
        let ctrl: Box<dyn Controller> = if scenario % 2 == 0 {
            Box::new(scripted())
        } else {
            Box::new(bc())
        };
        let escapes = containment(&w, ctrl.as_ref(), 1.0, 1000, scenario);
        assert_eq!(escapes, 0, "scenario {scenario} with {}", ctrl.name());
    }
}

#[test]
fn larger_envelopes_are_never_less_conservative() {
    let spec = SafeSetSpec::default();
    let small = cfg();
    let mut big = cfg();
    big.behaviors.extend(ObstacleBehavior::corners(6.0, 0.02));
    big.margin_longitudinal += 0.5;
    big.margin_lateral += 0.1;
    let mut flips = 0;
    for seed in 0..40 {
        let w = spawned(seed, 2.0, (seed % 3 == 0) as usize);
        let ac = scripted();
        let a = reach_safe(&reach_envelope(&w, &ac, 1.0, &small).unwrap(), &spec);
        let b = reach_safe(&reach_envelope(&w, &ac, 1.0, &big).unwrap(), &spec);
        assert!(
            !b || a,
            "seed {seed}: enlarged envelope safe but original not"
        );
        flips += (a && !b) as usize;
    }
    assert!(flips > 0, "the enlarged family never changed a verdict");
}

#[test]
fn recoverability_examples() {
    let spec = SafeSetSpec::default();
    let c = cfg();
    let empty = world_with(20.0, &[]);
    assert!(is_recoverable(&empty, &scripted(), &bc(), &c, &spec).unwrap());
    // 2 m bumper gap to a crashed car at 20 m/s: stopping needs 40 m.
    let blocked = world_with(20.0, &[(507.0, 3.75, 0.0, true)]);
    assert!(in_safe_set(&blocked, &spec));
    let r = recoverability(&blocked, &scripted(), &bc(), &c, &spec).unwrap();
    assert!(!r.holds());
    let overlapping = world_with(20.0, &[(505.5, 3.75, 20.0, false)]);
    assert!(!in_safe_set(&overlapping, &spec));
    let r = recoverability(&overlapping, &scripted(), &bc(), &c, &spec).unwrap();
    assert!(!r.in_safe_set && !r.holds());
}

#[test]
fn switching_rule_examples() {
    let spec = SafeSetSpec::default();
    let c = cfg();
    let empty = world_with(20.0, &[]);
    let rec = decide_mode(ControlMode::Ac, &empty, &scripted(), &bc(), &c, &spec).unwrap();
    assert_eq!(rec.mode, ControlMode::Ac);
    assert!(!rec.switched);
    let rec = decide_mode(ControlMode::Bc, &empty, &scripted(), &bc(), &c, &spec).unwrap();
    assert_eq!((rec.mode, rec.recoverable), (ControlMode::Ac, Some(true)));
    assert!(rec.switched);
}

#[test]
fn aggressive_dummy_is_taken_over_before_impact() {
    let spec = SafeSetSpec::default();
    let c = cfg();
    let mut w = world_with(20.0, &[(530.0, 3.75, 0.0, true)]);
    let mut ac = DummyConstant { accel: 5.0 };
    let mut b = bc();
    let mut mode = ControlMode::Ac;
    let mut took_over = None;
    for _ in 0..10 {
        let rec = decide_mode(mode, &w, &ac, &b, &c, &spec).unwrap();
        if rec.switched && rec.mode == ControlMode::Bc {
            took_over.get_or_insert(w.time);
            b.reset();
        }
        mode = rec.mode;
        for _ in 0..5 {
            let a = if mode == ControlMode::Ac {
                ac.control(&w)
            } else {
                b.control(&w)
            };
            w = step_world(&w, a, 0.1);
            assert!(!check_collision(&w), "collision at {}", w.time);
        }
    }
    let t = took_over.expect("the baseline never took over");
    assert!(t < 30.0 / 20.0, "takeover at {t}");
}

#[test]
fn decisions_are_deterministic() {
    let spec = SafeSetSpec::default();
    for seed in 0..10 {
        let w = spawned(seed, 2.0, 1);
        for cm in [ControlMode::Ac, ControlMode::Bc] {
            let a = decide_mode(cm, &w, &scripted(), &bc(), &cfg(), &spec).unwrap();
            let b = decide_mode(cm, &w, &scripted(), &bc(), &cfg(), &spec).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.switched, a.mode != cm);
        }
    }
}

fn bc_record(w: &WorldState, spec: &SafeSetSpec) -> ModeRecord {
    ModeRecord {
        time: w.time,
        step: w.step_index,
        mode_before: ControlMode::Bc,
        mode: ControlMode::Bc,
        switched: false,
        ac_reach_safe: None,
        ac_step_safe: None,
        recoverable: None,
        in_safe_set: in_safe_set(w, spec),
    }
}

#[test]
fn monitor_examples() {
    let spec = SafeSetSpec::default();
    let mut w = world_with(20.0, &[]);
    let mut worlds = vec![w.clone()];
    let mut trace = vec![];
    for step in 0..20 {
        if step % 5 == 0 {
            trace.push(bc_record(&w, &spec));
        }
        w = step_world(&w, ControlAction::ZERO, 0.1);
        worlds.push(w.clone());
    }
    assert!(invariant_monitor(&trace, &worlds, &spec, 0.5).unwrap());
    assert!(invariant_monitor(&[], &worlds, &spec, 0.5).is_err());
    assert!(invariant_monitor(&trace[..2], &worlds, &spec, 0.5).is_err());
    let mut gappy = trace.clone();
    gappy.remove(1);
    assert!(invariant_monitor(&gappy, &worlds, &spec, 0.5).is_err());
    let mut crashed = worlds.clone();
    let last = crashed.last_mut().unwrap();
    last.obstacles = world_with(20.0, &[(last.ego.x + 2.0, last.ego.y, 20.0, false)]).obstacles;
    assert!(!invariant_monitor(&trace, &crashed, &spec, 0.5).unwrap());
    let mut ac_missing = trace.clone();
    ac_missing[0].mode = ControlMode::Ac;
    assert!(invariant_monitor(&ac_missing, &worlds, &spec, 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn switching_is_total(seed in 0u64..500, d in prop::sample::select(vec![1.0, 1.5, 2.0]), level in -5.0..5.0f64) {
        let w = spawned(seed, d, 0);
        let spec = SafeSetSpec::default();
        let ac = AcSpec::Dummy(level).build(2, 20.0).unwrap();
        for cm in [ControlMode::Ac, ControlMode::Bc] {
            let rec = decide_mode(cm, &w, ac.as_ref(), &bc(), &cfg(), &spec).unwrap();
            match cm {
                ControlMode::Ac => {
                    prop_assert!(rec.ac_reach_safe.is_some());
                    prop_assert_eq!(rec.mode == ControlMode::Bc, rec.ac_reach_safe == Some(false));
                }
                ControlMode::Bc => {
                    prop_assert!(rec.recoverable.is_some());
                    prop_assert_eq!(rec.mode == ControlMode::Ac, rec.recoverable == Some(true));
                }
            }
        }
    }
}
