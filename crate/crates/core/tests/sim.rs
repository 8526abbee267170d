use simplex_drive::mode_manager::ControlMode;
use simplex_drive::sim::{
    emit_trace, run_batch, run_episode, sidecar_path, summary_csv, BatchSpec, ControllerChoice,
    EpisodeOptions, ScenarioConfig,
};
use std::fs;

fn choice(s: &str) -> ControllerChoice {
    s.parse().unwrap()
}

fn at_density(d: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.traffic.density = d;
    cfg
}

fn config_file(name: &str) -> ScenarioConfig {
    let path = format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"));
    ScenarioConfig::load(path).unwrap()
}

#[test]
fn config_conditions_are_enforced() {
    let mut cfg = ScenarioConfig::default();
    cfg.validate().unwrap();
    cfg.reachability.k = 1;
    assert!(cfg.validate().is_err());
    let mut cfg = ScenarioConfig::default();
    cfg.reachability.t_ac = cfg.reachability.dt;
    assert!(cfg.validate().is_err());
    let mut cfg = ScenarioConfig::default();
    cfg.reachability.t_bc = 0.6;
    assert!(run_episode(
        &cfg,
        &choice("simplex:scripted"),
        0,
        EpisodeOptions::default()
    )
    .is_err());
    assert_eq!(
        ScenarioConfig::from_json("{}").unwrap(),
        ScenarioConfig::default()
    );
    assert!(ScenarioConfig::from_json("{\"sim\": {\"step\": \"fast\"}}").is_err());
}

#[test]
fn shipped_default_config_matches_defaults() {
    assert_eq!(config_file("default.json"), ScenarioConfig::default());
}

#[test]
fn controller_labels_round_trip() {
    for s in [
        "orca",
        "simplex:scripted",
        "simplex:dummy:5",
        "ac-only:mlp:zero",
    ] {
        assert_eq!(choice(s).to_string(), s);
    }
    assert!("simplex".parse::<ControllerChoice>().is_err());
    assert!("orca:scripted".parse::<ControllerChoice>().is_err());
}

#[test]
fn episodes_are_deterministic() {
    let cfg = at_density(1.5);
    for c in ["orca", "simplex:scripted", "simplex:dummy:5"] {
        let a = run_episode(&cfg, &choice(c), 11, EpisodeOptions::default()).unwrap();
        let b = run_episode(&cfg, &choice(c), 11, EpisodeOptions::default()).unwrap();
        assert_eq!(a.result, b.result);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.modes, b.modes);
    }
}

#[test]
fn empty_road_scripted_reaches_the_target_lane() {
    let cfg = at_density(0.0);
    let ep = run_episode(
        &cfg,
        &choice("simplex:scripted"),
        0,
        EpisodeOptions::default(),
    )
    .unwrap();
    let r = &ep.result;
    assert!(r.reached_target_lane && !r.collided);
    assert_eq!(r.invariant_holds, Some(true));
    assert_eq!(r.bc_active_ratio, 0.0);
    assert_eq!(r.min_dis, None);
    assert!(r.steps < cfg.sim.max_steps);
}

#[test]
fn trace_files_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = at_density(1.0);
    cfg.sim.hold_steps = cfg.sim.max_steps + 1;
    let ep = run_episode(
        &cfg,
        &choice("simplex:dummy:0"),
        3,
        EpisodeOptions { record_plans: true },
    )
    .unwrap();
    assert_eq!(ep.result.steps, cfg.sim.max_steps);
    let path = dir.path().join("run.csv");
    emit_trace(&ep, &cfg, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), cfg.sim.max_steps + 1);
    let header: Vec<&str> = lines[0].split(',').collect();
    assert_eq!(header.len(), 11 + 4 * 3);
    assert_eq!(header[11], "obs0_x");

    // min_dis recomputed from the logged positions.
    let mut smallest = f64::INFINITY;
    for line in &lines[1..] {
        let f: Vec<f64> = line
            .split(',')
            .enumerate()
            .filter(|(i, _)| *i != 1)
            .map(|(_, s)| s.parse().unwrap())
            .collect();
        let (ex, ey) = (f[1], f[2]);
        let d = f[10..]
            .chunks(4)
            .map(|o| (o[0] - ex).hypot(o[1] - ey))
            .fold(f64::INFINITY, f64::min);
        assert!((d - f[9]).abs() < 1e-9);
        smallest = smallest.min(d);
    }
    assert!((smallest - ep.result.min_dis.unwrap()).abs() < 1e-9);

    let modes = fs::read_to_string(sidecar_path(&path, "modes.csv")).unwrap();
    assert_eq!(modes.lines().count(), ep.modes.len() + 1);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sidecar_path(&path, "meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["seed"], 3);
    assert_eq!(meta["controller"], "simplex:dummy:0");
    let plans = fs::read_to_string(sidecar_path(&path, "plans.jsonl")).unwrap();
    assert_eq!(plans.lines().count(), ep.plans.len());
}

#[test]
fn header_without_obstacles_has_only_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = at_density(0.0);
    let ep = run_episode(&cfg, &choice("orca"), 0, EpisodeOptions::default()).unwrap();
    let path = dir.path().join("nested/empty.csv");
    emit_trace(&ep, &cfg, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header.split(',').count(), 11);
    assert!(text.lines().skip(1).all(|l| l.ends_with(',')));
    assert!(!sidecar_path(&path, "plans.jsonl").exists());
}

#[test]
fn bc_ratio_and_returns_match_the_trace() {
    let cfg = at_density(2.0);
    let mut returns = 0;
    for (c, seed) in ["simplex:scripted", "simplex:dummy:1"]
        .iter()
        .flat_map(|c| (0..12).map(move |s| (c, s)))
    {
        let ep = run_episode(&cfg, &choice(c), seed, EpisodeOptions::default()).unwrap();
        let bc = ep
            .trace
            .iter()
            .filter(|r| r.mode == ControlMode::Bc)
            .count();
        assert!((ep.result.bc_active_ratio - bc as f64 / ep.trace.len() as f64).abs() < 1e-12);
        for m in &ep.modes {
            if m.switched && m.mode == ControlMode::Ac {
                assert_eq!(m.mode_before, ControlMode::Bc);
                assert_eq!(m.recoverable, Some(true));
                returns += 1;
            }
            if m.switched && m.mode == ControlMode::Bc {
                assert_eq!(m.ac_reach_safe, Some(false));
            }
        }
        assert_eq!(
            ep.result.switch_count,
            ep.modes.iter().filter(|m| m.switched).count()
        );
    }
    assert!(returns > 0, "no BC→AC hand-back in the sample");
}

#[test]
fn orca_alone_is_all_bc() {
    let ep = run_episode(
        &at_density(1.0),
        &choice("orca"),
        2,
        EpisodeOptions::default(),
    )
    .unwrap();
    assert_eq!(ep.result.bc_active_ratio, 1.0);
    assert_eq!(ep.result.switch_count, 0);
    assert_eq!(ep.result.invariant_holds, Some(true));
    let ep = run_episode(
        &at_density(1.0),
        &choice("ac-only:dummy:0"),
        2,
        EpisodeOptions::default(),
    )
    .unwrap();
    assert_eq!(ep.result.bc_active_ratio, 0.0);
    assert_eq!(ep.result.invariant_holds, None);
    assert!(ep.modes.is_empty());
}

#[test]
fn coasting_on_an_empty_road_never_hands_over() {
    let cfg = at_density(0.0);
    let ep = run_episode(
        &cfg,
        &choice("simplex:dummy:0"),
        0,
        EpisodeOptions::default(),
    )
    .unwrap();
    assert_eq!(ep.result.bc_active_ratio, 0.0);
    assert_eq!(ep.result.steps, cfg.sim.max_steps);
}

#[test]
fn batch_is_order_independent() {
    let cfg = ScenarioConfig::default();
    let mut spec = BatchSpec {
        densities: vec![1.0, 2.0],
        controllers: vec![choice("orca"), choice("simplex:dummy:5")],
        trials: 4,
        seed: 20,
        parallel: false,
    };
    let seq = run_batch(&cfg, &spec).unwrap();
    spec.parallel = true;
    let par = run_batch(&cfg, &spec).unwrap();
    assert_eq!(seq, par);
    assert_eq!(summary_csv(&seq.rows), summary_csv(&par.rows));
    assert_eq!(seq.rows.len(), 4);

    // Rates recomputed from the per-episode results.
    for (row, eps) in seq.rows.iter().zip(&seq.episodes) {
        let collisions = eps.iter().filter(|e| e.collided).count() as f64;
        assert_eq!(row.collision_rate, collisions / eps.len() as f64);
        let reached = eps.iter().filter(|e| e.reached_target_lane).count() as f64;
        assert_eq!(row.target_lane_rate, reached / eps.len() as f64);
    }
    spec.trials = 0;
    assert!(run_batch(&cfg, &spec).is_err());
}

#[test]
fn single_trial_summary_is_the_episode() {
    let cfg = at_density(1.5);
    let c = choice("simplex:scripted");
    let out = run_batch(
        &cfg,
        &BatchSpec {
            densities: vec![1.5],
            controllers: vec![c.clone()],
            trials: 1,
            seed: 9,
            parallel: false,
        },
    )
    .unwrap();
    let ep = run_episode(&cfg, &c, 9, EpisodeOptions::default())
        .unwrap()
        .result;
    let row = &out.rows[0];
    assert_eq!(row.avg_speed, ep.avg_speed);
    assert_eq!(row.min_dis, ep.min_dis);
    assert_eq!(row.bc_active_ratio, ep.bc_active_ratio);
    assert_eq!(row.collision_rate, ep.collided as u8 as f64);
    assert_eq!(row.invariant_rate, Some(1.0));
}

#[test]
fn crashed_vehicle_scenarios_stay_safe() {
    let cfg = config_file("crashed.json");
    assert_eq!(cfg.reachability.k, 4);
    for c in ["orca", "simplex:scripted", "simplex:dummy:5"] {
        for seed in 0..8 {
            let ep = run_episode(&cfg, &choice(c), seed, EpisodeOptions::default()).unwrap();
            assert!(!ep.result.collided, "{c} seed {seed}");
            assert_eq!(ep.result.invariant_holds, Some(true));
        }
    }
}

#[test]
fn cut_in_scenarios_stay_safe() {
    let cfg = config_file("lane_changes.json");
    assert!(!cfg.traffic.lane_changes.is_empty());
    for c in ["orca", "simplex:scripted", "simplex:mlp:zero"] {
        for seed in 0..8 {
            let ep = run_episode(&cfg, &choice(c), seed, EpisodeOptions::default()).unwrap();
            assert!(!ep.result.collided, "{c} seed {seed}");
        }
    }
}

#[test]
fn dense_traffic_simplex_is_collision_free() {
    let cfg = at_density(2.0);
    for seed in 0..10 {
        let ep = run_episode(
            &cfg,
            &choice("simplex:scripted"),
            seed,
            EpisodeOptions::default(),
        )
        .unwrap();
        assert!(!ep.result.collided && ep.result.invariant_holds == Some(true));
    }
}
