//! Episode runner, batch harness, takeover study and trace files.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advanced_controllers::{AcSpec, PolicyError};
use crate::controller::Controller;
use crate::highway_env::{
    at_lane_center, check_collision, in_safe_set, spawn_scenario, step_reward, step_world,
    RewardConfig, SafeSetSpec, ScenarioError, TrafficConfig, WorldParams, WorldState,
};
use crate::mode_manager::{
    decide_mode, invariant_monitor, ControlMode, ModeError, ModeRecord, ReachabilityConfig,
};
use crate::orca_drive::{BcConfig, OrcaDrive, OrcaPlan};
use crate::vehicle_dynamics::ControlAction;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Base simulation step.
    pub step: f64,
    pub max_steps: usize,
    /// Consecutive steps on the target lane centre that count as success.
    pub hold_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step: 0.1,
            max_steps: 200,
            hold_steps: 10,
        }
    }
}

/// Complete scenario description. Every field has a default, so `{}` is a
/// valid config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub world: WorldParams,
    pub traffic: TrafficConfig,
    pub reward: RewardConfig,
    pub safe_set: SafeSetSpec,
    pub bc: BcConfig,
    pub reachability: ReachabilityConfig,
    pub sim: SimConfig,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let cfg = Self::from_json(&text).map_err(|source| SimError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let cfg = |m: String| SimError::Config(m);
        self.world
            .ego_limits
            .validate()
            .map_err(|e| cfg(format!("ego limits: {e}")))?;
        self.world
            .obstacle_limits
            .validate()
            .map_err(|e| cfg(format!("obstacle limits: {e}")))?;
        if self.world.road.lane_count < 2 || !(self.world.road.lane_width > 0.0) {
            return Err(cfg("road needs at least two lanes of positive width".into()));
        }
        if self.reward.target_lane >= self.world.road.lane_count {
            return Err(cfg("target lane outside road".into()));
        }
        self.safe_set.validate().map_err(cfg)?;
        self.bc.validate().map_err(|e| cfg(e.to_string()))?;
        self.reachability.validate()?;
        let s = &self.sim;
        if !(s.step > 0.0) || s.max_steps == 0 {
            return Err(cfg("sim step and max_steps must be positive".into()));
        }
        if (self.reachability.sim_step - s.step).abs() > 1e-12 {
            return Err(cfg("reachability.sim_step must equal sim.step".into()));
        }
        if (self.bc.dt - self.reachability.dt).abs() > 1e-12 {
            return Err(cfg("bc.dt must equal reachability.dt".into()));
        }
        Ok(())
    }

    /// Base steps per mode-manager period.
    pub fn mm_every(&self) -> usize {
        (self.reachability.dt / self.sim.step).round().max(1.0) as usize
    }
}

/// Which controller drives the ego.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ControllerChoice {
    /// The baseline controller alone.
    Orca,
    /// Mode-managed AC with the baseline as fallback.
    Simplex(AcSpec),
    /// The AC alone, no mode manager.
    AcOnly(AcSpec),
}

impl ControllerChoice {
    pub fn kind(&self) -> &'static str {
        match self {
            ControllerChoice::Orca => "orca",
            ControllerChoice::Simplex(_) => "simplex",
            ControllerChoice::AcOnly(_) => "ac-only",
        }
    }

    /// Safety is asserted for controllers that carry the baseline.
    pub fn is_assured(&self) -> bool {
        !matches!(self, ControllerChoice::AcOnly(_))
    }

    pub fn from_parts(kind: &str, ac: &AcSpec) -> Result<Self, SimError> {
        match kind {
            "orca" => Ok(ControllerChoice::Orca),
            "simplex" => Ok(ControllerChoice::Simplex(ac.clone())),
            "ac-only" => Ok(ControllerChoice::AcOnly(ac.clone())),
            other => Err(SimError::Config(format!("unknown controller {other:?}"))),
        }
    }
}

impl fmt::Display for ControllerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerChoice::Orca => write!(f, "orca"),
            ControllerChoice::Simplex(ac) => write!(f, "simplex:{ac}"),
            ControllerChoice::AcOnly(ac) => write!(f, "ac-only:{ac}"),
        }
    }
}

impl FromStr for ControllerChoice {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "orca" {
            return Ok(ControllerChoice::Orca);
        }
        let (kind, ac) = s
            .split_once(':')
            .filter(|(kind, _)| *kind != "orca")
            .ok_or_else(|| SimError::Config(format!("bad controller label {s:?}")))?;
        Self::from_parts(kind, &ac.parse()?)
    }
}

impl TryFrom<String> for ControllerChoice {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ControllerChoice> for String {
    fn from(c: ControllerChoice) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleRow {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub heading: f64,
}

/// One simulation step, recorded after the world advanced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: f64,
    pub mode: ControlMode,
    pub ego_x: f64,
    pub ego_y: f64,
    pub ego_v: f64,
    pub ego_heading: f64,
    pub accel: f64,
    pub steer: f64,
    pub reward: f64,
    pub safe: bool,
    pub min_dis: Option<f64>,
    pub obstacles: Vec<ObstacleRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub reached_target_lane: bool,
    pub collided: bool,
    pub avg_speed: f64,
    /// Smallest centre-to-centre distance to any obstacle; `None` without obstacles.
    pub min_dis: Option<f64>,
    /// Per-step nearest distance averaged over the episode.
    pub avg_min_dis: Option<f64>,
    pub bc_active_ratio: f64,
    pub switch_count: usize,
    pub steps: usize,
    /// Invariant monitor verdict; `None` when no mode manager ran.
    pub invariant_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub seed: u64,
    pub controller: ControllerChoice,
    pub result: EpisodeResult,
    pub trace: Vec<TraceRow>,
    pub modes: Vec<ModeRecord>,
    /// Baseline plans, one per replan, when requested.
    pub plans: Vec<OrcaPlan>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EpisodeOptions {
    pub record_plans: bool,
}

/// Runs one episode. Config errors surface before any stepping.
pub fn run_episode(
    cfg: &ScenarioConfig,
    controller: &ControllerChoice,
    seed: u64,
    opts: EpisodeOptions,
) -> Result<Episode, SimError> {
    cfg.validate()?;
    let target = cfg.reward.target_lane;
    let v_target = cfg.reward.v_target;
    let mut bc =
        OrcaDrive::new(cfg.bc, target, v_target).map_err(|e| SimError::Config(e.to_string()))?;
    let mut ac: Option<Box<dyn Controller>> = match controller {
        ControllerChoice::Orca => None,
        ControllerChoice::Simplex(spec) | ControllerChoice::AcOnly(spec) => {
            Some(spec.build(target, v_target)?)
        }
    };
    let mut world = spawn_scenario(&cfg.world, &cfg.traffic, seed)?;
    let mut mode = match controller {
        ControllerChoice::Orca => ControlMode::Bc,
        _ => ControlMode::Ac,
    };
    let mm_every = cfg.mm_every();
    let mut worlds = vec![world.clone()];
    let mut trace = Vec::with_capacity(cfg.sim.max_steps);
    let mut modes = Vec::new();
    let mut plans = Vec::new();
    let mut hold = 0usize;
    let mut reached = false;
    let mut collided = false;

    for step in 0..cfg.sim.max_steps {
        if step % mm_every == 0 {
            match (controller, ac.as_deref()) {
                (ControllerChoice::Simplex(_), Some(ac_ref)) => {
                    let rec =
                        decide_mode(mode, &world, ac_ref, &bc, &cfg.reachability, &cfg.safe_set)?;
                    if rec.switched && rec.mode == ControlMode::Bc {
                        bc.reset();
                    }
                    mode = rec.mode;
                    modes.push(rec);
                }
                (ControllerChoice::Orca, _) => modes.push(ModeRecord {
                    time: world.time,
                    step: world.step_index,
                    mode_before: ControlMode::Bc,
                    mode: ControlMode::Bc,
                    switched: false,
                    ac_reach_safe: None,
                    ac_step_safe: None,
                    recoverable: None,
                    in_safe_set: in_safe_set(&world, &cfg.safe_set),
                }),
                _ => {}
            }
        }
        let action = match (mode, ac.as_mut()) {
            (ControlMode::Ac, Some(a)) => a.control(&world),
            _ => {
                let a = bc.control(&world);
                if opts.record_plans {
                    if let Some(p) = bc.last_plan() {
                        if (p.time - world.time).abs() < 1e-9 {
                            plans.push(p.clone());
                        }
                    }
                }
                a
            }
        }
        .clamped(&cfg.world.ego_limits);
        let next = step_world(&world, action, cfg.sim.step);
        let reward = step_reward(&world, action, &next, &cfg.reward);
        collided = check_collision(&next);
        trace.push(trace_row(&next, mode, action, reward, &cfg.safe_set));
        if at_lane_center(&next, target) {
            hold += 1;
        } else {
            hold = 0;
        }
        world = next;
        worlds.push(world.clone());
        if collided {
            break;
        }
        if hold >= cfg.sim.hold_steps {
            reached = true;
            break;
        }
    }

    let invariant_holds = if controller.is_assured() {
        Some(invariant_monitor(
            &modes,
            &worlds,
            &cfg.safe_set,
            cfg.reachability.dt,
        )?)
    } else {
        None
    };
    let result = summarize(&trace, &modes, reached, collided, invariant_holds);
    Ok(Episode {
        seed,
        controller: controller.clone(),
        result,
        trace,
        modes,
        plans,
    })
}

fn trace_row(
    w: &WorldState,
    mode: ControlMode,
    a: ControlAction,
    reward: f64,
    spec: &SafeSetSpec,
) -> TraceRow {
    TraceRow {
        time: w.time,
        mode,
        ego_x: w.ego.x,
        ego_y: w.ego.y,
        ego_v: w.ego.speed,
        ego_heading: w.ego.heading,
        accel: a.accel,
        steer: a.steer,
        reward,
        safe: in_safe_set(w, spec),
        min_dis: w.min_distance(),
        obstacles: w
            .obstacles
            .iter()
            .map(|o| ObstacleRow {
                x: o.state.x,
                y: o.state.y,
                v: o.state.speed,
                heading: o.state.heading,
            })
            .collect(),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn summarize(
    trace: &[TraceRow],
    modes: &[ModeRecord],
    reached: bool,
    collided: bool,
    invariant_holds: Option<bool>,
) -> EpisodeResult {
    let steps = trace.len();
    let bc_steps = trace.iter().filter(|r| r.mode == ControlMode::Bc).count();
    EpisodeResult {
        reached_target_lane: reached,
        collided,
        avg_speed: mean(trace.iter().map(|r| r.ego_v)).unwrap_or(0.0),
        min_dis: trace
            .iter()
            .filter_map(|r| r.min_dis)
            .min_by(f64::total_cmp),
        avg_min_dis: mean(trace.iter().filter_map(|r| r.min_dis)),
        bc_active_ratio: if steps == 0 {
            0.0
        } else {
            bc_steps as f64 / steps as f64
        },
        switch_count: modes.iter().filter(|m| m.switched).count(),
        steps,
        invariant_holds,
    }
}

/// Aggregate over the trials of one (density, controller) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub density: f64,
    pub controller: ControllerChoice,
    pub trials: usize,
    pub target_lane_rate: f64,
    pub collision_rate: f64,
    pub avg_speed: f64,
    pub min_dis: Option<f64>,
    pub avg_min_dis: Option<f64>,
    pub bc_active_ratio: f64,
    pub switch_count: f64,
    pub invariant_rate: Option<f64>,
}

pub fn aggregate(
    density: f64,
    controller: &ControllerChoice,
    results: &[EpisodeResult],
) -> MetricsRow {
    let n = results.len().max(1) as f64;
    let rate =
        |f: &dyn Fn(&EpisodeResult) -> bool| results.iter().filter(|r| f(r)).count() as f64 / n;
    let inv: Vec<bool> = results.iter().filter_map(|r| r.invariant_holds).collect();
    MetricsRow {
        density,
        controller: controller.clone(),
        trials: results.len(),
        target_lane_rate: rate(&|r| r.reached_target_lane),
        collision_rate: rate(&|r| r.collided),
        avg_speed: mean(results.iter().map(|r| r.avg_speed)).unwrap_or(0.0),
        min_dis: mean(results.iter().filter_map(|r| r.min_dis)),
        avg_min_dis: mean(results.iter().filter_map(|r| r.avg_min_dis)),
        bc_active_ratio: mean(results.iter().map(|r| r.bc_active_ratio)).unwrap_or(0.0),
        switch_count: mean(results.iter().map(|r| r.switch_count as f64)).unwrap_or(0.0),
        invariant_rate: (!inv.is_empty())
            .then(|| inv.iter().filter(|&&b| b).count() as f64 / inv.len() as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub densities: Vec<f64>,
    pub controllers: Vec<ControllerChoice>,
    pub trials: usize,
    pub seed: u64,
    pub parallel: bool,
}

/// Every episode of a batch, grouped by cell in (density, controller) order.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub rows: Vec<MetricsRow>,
    pub episodes: Vec<Vec<EpisodeResult>>,
}

/// Runs `trials` episodes per cell with seeds `seed..seed+trials`. Parallel
/// and sequential execution give identical output.
pub fn run_batch(cfg: &ScenarioConfig, spec: &BatchSpec) -> Result<BatchOutcome, SimError> {
    if spec.trials == 0 {
        return Err(SimError::Config("trials must be at least 1".into()));
    }
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &d in &spec.densities {
        for c in &spec.controllers {
            for t in 0..spec.trials {
                jobs.push((d, c.clone(), spec.seed + t as u64));
            }
        }
    }
    let run = |(d, c, seed): &(f64, ControllerChoice, u64)| -> Result<EpisodeResult, SimError> {
        let mut cell = cfg.clone();
        cell.traffic.density = *d;
        Ok(run_episode(&cell, c, *seed, EpisodeOptions::default())?.result)
    };
    let results: Vec<Result<EpisodeResult, SimError>> = if spec.parallel {
        parallel_map(&jobs, run)
    } else {
        jobs.iter().map(run).collect()
    };
    let results: Vec<EpisodeResult> = results.into_iter().collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut episodes = Vec::new();
    let mut chunks = results.chunks(spec.trials);
    for &d in &spec.densities {
        for c in &spec.controllers {
            let chunk = chunks.next().expect("one chunk per cell");
            rows.push(aggregate(d, c, chunk));
            episodes.push(chunk.to_vec());
        }
    }
    Ok(BatchOutcome { rows, episodes })
}

#[cfg(feature = "parallel")]
fn parallel_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

fn opt6(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

pub const SUMMARY_HEADER: &str = "density,controller,trials,target_lane_rate,collision_rate,avg_speed,min_dis,avg_min_dis,bc_active_ratio,switch_count,invariant_rate";

/// Summary CSV with fixed six-decimal formatting.
pub fn summary_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{},{},{:.6},{:.6},{}\n",
            r.density,
            r.controller,
            r.trials,
            r.target_lane_rate,
            r.collision_rate,
            r.avg_speed,
            opt6(r.min_dis),
            opt6(r.avg_min_dis),
            r.bc_active_ratio,
            r.switch_count,
            opt6(r.invariant_rate),
        ));
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), SimError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(contents.as_bytes()).map_err(io_err(path))
}

/// BC-active ratio of one (level, density) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakeoverCell {
    pub level: f64,
    pub density: f64,
    pub trials: usize,
    pub bc_active_ratio: f64,
    pub collision_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TakeoverStudy {
    pub cells: Vec<TakeoverCell>,
    /// The highest level's ratio exceeds the lowest level's at every density.
    pub aggressive_exceeds_slow: bool,
    /// Each level's ratio never drops as density grows.
    pub nondecreasing_in_density: bool,
}

impl TakeoverStudy {
    pub fn ratio(&self, level: f64, density: f64) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.level == level && c.density == density)
            .map(|c| c.bc_active_ratio)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("level,density,trials,bc_active_ratio,collision_rate\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6}\n",
                c.level, c.density, c.trials, c.bc_active_ratio, c.collision_rate
            ));
        }
        out
    }
}

/// Simplex with constant-acceleration dummy ACs at each level and density.
/// The ego starts at the background traffic speed; from `v_max` every
/// positive level would saturate to the same behaviour.
pub fn dummy_takeover_study(
    cfg: &ScenarioConfig,
    levels: &[f64],
    densities: &[f64],
    trials: usize,
    seed: u64,
    parallel: bool,
) -> Result<TakeoverStudy, SimError> {
    let mut levels = levels.to_vec();
    levels.sort_by(f64::total_cmp);
    let mut densities = densities.to_vec();
    densities.sort_by(f64::total_cmp);
    let controllers: Vec<ControllerChoice> = levels
        .iter()
        .map(|&l| ControllerChoice::Simplex(AcSpec::Dummy(l)))
        .collect();
    let mut cfg = cfg.clone();
    cfg.traffic.ego_speed = cfg.world.obstacle_speed;
    let batch = run_batch(
        &cfg,
        &BatchSpec {
            densities: densities.clone(),
            controllers,
            trials,
            seed,
            parallel,
        },
    )?;
    let cells: Vec<TakeoverCell> = batch
        .rows
        .iter()
        .map(|r| TakeoverCell {
            level: match &r.controller {
                ControllerChoice::Simplex(AcSpec::Dummy(l)) => *l,
                _ => f64::NAN,
            },
            density: r.density,
            trials: r.trials,
            bc_active_ratio: r.bc_active_ratio,
            collision_rate: r.collision_rate,
        })
        .collect();
    let mut study = TakeoverStudy {
        cells,
        aggressive_exceeds_slow: true,
        nondecreasing_in_density: true,
    };
    if let (Some(&lo), Some(&hi)) = (levels.first(), levels.last()) {
        for &d in &densities {
            if levels.len() > 1 && study.ratio(hi, d) <= study.ratio(lo, d) {
                study.aggressive_exceeds_slow = false;
            }
        }
    }
    for &l in &levels {
        for pair in densities.windows(2) {
            if study.ratio(l, pair[1]) < study.ratio(l, pair[0]) {
                study.nondecreasing_in_density = false;
            }
        }
    }
    Ok(study)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn fmt_flag(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

pub const TRACE_HEADER: &str =
    "time,mode,ego_x,ego_y,ego_v,ego_heading,accel,steer,reward,safe,min_dis";

/// Trace CSV: the fixed columns, then `obs{i}_x,obs{i}_y,obs{i}_v,obs{i}_heading`
/// for each obstacle. Floats use the shortest round-trip representation.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let n = trace.first().map_or(0, |r| r.obstacles.len());
    let mut out = String::from(TRACE_HEADER);
    for i in 0..n {
        out.push_str(&format!(",obs{i}_x,obs{i}_y,obs{i}_v,obs{i}_heading"));
    }
    out.push('\n');
    for r in trace {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.time,
            r.mode,
            r.ego_x,
            r.ego_y,
            r.ego_v,
            r.ego_heading,
            r.accel,
            r.steer,
            r.reward,
            if r.safe { 1 } else { 0 },
            fmt_opt(r.min_dis)
        ));
        for o in &r.obstacles {
            out.push_str(&format!(",{},{},{},{}", o.x, o.y, o.v, o.heading));
        }
        out.push('\n');
    }
    out
}

pub const MODES_HEADER: &str =
    "time,step,mode_before,mode,switched,ac_reach_safe,ac_step_safe,recoverable,in_safe_set";

pub fn modes_csv(modes: &[ModeRecord]) -> String {
    let mut out = String::from(MODES_HEADER);
    out.push('\n');
    for m in modes {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            m.time,
            m.step,
            m.mode_before,
            m.mode,
            if m.switched { 1 } else { 0 },
            fmt_flag(m.ac_reach_safe),
            fmt_flag(m.ac_step_safe),
            fmt_flag(m.recoverable),
            if m.in_safe_set { 1 } else { 0 },
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceMeta {
    pub seed: u64,
    pub controller: ControllerChoice,
    pub config: ScenarioConfig,
    pub result: EpisodeResult,
}

/// Sidecar paths next to a trace file: `<stem>.modes.csv`, `<stem>.meta.json`
/// and `<stem>.plans.jsonl`.
pub fn sidecar_path(trace_path: &Path, suffix: &str) -> PathBuf {
    let stem = trace_path
        .file_stem()
        .map_or_else(|| "trace".into(), |s| s.to_string_lossy().into_owned());
    trace_path.with_file_name(format!("{stem}.{suffix}"))
}

/// Writes the trace CSV plus the mode sidecar, the metadata sidecar and,
/// when plans were recorded, one JSON plan record per line.
pub fn emit_trace(episode: &Episode, cfg: &ScenarioConfig, path: &Path) -> Result<(), SimError> {
    write_file(path, &trace_csv(&episode.trace))?;
    write_file(&sidecar_path(path, "modes.csv"), &modes_csv(&episode.modes))?;
    let meta = TraceMeta {
        seed: episode.seed,
        controller: episode.controller.clone(),
        config: cfg.clone(),
        result: episode.result.clone(),
    };
    let meta_path = sidecar_path(path, "meta.json");
    let json = serde_json::to_string_pretty(&meta).map_err(|source| SimError::Json {
        path: meta_path.clone(),
        source,
    })?;
    write_file(&meta_path, &json)?;
    if !episode.plans.is_empty() {
        let plans_path = sidecar_path(path, "plans.jsonl");
        let mut lines = String::new();
        for p in &episode.plans {
            let line = serde_json::to_string(p).map_err(|source| SimError::Json {
                path: plans_path.clone(),
                source,
            })?;
            lines.push_str(&line);
            lines.push('\n');
        }
        write_file(&plans_path, &lines)?;
    }
    Ok(())
}
