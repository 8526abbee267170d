use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use simplex_drive::advanced_controllers::AcSpec;
use simplex_drive::sim::{
    dummy_takeover_study, emit_trace, run_batch, run_episode, summary_csv, write_file, BatchSpec,
    ControllerChoice, EpisodeOptions, MetricsRow, ScenarioConfig, SimError,
};

#[derive(Parser)]
#[command(
    name = "simplex-drive",
    version,
    about = "Runtime-assured lane-change simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Simplex,
    Orca,
    AcOnly,
}

impl Kind {
    fn label(self) -> &'static str {
        match self {
            Kind::Simplex => "simplex",
            Kind::Orca => "orca",
            Kind::AcOnly => "ac-only",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and print its metrics as JSON.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// scripted | dummy:<accel> | mlp:<path> | mlp:zero
        #[arg(long, default_value = "scripted")]
        ac: AcSpec,
        #[arg(long, value_enum, default_value_t = Kind::Simplex)]
        controller: Kind,
        /// Overrides the configured traffic density.
        #[arg(long)]
        density: Option<f64>,
        /// Per-step trace CSV; sidecars are written next to it.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also write every baseline plan to `<trace stem>.plans.jsonl`.
        #[arg(long, requires = "trace")]
        dump_planes: bool,
    },
    /// Run a density × controller grid and write the summary CSV.
    Batch {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,1.5,2")]
        densities: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Full controller labels, e.g. `orca,simplex:scripted,ac-only:dummy:5`.
        #[arg(long, value_delimiter = ',', default_value = "orca,simplex:scripted")]
        controllers: Vec<ControllerChoice>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Takeover ratio of the baseline under constant-acceleration ACs.
    StudyDummy {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,5")]
        levels: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1,1.5,2")]
        densities: Vec<f64>,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default configuration as JSON.
    DefaultConfig,
}

fn load(path: &Option<PathBuf>) -> Result<ScenarioConfig, SimError> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), SimError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Safety failures of assured controllers, one message each.
fn row_failures(rows: &[MetricsRow]) -> Vec<String> {
    let mut out = Vec::new();
    for r in rows.iter().filter(|r| r.controller.is_assured()) {
        if r.collision_rate > 0.0 {
            out.push(format!(
                "{} at density {}: collision rate {}",
                r.controller, r.density, r.collision_rate
            ));
        }
        if r.invariant_rate.is_some_and(|x| x < 1.0) {
            out.push(format!(
                "{} at density {}: invariant held in {:.1}% of episodes",
                r.controller,
                r.density,
                100.0 * r.invariant_rate.unwrap_or(0.0)
            ));
        }
    }
    out
}

fn execute(cmd: Command) -> Result<Vec<String>, SimError> {
    match cmd {
        Command::Run {
            config,
            seed,
            ac,
            controller,
            density,
            trace,
            dump_planes,
        } => {
            let mut cfg = load(&config)?;
            if let Some(d) = density {
                cfg.traffic.density = d;
            }
            let choice = ControllerChoice::from_parts(controller.label(), &ac)?;
            let ep = run_episode(
                &cfg,
                &choice,
                seed,
                EpisodeOptions {
                    record_plans: dump_planes,
                },
            )?;
            if let Some(path) = &trace {
                emit_trace(&ep, &cfg, path)?;
            }
            let json = serde_json::to_string_pretty(&ep.result).expect("metrics serialize");
            println!("{json}");
            let mut failures = Vec::new();
            if choice.is_assured() {
                if ep.result.collided {
                    failures.push(format!("{choice} seed {seed}: collision"));
                }
                if ep.result.invariant_holds == Some(false) {
                    failures.push(format!("{choice} seed {seed}: invariant violated"));
                }
            }
            Ok(failures)
        }
        Command::Batch {
            config,
            densities,
            trials,
            controllers,
            seed,
            parallel,
            out,
        } => {
            let cfg = load(&config)?;
            let spec = BatchSpec {
                densities,
                controllers,
                trials,
                seed,
                parallel,
            };
            let outcome = run_batch(&cfg, &spec)?;
            emit(&out, &summary_csv(&outcome.rows))?;
            Ok(row_failures(&outcome.rows))
        }
        Command::StudyDummy {
            config,
            levels,
            densities,
            trials,
            seed,
            parallel,
            out,
        } => {
            let cfg = load(&config)?;
            let study = dummy_takeover_study(&cfg, &levels, &densities, trials, seed, parallel)?;
            emit(&out, &study.csv())?;
            if !study.aggressive_exceeds_slow || !study.nondecreasing_in_density {
                eprintln!(
                    "note: takeover ratio not monotone (aggressive > slow: {}, non-decreasing in density: {})",
                    study.aggressive_exceeds_slow, study.nondecreasing_in_density
                );
            }
            Ok(study
                .cells
                .iter()
                .filter(|c| c.collision_rate > 0.0)
                .map(|c| {
                    format!(
                        "dummy {} at density {}: collision rate {}",
                        c.level, c.density, c.collision_rate
                    )
                })
                .collect())
        }
        Command::DefaultConfig => {
            let json =
                serde_json::to_string_pretty(&ScenarioConfig::default()).expect("config serialize");
            println!("{json}");
            Ok(Vec::new())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            for f in failures {
                eprintln!("safety check failed: {f}");
            }
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
