//! The `twin` command line. Subcommands print the same JSON payloads the API serves.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;
use twin_core::forecasting::pipeline::run_benchmark;
use twin_core::forecasting::Exogenous;
use twin_core::recommender::{synthetic_behavior, SYNTHETIC_SEED};
use twin_core::series::{resample, GapPolicy, Unit};
use twin_core::solar::HorizonMask;
use twin_ingest::replay::{self, Speed};
use twin_ingest::simulator::{simulate, SimulatorConfig};
use twin_ingest::{EventStore, StoreSnapshot};

use crate::config::TwinConfig;
use crate::ops::{self, RecommendRequest};

#[derive(Debug, Parser)]
#[command(name = "twin", version, about = "House digital twin: ingestion, sun, forecasts, diagnostics and recommendations")]
pub struct Cli {
    /// Twin configuration (TOML). Defaults to the built-in simulated house.
    #[arg(long, global = true, env = "TWIN_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Serve the /v1 HTTP API.
    Serve,
    /// Replay a recorded CSV into the configured store.
    Replay {
        file: PathBuf,
        /// `instant`, or a factor by which recorded time is sped up.
        #[arg(long, default_value = "instant")]
        speed: String,
    },
    /// Forecast a sensor, or score the ensemble against the baseline with --benchmark.
    Forecast {
        #[arg(long)]
        sensor: String,
        #[arg(long, default_value_t = 288)]
        horizon: usize,
        /// Comma-separated families, e.g. `arima,gbm`.
        #[arg(long)]
        models: Option<String>,
        /// Read observations from this CSV instead of the configured store and sources.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        benchmark: bool,
    },
    /// Sun position over the house.
    Sun {
        /// `YYYY-MM-DD`
        #[arg(long)]
        date: String,
        /// UT `HH:MM`
        #[arg(long)]
        time: String,
    },
    /// Daylight on the last day of each month.
    SunHours {
        #[arg(long)]
        year: i32,
        /// Horizon mask file of `azimuth,elevation` lines.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Heat-map grid document for a room.
    Heatmap {
        #[arg(long)]
        room: String,
        /// RFC 3339 instant; defaults to the newest observation.
        #[arg(long)]
        at: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Recommend a fireplace lighting step for a scenario day.
    Recommend {
        /// 288 outdoor temperatures separated by commas or whitespace.
        #[arg(long, conflicts_with = "day")]
        scenario: Option<PathBuf>,
        /// Use a stored day of the matrix as the scenario, leaving that day out of the matrix.
        #[arg(long)]
        day: Option<u32>,
        #[arg(long)]
        user: Option<String>,
        /// Behavior matrix CSV; overrides the configured one.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Generate fixtures: simulated observations and a synthetic behavior matrix.
    Simulate {
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, default_value_t = 90)]
        days: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

pub fn load_config(path: Option<&Path>) -> anyhow::Result<TwinConfig> {
    Ok(match path {
        Some(p) => TwinConfig::load(p)?,
        None => TwinConfig::default(),
    })
}

/// Observations from `data` when given, otherwise the configured store plus startup sources.
fn snapshot(config: &TwinConfig, data: Option<&Path>) -> anyhow::Result<StoreSnapshot> {
    let store = match data {
        Some(path) => {
            let store = EventStore::in_memory();
            replay::replay_into(path, &store)?;
            Arc::new(store)
        }
        None => {
            let store = crate::open_store(config)?;
            crate::load_static_sources(config, &store)?;
            store
        }
    };
    Ok(store.snapshot())
}

/// Pretty JSON on stdout; a closed pipe (e.g. `| head`) is not an error.
fn print<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{}", serde_json::to_string_pretty(value)?) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Serve => tokio::runtime::Runtime::new()?.block_on(crate::serve(config)),
        Command::Replay { file, speed } => {
            let speed: Speed = speed.parse()?;
            let store = crate::open_store(&config)?;
            let mut n = 0;
            for o in replay::replay(&file, speed)? {
                store.append(std::slice::from_ref(&o))?;
                n += 1;
            }
            print(&serde_json::json!({ "replayed": n, "version": store.version() }))
        }
        Command::Forecast { sensor, horizon, models, data, benchmark } => {
            let snap = snapshot(&config, data.as_deref())?;
            if benchmark {
                let raw = snap.raw_series(&sensor, Unit::Celsius)?;
                let series = resample(&raw, ops::STEP_MINUTES, GapPolicy::default())?;
                return print(&run_benchmark(&series, &Exogenous::new(), &config.forecasting.pipeline)?);
            }
            let kinds = ops::parse_models(models.as_deref(), &config.forecasting.models)?;
            print(&ops::forecast(&config, &snap, &sensor, horizon, &kinds)?)
        }
        Command::Sun { date, time } => print(&ops::sun(&config.house, &date, &time)?),
        Command::SunHours { year, mask } => {
            let mask = mask
                .map(|p| -> anyhow::Result<HorizonMask<f64>> {
                    let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    Ok(HorizonMask::parse(&text)?)
                })
                .transpose()?;
            print(&ops::sun_hours(&config.house, year, mask.as_ref())?)
        }
        Command::Heatmap { room, at, data } => {
            let snap = snapshot(&config, data.as_deref())?;
            let at = at.map(|a| ops::parse_time("at", &a)).transpose()?;
            print(&ops::heatmap(&config, &snap, &room, at)?)
        }
        Command::Recommend { scenario, day, user, matrix } => {
            let mut config = config;
            if matrix.is_some() {
                config.recommender.behavior_matrix = matrix;
            }
            let Some(mut m) = crate::load_matrix(&config)? else { bail!("no behavior matrix: pass --matrix or configure one") };
            let outdoor_temps = match (scenario, day) {
                (Some(path), _) => ops::parse_scenario(&fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?,
                (None, Some(d)) => {
                    let temps = m.outdoor(d).with_context(|| format!("day {d} is not in the matrix"))?.to_vec();
                    m = m.without_day(d);
                    temps
                }
                (None, None) => bail!("pass --scenario or --day"),
            };
            print(&ops::recommend_for(&config, Some(&m), &RecommendRequest { outdoor_temps, user })?)
        }
        Command::Simulate { out, days, seed } => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let sim = simulate(&SimulatorConfig { days, seed, ..SimulatorConfig::default() })?;
            let obs_path = out.join("observations.csv");
            sim.write_csv(BufWriter::new(File::create(&obs_path)?))?;
            let matrix_path = out.join("behavior_matrix.csv");
            synthetic_behavior(SYNTHETIC_SEED).matrix.write_csv(BufWriter::new(File::create(&matrix_path)?))?;
            print(&serde_json::json!({
                "observations": obs_path,
                "observation_count": sim.observations.len(),
                "fireplace_events": sim.fireplace_lit.len(),
                "behavior_matrix": matrix_path,
            }))
        }
    }
}
