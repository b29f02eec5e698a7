//! Command-line entry points and the dotted-key run configuration.
//!
//! A config file holds one `key = value` per line; `#` starts a comment.
//! Values are JSON (`0.001`, `[128, 64]`, `"flat_tunnel"`), and a bare word
//! is taken as a string. Every key must already exist in the defaults.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::neural::decode_checkpoint;
use crate::sensing::{encode_scans, format_grid, scan, SensorPose};
use crate::simenv::Profile;
use crate::terrain::{build_profile_with_length, dump_columns, TerrainProfile, TerrainSpec};
use crate::trainer::{evaluate, train, Agent, Direction, EvalConfig, EvalReport, TrainConfig, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => EXIT_USAGE,
            CliError::Io { .. } => EXIT_FAILURE,
            CliError::Train(e) => match e {
                TrainError::InvalidConfig { .. } | TrainError::CheckpointMismatch(_) | TrainError::Terrain(_) => EXIT_USAGE,
                TrainError::NonFinite { .. } => EXIT_NUMERICAL,
                _ => EXIT_FAILURE,
            },
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Flattens nested objects into dotted keys; arrays and scalars are leaves.
pub fn flatten(value: &Value) -> Vec<(String, Value)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, Value)>) {
        match v {
            Value::Object(map) => {
                for (k, child) in map {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            leaf => out.push((prefix.to_string(), leaf.clone())),
        }
    }
    let mut out = Vec::new();
    walk("", value, &mut out);
    out
}

fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_dotted(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let unknown = || CliError::Config { key: key.to_string(), reason: "unknown key".into() };
    let mut node = root;
    for part in key.split('.') {
        node = node.as_object_mut().and_then(|m: &mut Map<String, Value>| m.get_mut(part)).ok_or_else(unknown)?;
    }
    if node.is_object() {
        return Err(CliError::Config { key: key.to_string(), reason: "names a section, not a value".into() });
    }
    *node = value;
    Ok(())
}

/// `key = value` pairs from a config file, in order.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, Value)>, CliError> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {}: expected `key = value`", n + 1)))?;
        pairs.push((k.trim().to_string(), parse_value(v)));
    }
    Ok(pairs)
}

/// Builds a training config from the profile defaults, then file pairs, then overrides.
pub fn build_config(pairs: &[(String, Value)]) -> Result<TrainConfig, CliError> {
    let profile = match pairs.iter().rev().find(|(k, _)| k == "profile") {
        Some((_, v)) => serde_json::from_value::<Profile>(v.clone())
            .map_err(|e| CliError::Config { key: "profile".into(), reason: e.to_string() })?,
        None => Profile::Crawler,
    };
    let mut root = serde_json::to_value(TrainConfig::for_profile(profile)).expect("config serializes");
    for (k, v) in pairs {
        set_dotted(&mut root, k, v.clone())?;
    }
    let cfg: TrainConfig = serde_json::from_value(root).map_err(|e| {
        let key = pairs.last().map_or_else(String::new, |(k, _)| k.clone());
        CliError::Config { key, reason: e.to_string() }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Every config key with its default value, one per line.
pub fn config_reference() -> String {
    let mut out = String::from("# Run configuration keys and defaults (crawler profile).\n");
    let root = serde_json::to_value(TrainConfig::default()).expect("config serializes");
    for (k, v) in flatten(&root) {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

fn parse_set(s: &str) -> Result<(String, String), String> {
    s.split_once('=').map(|(k, v)| (k.trim().to_string(), v.to_string())).ok_or_else(|| format!("expected key=value, got `{s}`"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Fwd,
    Bwd,
}

#[derive(Debug, Parser)]
#[command(name = "crawlspace", version, about = "Crawl-space locomotion training and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy; writes config.json, metrics.jsonl, timing.jsonl and checkpoints/.
    #[command(after_long_help = config_reference())]
    Train {
        /// Dotted-key config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one key, e.g. `--set ppo.lr=0.0005`. Applied after the file.
        #[arg(long = "set", value_parser = parse_set)]
        set: Vec<(String, String)>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint written by an earlier run with the same config.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Suppress per-iteration progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Evaluate a checkpoint with the deterministic mean action.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Terrain as `kind[:key=value,...]`, or `open`.
        #[arg(long)]
        terrain: String,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, value_enum, default_value_t = DirectionArg::Fwd)]
        direction: DirectionArg,
        /// Run config; defaults to `config.json` in the run directory of the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Commanded speed magnitude, m/s.
        #[arg(long, default_value_t = 0.6)]
        speed: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated tunnel heights to sweep, one table row each.
        #[arg(long, value_delimiter = ',')]
        heights: Vec<f64>,
        /// Write the full reports as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print both scans at a pose as 30x24 grids and write a binary record.
    ScanDebug {
        /// Terrain as `kind[:key=value,...]`, or `open`.
        #[arg(long)]
        terrain: String,
        /// Sensor pose `x,z,pitch` in m, m, rad.
        #[arg(long, allow_hyphen_values = true)]
        pose: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a terrain profile as `x g(x) c(x)` columns at 1 cm spacing.
    TerrainDump {
        #[arg(long)]
        terrain: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print every config key with its default.
    ConfigReference,
}

fn parse_terrain(text: &str) -> Result<Option<TerrainSpec>, CliError> {
    if text.trim() == "open" {
        return Ok(None);
    }
    TerrainSpec::parse(text).map(Some).map_err(|e| CliError::Usage(e.to_string()))
}

fn terrain_profile(spec: Option<&TerrainSpec>, segment_length: f64) -> Result<TerrainProfile, CliError> {
    match spec {
        Some(s) => build_profile_with_length(s, segment_length).map_err(|e| CliError::Usage(e.to_string())),
        None => Ok(TerrainProfile::open(segment_length)),
    }
}

fn parse_pose(text: &str, profile: &TerrainProfile) -> Result<SensorPose, CliError> {
    let bad = |why: &str| CliError::Usage(format!("malformed pose `{text}`: {why}"));
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad("expected x,z,pitch"))?;
    let [x, z, pitch] = parts.as_slice() else {
        return Err(bad("expected x,z,pitch"));
    };
    if !(x.is_finite() && z.is_finite() && pitch.is_finite()) {
        return Err(bad("non-finite value"));
    }
    if profile.is_solid(*x, *z) {
        return Err(bad("sensor origin inside solid terrain"));
    }
    Ok(SensorPose::planar(*x, *z, *pitch))
}

fn load_run_config(ckpt: &Path, explicit: Option<&Path>) -> Result<TrainConfig, CliError> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => ckpt
            .parent()
            .and_then(Path::parent)
            .map(|run| run.join("config.json"))
            .filter(|p| p.exists())
            .ok_or_else(|| CliError::Usage("no config.json beside the checkpoint; pass --config".into()))?,
    };
    let text = read(&path)?;
    let cfg: TrainConfig = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| CliError::Config { key: path.display().to_string(), reason: e.to_string() })?
    } else {
        build_config(&parse_config_text(&text)?)?
    };
    Ok(cfg)
}

fn report_row(height: Option<f64>, crouched: f64, r: &EvalReport) -> String {
    let (h, rel) = match height {
        Some(h) => (format!("{h:.3}"), format!("{:.3}", h / crouched)),
        None => ("-".into(), "-".into()),
    };
    let time = r.mean_success_time.map_or_else(|| "-".into(), |t| format!("{t:.2}"));
    format!(
        "{h:>8} {rel:>8} {:>8.3} {time:>8} {:>8.3} {:>8.3}",
        r.success_rate, r.collision_accuracy, r.mean_traversal
    )
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config, set, out, resume, quiet } => {
            let mut pairs = match &config {
                Some(p) => parse_config_text(&read(p)?)?,
                None => Vec::new(),
            };
            pairs.extend(set.iter().map(|(k, v)| (k.clone(), parse_value(v))));
            let cfg = build_config(&pairs)?;
            let last = train(&cfg, &out, resume.as_deref(), |row, t| {
                if !quiet {
                    println!(
                        "iter {:>5}  tracking {:.3}  reward {:+.3}  level {:.2}  coll-acc {:.3}  lr {:.1e}  {:.3}s",
                        row.iteration, row.reward.tracking, row.reward.weighted_total, row.mean_level,
                        row.collision_accuracy, row.lr, t.iteration_s
                    );
                }
            })?;
            println!("final checkpoint: {}", last.display());
        }
        Command::Eval { ckpt, terrain, episodes, direction, config, speed, seed, heights, report } => {
            if episodes == 0 {
                return Err(CliError::Usage("--episodes must be at least 1".into()));
            }
            let cfg = load_run_config(&ckpt, config.as_deref())?;
            let bytes = fs::read(&ckpt).map_err(|source| CliError::Io { path: ckpt.clone(), source })?;
            let checkpoint = decode_checkpoint(&bytes).map_err(|e| CliError::Usage(e.to_string()))?;
            let agent = Agent::from_checkpoint(&cfg.robot, cfg.scales.clone(), cfg.network.swap_scan_latents, checkpoint)?;
            let base = parse_terrain(&terrain)?;
            let direction = match direction {
                DirectionArg::Fwd => Direction::Forward,
                DirectionArg::Bwd => Direction::Backward,
            };
            let cases: Vec<Option<TerrainSpec>> = if heights.is_empty() {
                vec![base]
            } else {
                let spec = base.ok_or_else(|| CliError::Usage("--heights needs a tunnel terrain".into()))?;
                if !spec.kind.has_tunnel() {
                    return Err(CliError::Usage("--heights needs a tunnel terrain".into()));
                }
                heights.iter().map(|&h| Some(TerrainSpec { tunnel_height: h, ..spec })).collect()
            };
            let crouched = cfg.robot.crouched_height();
            println!("{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "height", "relative", "success", "time_s", "coll_acc", "traverse");
            let mut reports = Vec::new();
            for terrain in cases {
                terrain_profile(terrain.as_ref(), cfg.segment_length)?;
                let ec = EvalConfig { terrain, episodes, direction, speed, seed, segment_length: cfg.segment_length };
                let r = evaluate(&agent, &cfg.robot, cfg.rewards, cfg.ppo.action_scale, &ec)?;
                let height = terrain.filter(|t| t.kind.has_tunnel()).map(|t| t.tunnel_height);
                println!("{}", report_row(height, crouched, &r));
                reports.push((ec, r));
            }
            if let Some(path) = report {
                let json = serde_json::to_string_pretty(&reports).map_err(TrainError::from)?;
                write(&path, json)?;
            }
        }
        Command::ScanDebug { terrain, pose, out } => {
            let spec = parse_terrain(&terrain)?;
            let profile = terrain_profile(spec.as_ref(), crate::terrain::DEFAULT_SEGMENT_LENGTH)?;
            let pose = parse_pose(&pose, &profile)?;
            let (ground, space) = scan(&profile, &pose);
            println!("ground\n{}\nspace\n{}", format_grid(&ground), format_grid(&space));
            if let Some(path) = out {
                write(&path, encode_scans(&ground, &space))?;
            }
        }
        Command::TerrainDump { terrain, out } => {
            let spec = parse_terrain(&terrain)?;
            let profile = terrain_profile(spec.as_ref(), crate::terrain::DEFAULT_SEGMENT_LENGTH)?;
            let text = dump_columns(&profile);
            match out {
                Some(path) => write(&path, text)?,
                None => print!("{text}"),
            }
        }
        Command::ConfigReference => print!("{}", config_reference()),
    }
    Ok(())
}
