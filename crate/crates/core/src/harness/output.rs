//! Run directory layout:
//!
//! ```text
//! config.json                       canonical RunConfig, enough to re-run
//! trajectories.jsonl                one trajectory per line, env then episode order
//! metrics.csv                       env_seed, episode, goal, reward, steps, cum_avg_reward, strategy
//! updates.jsonl                     per-episode strategy report (calls, updated goals, problems)
//! memory/<env_seed>/<episode>.json  memory after each episode
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{cumulative_average, EnvSeries, RewardTable};
use super::{RunConfig, RunRecord};
use crate::canonical::to_canonical_json;
use crate::episode::{self, LogError, Trajectory};
use crate::strategies::Memory;
use crate::textview::render_goal;
use crate::world::{GenConfig, GridWorld};

pub const CONFIG_FILE: &str = "config.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const UPDATES_FILE: &str = "updates.jsonl";
pub const MEMORY_DIR: &str = "memory";

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, message: impl ToString) -> OutputError {
    OutputError::Format { path: path.to_path_buf(), message: message.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub env_seed: u64,
    pub episode: usize,
    pub goal: String,
    pub reward: f64,
    pub steps: usize,
    pub cum_avg_reward: f64,
    pub strategy: String,
}

pub fn metric_rows(record: &RunRecord) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for env in &record.envs {
        let cum = cumulative_average(&env.rewards()).unwrap_or_default();
        for (i, e) in env.episodes.iter().enumerate() {
            rows.push(MetricRow {
                env_seed: env.env_seed,
                episode: i,
                goal: render_goal(&e.trajectory.goal),
                reward: e.trajectory.reward,
                steps: e.trajectory.steps.len(),
                cum_avg_reward: cum[i],
                strategy: record.config.strategy.name().to_string(),
            });
        }
    }
    rows
}

pub fn write_text(path: &Path, text: &str) -> Result<(), OutputError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), OutputError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| format_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn memory_snapshot_path(dir: &Path, env_seed: u64, episode: usize) -> PathBuf {
    dir.join(MEMORY_DIR).join(env_seed.to_string()).join(format!("{episode}.json"))
}

pub fn write_run(dir: &Path, record: &RunRecord) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let config_path = dir.join(CONFIG_FILE);
    write_text(&config_path, &(to_canonical_json(&record.config).map_err(|e| format_err(&config_path, e))? + "\n"))?;

    let traj_path = dir.join(TRAJECTORIES_FILE);
    let mut out = BufWriter::new(File::create(&traj_path).map_err(io_err(&traj_path))?);
    episode::write_jsonl(&mut out, record.envs.iter().flat_map(|e| &e.episodes).map(|e| &e.trajectory))
        .and_then(|_| out.flush())
        .map_err(io_err(&traj_path))?;

    let updates_path = dir.join(UPDATES_FILE);
    let mut out = BufWriter::new(File::create(&updates_path).map_err(io_err(&updates_path))?);
    for env in &record.envs {
        for (i, e) in env.episodes.iter().enumerate() {
            let line = serde_json::json!({"env_seed": env.env_seed, "episode": i, "report": e.update});
            writeln!(out, "{line}").map_err(io_err(&updates_path))?;
        }
    }
    out.flush().map_err(io_err(&updates_path))?;

    write_csv(&dir.join(METRICS_FILE), &metric_rows(record))?;

    for env in &record.envs {
        for (i, e) in env.episodes.iter().enumerate() {
            let path = memory_snapshot_path(dir, env.env_seed, i);
            write_text(&path, &(to_canonical_json(&e.memory).map_err(|err| format_err(&path, err))? + "\n"))?;
        }
    }
    Ok(())
}

pub fn read_config(path: &Path) -> Result<RunConfig, OutputError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>, OutputError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format_err(path, e))?;
    r.deserialize().collect::<Result<Vec<MetricRow>, _>>().map_err(|e| format_err(path, e))
}

pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, OutputError> {
    let file = File::open(path).map_err(io_err(path))?;
    episode::read_jsonl(BufReader::new(file)).map_err(|e| match e {
        LogError::Io(source) => OutputError::Io { path: path.to_path_buf(), source },
        other => format_err(path, other),
    })
}

/// Reward series of a saved run, in the order of its configured env seeds.
pub fn read_reward_table(dir: &Path) -> Result<(RunConfig, RewardTable), OutputError> {
    let config = read_config(&dir.join(CONFIG_FILE))?;
    let metrics_path = dir.join(METRICS_FILE);
    let rows = read_metrics(&metrics_path)?;
    let mut series = Vec::with_capacity(config.env_seeds.len());
    for &seed in &config.env_seeds {
        let mut env_rows: Vec<&MetricRow> = rows.iter().filter(|r| r.env_seed == seed).collect();
        env_rows.sort_by_key(|r| r.episode);
        if env_rows.len() != config.episodes_per_env || env_rows.iter().enumerate().any(|(i, r)| r.episode != i) {
            return Err(format_err(
                &metrics_path,
                format!("environment {seed} does not have episodes 0..{}", config.episodes_per_env),
            ));
        }
        series.push(EnvSeries { env_seed: seed, rewards: env_rows.iter().map(|r| r.reward).collect() });
    }
    let table = RewardTable { strategy: config.strategy.name().to_string(), goal_seed: config.goal_seed, series };
    Ok((config, table))
}

/// Memory after the last episode of each environment.
pub fn read_final_memories(dir: &Path) -> Result<Vec<(u64, Memory)>, OutputError> {
    let config = read_config(&dir.join(CONFIG_FILE))?;
    config
        .env_seeds
        .iter()
        .map(|&seed| {
            let path = memory_snapshot_path(dir, seed, config.episodes_per_env.saturating_sub(1));
            let text = fs::read_to_string(&path).map_err(io_err(&path))?;
            let memory = serde_json::from_str(&text).map_err(|e| format_err(&path, e))?;
            Ok((seed, memory))
        })
        .collect()
}

pub const WORLD_INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldIndexEntry {
    pub seed: u64,
    pub file: String,
}

/// Index of a generated environment set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldIndex {
    pub config: GenConfig,
    pub worlds: Vec<WorldIndexEntry>,
}

pub fn world_file_name(seed: u64) -> String {
    format!("world_{seed}.json")
}

/// Writes one canonical snapshot per world plus `index.json`.
pub fn write_world_set(dir: &Path, config: GenConfig, worlds: &[GridWorld]) -> Result<(), OutputError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut entries = Vec::with_capacity(worlds.len());
    for w in worlds {
        let file = world_file_name(w.seed);
        write_text(&dir.join(&file), &(w.to_snapshot_json() + "\n"))?;
        entries.push(WorldIndexEntry { seed: w.seed, file });
    }
    let index_path = dir.join(WORLD_INDEX_FILE);
    let index = WorldIndex { config, worlds: entries };
    write_text(&index_path, &(to_canonical_json(&index).map_err(|e| format_err(&index_path, e))? + "\n"))
}

/// Loads a world set and checks every snapshot against its seed, so that a
/// run config (which records only seeds) reproduces the same worlds.
pub fn read_world_set(dir: &Path) -> Result<(GenConfig, Vec<GridWorld>), OutputError> {
    let index_path = dir.join(WORLD_INDEX_FILE);
    let text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
    let index: WorldIndex = serde_json::from_str(&text).map_err(|e| format_err(&index_path, e))?;
    let mut worlds = Vec::with_capacity(index.worlds.len());
    for entry in &index.worlds {
        let path = dir.join(&entry.file);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let world = GridWorld::from_snapshot_json(&text).map_err(|e| format_err(&path, e))?;
        let expected = GridWorld::generate(entry.seed, index.config).map_err(|e| format_err(&path, e))?;
        if world != expected {
            return Err(format_err(&path, format!("snapshot differs from the world generated by seed {}", entry.seed)));
        }
        worlds.push(world);
    }
    Ok((index.config, worlds))
}
