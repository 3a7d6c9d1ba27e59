//! Experiment streams: one memory-carrying sequence of episodes per
//! environment, plus metrics, run outputs and the workflow validity check.

pub mod metrics;
pub mod output;
pub mod plot;
pub mod validity;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{run_episode, EpisodeError, EpisodeSpec, LmPolicy, Trajectory, DEFAULT_HORIZON};
use crate::lm::{LmBackend, LmParams};
use crate::oracle::{AgentMode, DemoBackend};
use crate::strategies::{after_episode, render_memory, AfterEpisodeReport, Memory, StrategyKind};
use crate::world::{GenConfig, Goal, GridWorld, WorldError};

pub use metrics::{cumulative_average, gain_over_baseline, EnvSeries, MetricError, RewardTable};
pub use validity::{sample_workflows, validity_analysis, FailureClass, ValidityReport, WorkflowSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackendSpec {
    Live,
    Scripted(AgentMode),
}

impl BackendSpec {
    pub fn is_live(self) -> bool {
        self == BackendSpec::Live
    }

    /// Builds the per-world backend for scripted specs; `None` for live.
    pub fn scripted_for(self, world: &GridWorld) -> Option<Arc<dyn LmBackend>> {
        match self {
            BackendSpec::Live => None,
            BackendSpec::Scripted(mode) => Some(Arc::new(DemoBackend::new(world, mode))),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendSpec::Live => "live",
            BackendSpec::Scripted(AgentMode::Explore) => "scripted:bfs-demo",
            BackendSpec::Scripted(AgentMode::Oracle) => "scripted:oracle",
            BackendSpec::Scripted(AgentMode::TurnLeft) => "scripted:turn-left",
        })
    }
}

#[derive(Debug, Error)]
#[error("unknown backend '{0}' (expected live, scripted:bfs-demo, scripted:oracle or scripted:turn-left)")]
pub struct UnknownBackend(String);

impl FromStr for BackendSpec {
    type Err = UnknownBackend;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(BackendSpec::Live),
            "scripted:bfs-demo" => Ok(BackendSpec::Scripted(AgentMode::Explore)),
            "scripted:oracle" => Ok(BackendSpec::Scripted(AgentMode::Oracle)),
            "scripted:turn-left" => Ok(BackendSpec::Scripted(AgentMode::TurnLeft)),
            other => Err(UnknownBackend(other.to_string())),
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything needed to reproduce a run. Worker count is deliberately absent:
/// it changes wall time, never results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env_seeds: Vec<u64>,
    pub world: GenConfig,
    pub episodes_per_env: usize,
    pub horizon: usize,
    pub strategy: StrategyKind,
    pub backend: BackendSpec,
    pub goal_seed: u64,
}

impl RunConfig {
    pub fn new(strategy: StrategyKind, backend: BackendSpec) -> Self {
        RunConfig {
            env_seeds: (0..10).collect(),
            world: GenConfig::default(),
            episodes_per_env: 16,
            horizon: DEFAULT_HORIZON,
            strategy,
            backend,
            goal_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.env_seeds.is_empty() {
            return Err(RunError::Config("at least one environment is required".into()));
        }
        if self.episodes_per_env == 0 {
            return Err(RunError::Config("episodes per environment must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(RunError::Config("horizon must be at least 1".into()));
        }
        self.world.validate()?;
        Ok(())
    }

    pub fn generate_worlds(&self) -> Result<Vec<GridWorld>, RunError> {
        Ok(self.env_seeds.iter().map(|&s| GridWorld::generate(s, self.world)).collect::<Result<_, _>>()?)
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("environment {env_seed}, episode {episode}: {source}")]
    Episode { env_seed: u64, episode: usize, source: EpisodeError },
    #[error("could not build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub trajectory: Trajectory,
    pub update: AfterEpisodeReport,
    /// Memory after the strategy processed this episode.
    pub memory: Memory,
}

impl EpisodeRecord {
    pub fn lm_calls(&self) -> u64 {
        self.trajectory.lm_calls() + self.update.lm_calls as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvRecord {
    pub env_seed: u64,
    pub goals: Vec<Goal>,
    pub episodes: Vec<EpisodeRecord>,
}

impl EnvRecord {
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.trajectory.reward).collect()
    }

    pub fn steps(&self) -> Vec<usize> {
        self.episodes.iter().map(|e| e.trajectory.steps.len()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub envs: Vec<EnvRecord>,
}

impl RunRecord {
    pub fn reward_table(&self) -> RewardTable {
        RewardTable {
            strategy: self.config.strategy.name().to_string(),
            goal_seed: self.config.goal_seed,
            series: self.envs.iter().map(|e| EnvSeries { env_seed: e.env_seed, rewards: e.rewards() }).collect(),
        }
    }

    pub fn total_lm_calls(&self) -> u64 {
        self.envs.iter().flat_map(|e| &e.episodes).map(EpisodeRecord::lm_calls).sum()
    }
}

/// I.i.d. draws, with replacement, over the world's objects. Each environment
/// uses its own ChaCha stream of the goal seed.
pub fn sample_goals(world: &GridWorld, count: usize, goal_seed: u64) -> Vec<Goal> {
    let mut rng = ChaCha8Rng::seed_from_u64(goal_seed);
    rng.set_stream(world.seed);
    (0..count)
        .map(|_| {
            let o = &world.objects[rng.gen_range(0..world.objects.len())];
            Goal::new(o.color, o.kind)
        })
        .collect()
}

/// Runs every environment stream. Streams are independent and run on up to
/// `workers` threads; episodes within a stream are sequential because memory
/// carries over. `backend_for` is called once per world.
pub fn run_stream(
    config: &RunConfig,
    worlds: &[GridWorld],
    backend_for: &(dyn Fn(&GridWorld) -> Arc<dyn LmBackend> + Sync),
    workers: usize,
) -> Result<RunRecord, RunError> {
    config.validate()?;
    if worlds.len() != config.env_seeds.len() || worlds.iter().zip(&config.env_seeds).any(|(w, &s)| w.seed != s) {
        return Err(RunError::Config("worlds do not match the configured environment seeds".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let envs =
        pool.install(|| worlds.par_iter().map(|w| run_env(config, w, backend_for(w))).collect::<Result<Vec<_>, _>>())?;
    Ok(RunRecord { config: config.clone(), envs })
}

fn run_env(config: &RunConfig, world: &GridWorld, backend: Arc<dyn LmBackend>) -> Result<EnvRecord, RunError> {
    let goals = sample_goals(world, config.episodes_per_env, config.goal_seed);
    let mut memory = config.strategy.empty_memory();
    let mut episodes = Vec::with_capacity(goals.len());
    for (episode, goal) in goals.iter().enumerate() {
        let mut w = world.reset_copy();
        let mut policy = LmPolicy::new(backend.clone(), config.horizon, &render_memory(&memory), LmParams::AGENT);
        let spec = EpisodeSpec { goal: *goal, horizon: config.horizon, env_seed: world.seed, episode_index: episode };
        let trajectory = run_episode(&mut w, spec, &mut policy).map_err(|source| RunError::Episode {
            env_seed: world.seed,
            episode,
            source,
        })?;
        let update = after_episode(config.strategy, backend.as_ref(), &trajectory, &mut memory);
        log::info!(
            "env {} episode {episode}: {} reward {} in {} steps; memory updates {:?}",
            world.seed,
            crate::textview::render_goal(goal),
            trajectory.reward,
            trajectory.steps.len(),
            update.updated_goals
        );
        episodes.push(EpisodeRecord { trajectory, update, memory: memory.clone() });
    }
    Ok(EnvRecord { env_seed: world.seed, goals, episodes })
}
