//! Trajectory validity: do stored workflows actually lead to their goal when
//! handed to an agent?

use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::{run_episode, EpisodeSpec, LmPolicy};
use crate::lm::{LmBackend, LmParams};
use crate::oracle::decode_workflow;
use crate::prompts::KNOWN_WORKFLOWS_HEADER;
use crate::strategies::Memory;
use crate::textview::{canonical_goal, parse_goal};
use crate::world::GridWorld;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowSample {
    pub env_seed: u64,
    pub goal: String,
    pub workflow: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    /// The workflow cannot reach the goal even when followed literally.
    Infeasible,
    /// Followed literally the workflow succeeds; the agent strayed from it.
    AgentDeviation,
    /// The workflow is free text that cannot be executed mechanically.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityFailure {
    pub sample: WorkflowSample,
    pub class: FailureClass,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub total: usize,
    pub successes: usize,
    pub failures: Vec<ValidityFailure>,
}

impl ValidityReport {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.successes as f64 / self.total as f64
        }
    }

    pub fn count(&self, class: FailureClass) -> usize {
        self.failures.iter().filter(|f| f.class == class).count()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidityError {
    #[error("nothing to validate: no stored workflows")]
    NothingToValidate,
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error("no world for environment {0}")]
    MissingWorld(u64),
    #[error("episode could not run: {0}")]
    Episode(String),
}

/// Draws `n` (goal, workflow) pairs from the given memories, without
/// replacement when there are at least `n` pairs and with replacement otherwise.
pub fn sample_workflows(memories: &[(u64, Memory)], n: usize, seed: u64) -> Result<Vec<WorkflowSample>, ValidityError> {
    if n == 0 {
        return Err(ValidityError::ZeroSamples);
    }
    let pool: Vec<WorkflowSample> = memories
        .iter()
        .flat_map(|(env_seed, m)| {
            m.workflows().into_iter().map(move |(goal, workflow)| WorkflowSample {
                env_seed: *env_seed,
                goal,
                workflow,
            })
        })
        .collect();
    if pool.is_empty() {
        return Err(ValidityError::NothingToValidate);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if pool.len() >= n {
        index::sample(&mut rng, pool.len(), n).into_vec()
    } else {
        (0..n).map(|_| rng.gen_range(0..pool.len())).collect()
    };
    Ok(picks.into_iter().map(|i| pool[i].clone()).collect())
}

/// Runs one episode per sample with the workflow injected into the system
/// prompt and classifies each failure.
pub fn validity_analysis(
    samples: &[WorkflowSample],
    worlds: &[GridWorld],
    backend_for: &dyn Fn(&GridWorld) -> Arc<dyn LmBackend>,
    horizon: usize,
) -> Result<ValidityReport, ValidityError> {
    if samples.is_empty() {
        return Err(ValidityError::NothingToValidate);
    }
    let mut report = ValidityReport { total: samples.len(), successes: 0, failures: Vec::new() };
    for (i, sample) in samples.iter().enumerate() {
        let world =
            worlds.iter().find(|w| w.seed == sample.env_seed).ok_or(ValidityError::MissingWorld(sample.env_seed))?;
        let fail = |class, detail: String| ValidityFailure { sample: sample.clone(), class, detail };

        let Some(goal) = parse_goal(&sample.goal).filter(|g| world.find_object(g).is_some()) else {
            report.failures.push(fail(FailureClass::Infeasible, format!("no object matches '{}'", sample.goal)));
            continue;
        };
        let memory = format!("{KNOWN_WORKFLOWS_HEADER}\n{}: {}", canonical_goal(&sample.goal), sample.workflow);
        let mut w = world.reset_copy();
        let mut policy = LmPolicy::new(backend_for(world), horizon, &memory, LmParams::AGENT);
        let spec = EpisodeSpec { goal, horizon, env_seed: world.seed, episode_index: i };
        let outcome = run_episode(&mut w, spec, &mut policy).map_err(|e| ValidityError::Episode(e.to_string()))?;
        if outcome.success {
            report.successes += 1;
            continue;
        }
        let failure = match decode_workflow(&sample.workflow) {
            Err(e) => fail(FailureClass::Unknown, e.to_string()),
            Ok(actions) => {
                let mut literal = world.reset_copy();
                let reached = actions.iter().any(|&a| {
                    literal.step(a);
                    literal.goal_satisfied(&goal).unwrap_or(false)
                });
                if reached {
                    fail(FailureClass::AgentDeviation, format!("agent stopped after {} steps", outcome.steps.len()))
                } else {
                    fail(FailureClass::Infeasible, "workflow does not reach the goal when followed literally".into())
                }
            }
        };
        report.failures.push(failure);
    }
    Ok(report)
}
