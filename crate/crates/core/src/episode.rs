//! Trajectories, the episode loop, and the JSONL trajectory log.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{parse_choice, CallPurpose, LmBackend, LmParams, LmRequest, Message};
use crate::prompts;
use crate::textview::{self, Observation};
use crate::world::{Action, Goal, GridWorld, WorldError};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_HORIZON: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub observation: String,
    pub thought: String,
    pub action_index: u8,
    pub was_valid: bool,
    pub step_reward: f64,
    /// Model calls spent choosing this action (retries included).
    pub lm_calls: u32,
}

/// Why an episode ended before success or the horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Abort {
    pub reason: String,
    pub lm_calls: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema_version: u32,
    pub env_seed: u64,
    pub episode_index: usize,
    pub goal: Goal,
    pub steps: Vec<StepRecord>,
    /// Observation after the last step.
    pub final_observation: String,
    pub success: bool,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abort: Option<Abort>,
}

impl Trajectory {
    /// Agent-side model calls, including any spent before an abort.
    pub fn lm_calls(&self) -> u64 {
        self.steps.iter().map(|s| s.lm_calls as u64).sum::<u64>() + self.abort.as_ref().map_or(0, |a| a.lm_calls as u64)
    }

    /// Plain-text rendering handed to the between-episode strategies.
    pub fn to_prompt_text(&self) -> String {
        let mut out = format!("Goal: {}\n", textview::render_goal(&self.goal));
        for (i, s) in self.steps.iter().enumerate() {
            let action = Action::from_index(s.action_index as i64).map_or("unknown", |a| a.name());
            out.push_str(&format!(
                "\nStep {}:\nObservation: {}\nThought: {}\nAction: {}\n",
                i + 1,
                s.observation,
                s.thought,
                action
            ));
        }
        out.push_str(&format!("\nFinal observation: {}\n", self.final_observation));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub thought: String,
    pub action: Action,
    pub lm_calls: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct PolicyError {
    pub message: String,
    pub lm_calls: u32,
}

/// Chooses one action per step. A policy instance lives for one episode.
pub trait Policy {
    fn decide(
        &mut self,
        goal: &Goal,
        history: &[StepRecord],
        observation: &Observation,
    ) -> Result<Decision, PolicyError>;
}

#[derive(Debug, Clone, Copy)]
pub struct EpisodeSpec {
    pub goal: Goal,
    pub horizon: usize,
    pub env_seed: u64,
    pub episode_index: usize,
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Runs one episode until the goal is in hand or the horizon is spent.
///
/// The world is advanced in place; the caller resets it before the next episode.
pub fn run_episode(
    world: &mut GridWorld,
    spec: EpisodeSpec,
    policy: &mut dyn Policy,
) -> Result<Trajectory, EpisodeError> {
    if spec.horizon == 0 {
        return Err(EpisodeError::ZeroHorizon);
    }
    let mut success = world.goal_satisfied(&spec.goal)?;
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut abort = None;
    while !success && steps.len() < spec.horizon {
        let observation = textview::render(world);
        let decision = match policy.decide(&spec.goal, &steps, &observation) {
            Ok(d) => d,
            Err(e) => {
                log::warn!("episode {} on env {} aborted: {}", spec.episode_index, spec.env_seed, e.message);
                abort = Some(Abort { reason: e.message, lm_calls: e.lm_calls });
                break;
            }
        };
        let effect = world.step(decision.action);
        success = world.goal_satisfied(&spec.goal)?;
        steps.push(StepRecord {
            observation: observation.text,
            thought: decision.thought,
            action_index: decision.action.index(),
            was_valid: !effect.is_noop(),
            step_reward: if success { 1.0 } else { 0.0 },
            lm_calls: decision.lm_calls,
        });
    }
    Ok(Trajectory {
        schema_version: SCHEMA_VERSION,
        env_seed: spec.env_seed,
        episode_index: spec.episode_index,
        goal: spec.goal,
        steps,
        final_observation: textview::render(world).text,
        success,
        reward: if success { 1.0 } else { 0.0 },
        abort,
    })
}

/// User message shown to the agent at each step.
pub fn step_prompt(goal: &Goal, observation: &Observation) -> String {
    format!(
        "Goal: {}\nObservation: {}\n{}",
        textview::render_goal(goal),
        observation.text,
        textview::render_menus(&observation.menus)
    )
}

/// ReAct-style agent backed by a language model. The in-episode context is the
/// full transcript of this episode; cross-episode memory arrives only through
/// the system prompt.
pub struct LmPolicy {
    backend: Arc<dyn LmBackend>,
    system_prompt: String,
    params: LmParams,
    transcript: Vec<Message>,
}

impl LmPolicy {
    pub fn new(backend: Arc<dyn LmBackend>, horizon: usize, memory: &str, params: LmParams) -> Self {
        LmPolicy {
            backend,
            system_prompt: prompts::agent_system_prompt(horizon, memory),
            params,
            transcript: Vec::new(),
        }
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }
}

impl Policy for LmPolicy {
    fn decide(
        &mut self,
        goal: &Goal,
        _history: &[StepRecord],
        observation: &Observation,
    ) -> Result<Decision, PolicyError> {
        let user = Message::user(step_prompt(goal, observation));
        let mut messages = self.transcript.clone();
        messages.push(user.clone());
        let mut calls = 0u32;
        let mut last_problem = String::new();
        // One retry with a reminder, then give up.
        for attempt in 0..2 {
            let request = LmRequest::new(CallPurpose::Agent, &self.system_prompt, messages.clone(), self.params)
                .map_err(|e| PolicyError { message: e.to_string(), lm_calls: calls })?;
            calls += 1;
            let reply = match self.backend.complete(&request) {
                Ok(r) => r.text,
                Err(e) => {
                    return Err(PolicyError { message: format!("backend failure: {e}"), lm_calls: calls });
                }
            };
            match parse_choice(&reply).map_err(|e| e.to_string()).and_then(|c| {
                Action::from_index(c.choice)
                    .map(|a| (c.thought, a))
                    .ok_or_else(|| format!("choice {} is not an action index", c.choice))
            }) {
                Ok((thought, action)) => {
                    self.transcript.push(user);
                    self.transcript.push(Message::assistant(reply));
                    return Ok(Decision { thought, action, lm_calls: calls });
                }
                Err(problem) => {
                    log::debug!("unusable agent reply (attempt {}): {problem}", attempt + 1);
                    last_problem = problem;
                    messages.push(Message::assistant(reply));
                    messages.push(Message::user(prompts::CHOICE_REMINDER));
                }
            }
        }
        Err(PolicyError { message: format!("unparseable agent output after retry: {last_problem}"), lm_calls: calls })
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn serialize(trajectory: &Trajectory) -> String {
    serde_json::to_string(trajectory).expect("trajectory serializes")
}

pub fn deserialize(line: &str) -> Result<Trajectory, String> {
    let t: Trajectory = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if t.schema_version != SCHEMA_VERSION {
        return Err(format!("unsupported schema version {}", t.schema_version));
    }
    Ok(t)
}

pub fn write_jsonl<'a, W: Write>(
    out: &mut W,
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
) -> std::io::Result<()> {
    for t in trajectories {
        writeln!(out, "{}", serialize(t))?;
    }
    Ok(())
}

/// Reads a trajectory log; blank lines are skipped, line numbers are 1-based.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<Trajectory>, LogError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(deserialize(&line).map_err(|message| LogError::Malformed { line: i + 1, message })?);
    }
    Ok(out)
}
