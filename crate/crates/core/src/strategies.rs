//! Cross-episode memory: the replay buffer, its keep-shorter update rule, and
//! the hindsight strategies that feed it.
//!
//! A strategy sees each finished trajectory exactly once, between episodes,
//! and may only change the agent's behaviour through the memory text injected
//! into the next episode's system prompt.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::episode::Trajectory;
use crate::lm::{parse_json_payload, parse_summary, CallPurpose, FieldKind, LmBackend, LmParams, LmRequest, Message};
use crate::prompts;
use crate::textview::{canonical_goal, render_goal};

/// Upper bound on goals processed by one ECHO invocation.
pub const MAX_ECHO_GOALS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    React,
    Reflexion,
    Awm,
    Awmpp,
    Echo,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] =
        [StrategyKind::React, StrategyKind::Reflexion, StrategyKind::Awm, StrategyKind::Awmpp, StrategyKind::Echo];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::React => "react",
            StrategyKind::Reflexion => "reflexion",
            StrategyKind::Awm => "awm",
            StrategyKind::Awmpp => "awmpp",
            StrategyKind::Echo => "echo",
        }
    }

    pub fn empty_memory(self) -> Memory {
        match self {
            StrategyKind::React => Memory::None,
            StrategyKind::Reflexion => Memory::Semantic(SemanticMemory::default()),
            StrategyKind::Awm => Memory::Workflows(WorkflowList::default()),
            StrategyKind::Awmpp | StrategyKind::Echo => Memory::Buffer(ReplayBuffer::default()),
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("unknown strategy '{0}' (expected react, reflexion, awm, awmpp or echo)")]
pub struct UnknownStrategy(String);

impl FromStr for StrategyKind {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Inserted,
    Replaced,
    Kept,
    RejectedEmpty,
}

/// Goal-keyed workflow store. Keys are canonical goal strings; iteration
/// follows first insertion. Stored as a list so serialized snapshots keep
/// that order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    entries: Vec<WorkflowEntry>,
}

impl ReplayBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts when the goal is new, replaces when `workflow` is strictly
    /// shorter in characters, and otherwise keeps the stored workflow.
    pub fn update(&mut self, goal: &str, workflow: &str) -> UpdateOutcome {
        if workflow.trim().is_empty() {
            return UpdateOutcome::RejectedEmpty;
        }
        let key = canonical_goal(goal);
        match self.entries.iter_mut().find(|e| e.goal == key) {
            None => {
                self.entries.push(WorkflowEntry { goal: key, workflow: workflow.to_string() });
                UpdateOutcome::Inserted
            }
            Some(old) if workflow.chars().count() < old.workflow.chars().count() => {
                old.workflow = workflow.to_string();
                UpdateOutcome::Replaced
            }
            Some(_) => UpdateOutcome::Kept,
        }
    }

    pub fn get(&self, goal: &str) -> Option<&str> {
        let key = canonical_goal(goal);
        self.entries.iter().find(|e| e.goal == key).map(|e| e.workflow.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|e| (e.goal.as_str(), e.workflow.as_str()))
    }
}

/// Reflexion's free-text notes, append-only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticMemory {
    pub reflections: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowEntry {
    pub goal: String,
    pub workflow: String,
}

/// AWM's workflow list: every accepted workflow is appended, duplicates included.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowList {
    pub entries: Vec<WorkflowEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "lowercase")]
pub enum Memory {
    None,
    Semantic(SemanticMemory),
    Workflows(WorkflowList),
    Buffer(ReplayBuffer),
}

impl Memory {
    pub fn is_empty(&self) -> bool {
        match self {
            Memory::None => true,
            Memory::Semantic(m) => m.reflections.is_empty(),
            Memory::Workflows(w) => w.entries.is_empty(),
            Memory::Buffer(b) => b.is_empty(),
        }
    }

    /// All stored (goal, workflow) pairs in render order.
    pub fn workflows(&self) -> Vec<(String, String)> {
        match self {
            Memory::Workflows(w) => w.entries.iter().map(|e| (e.goal.clone(), e.workflow.clone())).collect(),
            Memory::Buffer(b) => b.iter().map(|(g, w)| (g.to_string(), w.to_string())).collect(),
            Memory::None | Memory::Semantic(_) => Vec::new(),
        }
    }
}

/// Text appended to the agent system prompt. Empty memory renders as `""`.
pub fn render_memory(memory: &Memory) -> String {
    let one_line = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
    match memory {
        Memory::None => String::new(),
        Memory::Semantic(m) if m.reflections.is_empty() => String::new(),
        Memory::Semantic(m) => {
            let mut out = prompts::REFLECTIONS_HEADER.to_string();
            for r in &m.reflections {
                out.push_str(&format!("\n- {}", one_line(r)));
            }
            out
        }
        Memory::Workflows(_) | Memory::Buffer(_) => {
            let pairs = memory.workflows();
            if pairs.is_empty() {
                return String::new();
            }
            let mut out = prompts::KNOWN_WORKFLOWS_HEADER.to_string();
            for (goal, workflow) in pairs {
                out.push_str(&format!("\n{}: {}", one_line(&goal), one_line(&workflow)));
            }
            out
        }
    }
}

/// What one `after_episode` call did.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AfterEpisodeReport {
    pub lm_calls: u32,
    /// Goals whose workflow changed memory, in processing order.
    pub updated_goals: Vec<String>,
    /// Stage failures, kept for the run log.
    pub problems: Vec<String>,
}

/// Applies the strategy's hindsight rule to one finished trajectory.
///
/// Backend and parse failures never propagate: the affected stage is skipped
/// and recorded in the report, leaving memory untouched for it.
pub fn after_episode(
    kind: StrategyKind,
    backend: &dyn LmBackend,
    trajectory: &Trajectory,
    memory: &mut Memory,
) -> AfterEpisodeReport {
    let mut report = AfterEpisodeReport::default();
    match (kind, memory) {
        (StrategyKind::React, _) => {}
        (StrategyKind::Reflexion, Memory::Semantic(m)) => reflexion(backend, trajectory, m, &mut report),
        (StrategyKind::Awm, Memory::Workflows(w)) => {
            if let Some((goal, workflow)) = awm_workflow(backend, trajectory, &mut report) {
                w.entries.push(WorkflowEntry { goal: goal.clone(), workflow });
                report.updated_goals.push(goal);
            }
        }
        (StrategyKind::Awmpp, Memory::Buffer(b)) => {
            if let Some((goal, workflow)) = awm_workflow(backend, trajectory, &mut report) {
                apply_update(b, &goal, &workflow, &mut report);
            }
        }
        (StrategyKind::Echo, Memory::Buffer(b)) => echo(backend, trajectory, b, &mut report),
        (kind, memory) => {
            report.problems.push(format!("{kind} cannot update memory of this shape: {memory:?}"));
        }
    }
    report
}

fn apply_update(buffer: &mut ReplayBuffer, goal: &str, workflow: &str, report: &mut AfterEpisodeReport) {
    match buffer.update(goal, workflow) {
        UpdateOutcome::Inserted | UpdateOutcome::Replaced => report.updated_goals.push(canonical_goal(goal)),
        UpdateOutcome::Kept => {}
        UpdateOutcome::RejectedEmpty => report.problems.push(format!("empty workflow for '{goal}' rejected")),
    }
}

fn call(
    backend: &dyn LmBackend,
    purpose: CallPurpose,
    system: &str,
    user: String,
    report: &mut AfterEpisodeReport,
) -> Option<String> {
    let request = match LmRequest::new(purpose, system, vec![Message::user(user)], LmParams::OFFLINE) {
        Ok(r) => r,
        Err(e) => {
            report.problems.push(format!("{purpose:?}: {e}"));
            return None;
        }
    };
    report.lm_calls += 1;
    match backend.complete(&request) {
        Ok(r) => Some(r.text),
        Err(e) => {
            log::warn!("{purpose:?} call failed: {e}");
            report.problems.push(format!("{purpose:?}: {e}"));
            None
        }
    }
}

fn reflexion(
    backend: &dyn LmBackend,
    trajectory: &Trajectory,
    memory: &mut SemanticMemory,
    report: &mut AfterEpisodeReport,
) {
    let Some(reply) =
        call(backend, CallPurpose::Reflect, prompts::REFLEXION_SYSTEM, trajectory.to_prompt_text(), report)
    else {
        return;
    };
    match parse_json_payload(&reply, &[("reflection", FieldKind::Text)]) {
        Ok(p) => {
            let text = p["reflection"].as_text().unwrap_or_default().trim().to_string();
            if text.is_empty() {
                report.problems.push("empty reflection".into());
            } else {
                memory.reflections.push(text);
            }
        }
        Err(e) => {
            log::warn!("unparseable reflection: {e}");
            report.problems.push(format!("reflection: {e}"));
        }
    }
}

/// The AWM hindsight rule: one call, returning the workflow only when the
/// model judged the episode successful (non-empty workflow).
fn awm_workflow(
    backend: &dyn LmBackend,
    trajectory: &Trajectory,
    report: &mut AfterEpisodeReport,
) -> Option<(String, String)> {
    let reply = call(backend, CallPurpose::AwmWorkflow, prompts::AWM_SYSTEM, trajectory.to_prompt_text(), report)?;
    let payload = match parse_json_payload(&reply, &[("goal", FieldKind::Text), ("workflow", FieldKind::Text)]) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("unparseable workflow: {e}");
            report.problems.push(format!("workflow: {e}"));
            return None;
        }
    };
    let workflow = payload["workflow"].as_text().unwrap_or_default().trim().to_string();
    if workflow.is_empty() {
        return None;
    }
    let stated = payload["goal"].as_text().unwrap_or_default();
    let goal = if stated.trim().is_empty() { render_goal(&trajectory.goal) } else { stated.to_string() };
    Some((canonical_goal(&goal), workflow))
}

fn echo(backend: &dyn LmBackend, trajectory: &Trajectory, buffer: &mut ReplayBuffer, report: &mut AfterEpisodeReport) {
    let Some(reply) =
        call(backend, CallPurpose::Summarize, prompts::ECHO_SUMMARIZE_SYSTEM, trajectory.to_prompt_text(), report)
    else {
        return;
    };
    let summary = match parse_summary(&reply) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("unparseable trajectory summary: {e}");
            report.problems.push(format!("summary: {e}"));
            return;
        }
    };
    let summary_text = summary.iter().enumerate().map(|(i, s)| format!("{i}. {s}")).collect::<Vec<_>>().join("\n");

    let Some(reply) = call(
        backend,
        CallPurpose::IdentifyGoals,
        prompts::ECHO_IDENTIFY_GOALS_SYSTEM,
        format!("Trajectory summary:\n{summary_text}"),
        report,
    ) else {
        return;
    };
    let proposed = match parse_json_payload(&reply, &[("possible_goals", FieldKind::TextList)]) {
        Ok(p) => p["possible_goals"].as_list().unwrap_or_default().to_vec(),
        Err(e) => {
            log::warn!("unparseable goal list: {e}");
            report.problems.push(format!("goals: {e}"));
            return;
        }
    };
    let mut goals: Vec<String> = Vec::new();
    for g in proposed {
        let canonical = canonical_goal(&g);
        if !canonical.starts_with("pick up the ") {
            report.problems.push(format!("ignored non pick-up goal '{g}'"));
            continue;
        }
        if !goals.contains(&canonical) {
            goals.push(canonical);
        }
    }
    if goals.len() > MAX_ECHO_GOALS {
        report.problems.push(format!("{} goals proposed, keeping the first {MAX_ECHO_GOALS}", goals.len()));
        goals.truncate(MAX_ECHO_GOALS);
    }

    for goal in goals {
        let Some(reply) = call(
            backend,
            CallPurpose::InferTrajectory,
            prompts::ECHO_INFER_TRAJECTORY_SYSTEM,
            format!("Goal: {goal}\nTrajectory summary:\n{summary_text}"),
            report,
        ) else {
            continue;
        };
        match parse_json_payload(&reply, &[("goal", FieldKind::Text), ("workflow", FieldKind::Text)]) {
            Ok(p) => apply_update(buffer, &goal, p["workflow"].as_text().unwrap_or_default(), report),
            Err(e) => {
                log::warn!("unparseable inferred workflow for '{goal}': {e}");
                report.problems.push(format!("workflow for '{goal}': {e}"));
            }
        }
    }
}
