//! Deterministic stand-in for a language model, bound to one world.
//!
//! Agent calls replay the conversation's earlier choices on a fresh copy of
//! the world to recover the current state, then act according to an
//! [`AgentMode`]. The explorer mode follows any "Known workflows" entry for
//! its goal, step by step, which is how memory helps it. Strategy calls answer
//! in the documented JSON shapes: summaries and goal lists name only objects
//! that actually appear in the trajectory text, and inferred workflows come
//! from the BFS planner.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::bfs::{bfs_plan, PlanError};
use super::workflow::{decode_workflow, encode_workflow};
use crate::episode::{Decision, Policy, PolicyError, StepRecord};
use crate::lm::{parse_choice, CallPurpose, Capabilities, LmBackend, LmError, LmRequest, LmResponse, Role};
use crate::prompts::KNOWN_WORKFLOWS_HEADER;
use crate::textview::{self, canonical_goal, parse_goal, render_goal, Entity, Observation};
use crate::world::{Action, Goal, GridWorld};

/// Fixed note returned for reflection calls.
pub const DEMO_REFLECTION: &str =
    "I should look for the goal object before moving, open closed doors I face, and use pick up only when the goal object is directly ahead.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentMode {
    /// Follow a remembered workflow for the goal, otherwise explore.
    Explore,
    /// Always take the first action of a BFS plan from the current state.
    Oracle,
    /// Always turn left.
    TurnLeft,
}

pub struct DemoBackend {
    world: GridWorld,
    mode: AgentMode,
    plans: Mutex<HashMap<Goal, Result<Vec<Action>, PlanError>>>,
}

impl DemoBackend {
    pub fn new(world: &GridWorld, mode: AgentMode) -> Self {
        DemoBackend { world: world.reset_copy(), mode, plans: Mutex::default() }
    }

    fn plan_from_start(&self, goal: &Goal) -> Result<Vec<Action>, PlanError> {
        let mut plans = self.plans.lock().expect("plan cache poisoned");
        plans.entry(*goal).or_insert_with(|| bfs_plan(&self.world, goal)).clone()
    }

    fn agent(&self, request: &LmRequest) -> Result<String, LmError> {
        let goal_line = request
            .messages
            .iter()
            .rev()
            .filter(|m| m.role == Role::User)
            .find_map(|m| m.content.lines().next().and_then(|l| l.strip_prefix("Goal: ")))
            .ok_or_else(|| LmError::InvalidRequest("agent request without a goal line".into()))?;
        let goal =
            parse_goal(goal_line).ok_or_else(|| LmError::InvalidRequest(format!("unrecognised goal '{goal_line}'")))?;

        let mut world = self.world.reset_copy();
        let history: Vec<Action> = request
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .filter_map(|m| parse_choice(&m.content).ok().and_then(|c| Action::from_index(c.choice)))
            .collect();
        for &a in &history {
            world.step(a);
        }

        let (thought, action) = match self.mode {
            AgentMode::TurnLeft => ("Turning left.".to_string(), Action::TurnLeft),
            AgentMode::Oracle => match bfs_plan(&world, &goal) {
                Ok(plan) if !plan.is_empty() => ("Following the shortest plan.".to_string(), plan[0]),
                _ => ("No plan from here.".to_string(), Action::TurnLeft),
            },
            AgentMode::Explore => {
                let remembered = known_workflow(&request.system_prompt, &render_goal(&goal))
                    .and_then(|w| decode_workflow(&w).ok())
                    .filter(|w| w.len() > history.len() && w[..history.len()] == history[..]);
                match remembered {
                    Some(w) => {
                        (format!("Following the known workflow, action {}.", history.len() + 1), w[history.len()])
                    }
                    None => explore(&world, &goal, history.len()),
                }
            }
        };
        Ok(json!({"thought": thought, "choice": action.index()}).to_string())
    }

    fn summarize(&self, text: &str) -> String {
        let seen = mentioned_objects(text);
        let start_room = self
            .world
            .room_of(self.world.agent.position)
            .map_or("starting".to_string(), |r| self.world.rooms[r].name.clone());
        let first_obs = text.split("Observation: ").nth(1).unwrap_or("");
        let (initial, later): (Vec<&Goal>, Vec<&Goal>) =
            seen.iter().partition(|g| mentioned_objects(first_obs.lines().next().unwrap_or("")).contains(g));
        let describe = |g: &Goal| format!("the {} {}", g.color.name(), g.kind.name());
        let mut entries = vec![if initial.is_empty() {
            format!("Agent spawned in the {start_room} room and observed no objects")
        } else {
            format!(
                "Agent spawned in the {start_room} room and observed {}",
                initial.iter().map(|g| describe(g)).collect::<Vec<_>>().join(", ")
            )
        }];
        for g in later {
            entries.push(format!("Agent explored and discovered {}", describe(g)));
        }
        let final_obs = text.rsplit("Final observation: ").next().unwrap_or("");
        if let Some(held) = carried_object(final_obs) {
            entries.push(format!("Agent picked up {}", describe(&held)));
        }
        let map: serde_json::Map<String, serde_json::Value> =
            entries.into_iter().enumerate().map(|(i, e)| (i.to_string(), json!(e))).collect();
        serde_json::Value::Object(map).to_string()
    }

    fn identify(&self, text: &str) -> String {
        let goals: Vec<String> = mentioned_pairs(text)
            .into_iter()
            .filter(|g| self.world.find_object(g).is_some())
            .map(|g| render_goal(&g))
            .collect();
        json!({ "possible_goals": goals }).to_string()
    }

    fn infer(&self, text: &str) -> String {
        let goal_text = text.lines().next().and_then(|l| l.strip_prefix("Goal: ")).unwrap_or("");
        let workflow = parse_goal(goal_text)
            .and_then(|g| self.plan_from_start(&g).ok().map(|plan| encode_workflow(&plan, &g)))
            .unwrap_or_default();
        json!({"goal": goal_text, "workflow": workflow}).to_string()
    }

    /// Success is read off the final observation; the workflow is the episode's
    /// own action sequence.
    fn awm(&self, text: &str) -> String {
        let goal_text = text.lines().next().and_then(|l| l.strip_prefix("Goal: ")).unwrap_or("");
        let goal = parse_goal(goal_text);
        let final_obs = text.rsplit("Final observation: ").next().unwrap_or("");
        let succeeded = goal.is_some() && carried_object(final_obs) == goal;
        let workflow = match goal {
            Some(g) if succeeded => {
                let actions: Vec<Action> =
                    text.lines().filter_map(|l| l.strip_prefix("Action: ")).filter_map(Action::from_name).collect();
                encode_workflow(&actions, &g)
            }
            _ => String::new(),
        };
        json!({"goal": goal_text, "workflow": workflow}).to_string()
    }
}

impl LmBackend for DemoBackend {
    fn complete(&self, request: &LmRequest) -> Result<LmResponse, LmError> {
        let user = request.last_user();
        let text = match request.purpose {
            CallPurpose::Agent => self.agent(request)?,
            CallPurpose::Reflect => json!({ "reflection": DEMO_REFLECTION }).to_string(),
            CallPurpose::AwmWorkflow => self.awm(user),
            CallPurpose::Summarize => self.summarize(user),
            CallPurpose::IdentifyGoals => self.identify(user),
            CallPurpose::InferTrajectory => self.infer(user),
        };
        Ok(LmResponse::text(text))
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { deterministic: true, live: false }
    }
}

/// Looks up `goal` in the "Known workflows" section of a system prompt.
pub fn known_workflow(system_prompt: &str, goal: &str) -> Option<String> {
    let key = canonical_goal(goal);
    let section = system_prompt.split(KNOWN_WORKFLOWS_HEADER).nth(1)?;
    section
        .lines()
        .skip(1)
        .take_while(|l| !l.trim().is_empty())
        .filter_map(|l| l.split_once(": "))
        .find(|(g, _)| canonical_goal(g) == key)
        .map(|(_, w)| w.to_string())
}

/// Objects named as "<color> <kind>" anywhere in `text`, first mention first.
fn mentioned_pairs(text: &str) -> Vec<Goal> {
    let words: Vec<String> =
        text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect();
    let mut out = Vec::new();
    for pair in words.windows(2) {
        if let Some(g) = parse_goal(&format!("pick up the {} {}", pair[0], pair[1])) {
            if !out.contains(&g) {
                out.push(g);
            }
        }
    }
    out
}

/// Objects the observations report as seen or carried.
fn mentioned_objects(text: &str) -> Vec<Goal> {
    let mut out = Vec::new();
    for marker in ["You see a ", "You see an ", "You are carrying the "] {
        for (at, _) in text.match_indices(marker) {
            let rest = &text[at + marker.len()..];
            let mut words = rest.split([' ', '.']);
            if let (Some(c), Some(k)) = (words.next(), words.next()) {
                if let Some(g) = parse_goal(&format!("pick up the {c} {k}")) {
                    out.push((at, g));
                }
            }
        }
    }
    out.sort_by_key(|(at, _)| *at);
    let mut goals: Vec<Goal> = Vec::new();
    for (_, g) in out {
        if !goals.contains(&g) {
            goals.push(g);
        }
    }
    goals
}

fn carried_object(observation: &str) -> Option<Goal> {
    let rest = observation.split("You are carrying the ").nth(1)?;
    let mut words = rest.split([' ', '.']);
    parse_goal(&format!("pick up the {} {}", words.next()?, words.next()?))
}

fn stream_seed(world_seed: u64, goal: &Goal, step: usize) -> u64 {
    // FNV-1a over the inputs; only needs to be stable across runs.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let bytes =
        world_seed.to_le_bytes().into_iter().chain(render_goal(goal).into_bytes()).chain((step as u64).to_le_bytes());
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Memoryless explorer: walks to the goal when it is in view, opens doors it
/// faces, and otherwise wanders with a forward bias.
fn explore(world: &GridWorld, goal: &Goal, step: usize) -> (String, Action) {
    let state = world.state();
    let valid = |a: Action| world.is_valid_in(&state, a);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(world.seed, goal, step));
    let random_turn = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.5) { Action::TurnLeft } else { Action::TurnRight };
    let name = format!("{} {}", goal.color.name(), goal.kind.name());

    let target = world.find_object(goal);
    let in_view = textview::visible_entities(world)
        .into_iter()
        .find(|v| matches!(v.entity, Entity::Object { index, .. } if Some(index) == target));
    if let Some(v) = in_view {
        let action = match (v.ahead, v.right) {
            (1, 0) if valid(Action::PickUp) => Action::PickUp,
            (1, 0) if valid(Action::PutDown) => Action::PutDown,
            (_, 0) | (1.., _) if valid(Action::GoForward) => Action::GoForward,
            (_, r) if r < 0 => Action::TurnLeft,
            (_, r) if r > 0 => Action::TurnRight,
            _ => random_turn(&mut rng),
        };
        return (format!("The {name} is in view; moving towards it."), action);
    }

    let facing_closed_door = world.door_at(world.facing_pos()).is_some_and(|d| !state.door_open(d));
    if facing_closed_door {
        return ("A closed door is ahead; opening it.".to_string(), Action::ToggleDoor);
    }
    let roll = rng.gen_range(0..10);
    let action = if valid(Action::GoForward) && roll < 6 {
        Action::GoForward
    } else if roll % 2 == 0 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    };
    (format!("Searching for the {name}."), action)
}

/// Replays a precomputed BFS plan as well-formed model output.
pub struct OraclePolicy {
    plan: Vec<Action>,
    cursor: usize,
}

impl OraclePolicy {
    pub fn new(world: &GridWorld, goal: &Goal) -> Result<Self, PlanError> {
        Ok(OraclePolicy { plan: bfs_plan(world, goal)?, cursor: 0 })
    }

    pub fn plan(&self) -> &[Action] {
        &self.plan
    }

    /// Raw output for the next step, in the agent's reply format.
    pub fn next_output(&self) -> Option<String> {
        let action = self.plan.get(self.cursor)?;
        Some(
            json!({
                "thought": format!("Step {} of {}: {}.", self.cursor + 1, self.plan.len(), action.name()),
                "choice": action.index(),
            })
            .to_string(),
        )
    }
}

impl Policy for OraclePolicy {
    fn decide(&mut self, _: &Goal, _: &[StepRecord], _: &Observation) -> Result<Decision, PolicyError> {
        let output =
            self.next_output().ok_or_else(|| PolicyError { message: "oracle plan exhausted".into(), lm_calls: 0 })?;
        let choice = parse_choice(&output).map_err(|e| PolicyError { message: e.to_string(), lm_calls: 0 })?;
        let action = Action::from_index(choice.choice).expect("oracle emits valid indices");
        self.cursor += 1;
        Ok(Decision { thought: choice.thought, action, lm_calls: 0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::episode::{run_episode, EpisodeSpec, LmPolicy};
    use crate::lm::LmParams;
    use crate::world::GenConfig;
    use std::sync::Arc;

    #[test]
    fn oracle_policy_matches_bfs_length_and_is_repeatable() {
        for seed in 0..5 {
            let world = GridWorld::generate(seed, GenConfig::default()).unwrap();
            for o in &world.objects {
                let goal = Goal::new(o.color, o.kind);
                let spec = EpisodeSpec { goal, horizon: 64, env_seed: seed, episode_index: 0 };
                let mut w = world.reset_copy();
                let mut p = OraclePolicy::new(&w, &goal).unwrap();
                let len = p.plan().len();
                let t = run_episode(&mut w, spec, &mut p).unwrap();
                assert!(t.success);
                assert_eq!(t.steps.len(), len);
                assert_eq!(t.steps.last().unwrap().action_index, Action::PickUp.index());

                let mut w2 = world.reset_copy();
                let mut p2 = OraclePolicy::new(&w2, &goal).unwrap();
                let t2 = run_episode(&mut w2, spec, &mut p2).unwrap();
                assert_eq!(t, t2);
            }
        }
    }

    #[test]
    fn oracle_mode_backend_always_succeeds() {
        let world = GridWorld::generate(3, GenConfig::default()).unwrap();
        let backend = Arc::new(DemoBackend::new(&world, AgentMode::Oracle));
        for o in &world.objects {
            let goal = Goal::new(o.color, o.kind);
            let spec = EpisodeSpec { goal, horizon: 64, env_seed: 3, episode_index: 0 };
            let mut w = world.reset_copy();
            let mut policy = LmPolicy::new(backend.clone(), 64, "", LmParams::AGENT);
            let t = run_episode(&mut w, spec, &mut policy).unwrap();
            assert!(t.success);
            assert_eq!(t.steps.len(), bfs_plan(&world, &goal).unwrap().len());
        }
    }

    #[test]
    fn explorer_follows_remembered_workflow() {
        let world = GridWorld::generate(5, GenConfig::default()).unwrap();
        let backend = Arc::new(DemoBackend::new(&world, AgentMode::Explore));
        for o in &world.objects {
            let goal = Goal::new(o.color, o.kind);
            let plan = bfs_plan(&world, &goal).unwrap();
            let memory = format!(
                "{KNOWN_WORKFLOWS_HEADER}\n{}: {}",
                canonical_goal(&render_goal(&goal)),
                encode_workflow(&plan, &goal)
            );
            let spec = EpisodeSpec { goal, horizon: 64, env_seed: 5, episode_index: 0 };
            let mut w = world.reset_copy();
            let t =
                run_episode(&mut w, spec, &mut LmPolicy::new(backend.clone(), 64, &memory, LmParams::AGENT)).unwrap();
            assert!(t.success);
            assert_eq!(t.steps.len(), plan.len());
        }
    }

    #[test]
    fn turn_left_mode_never_succeeds() {
        let world = GridWorld::generate(1, GenConfig::default()).unwrap();
        let backend = Arc::new(DemoBackend::new(&world, AgentMode::TurnLeft));
        let o = &world.objects[0];
        let spec = EpisodeSpec { goal: Goal::new(o.color, o.kind), horizon: 16, env_seed: 1, episode_index: 0 };
        let mut w = world.reset_copy();
        let t = run_episode(&mut w, spec, &mut LmPolicy::new(backend, 16, "", LmParams::AGENT)).unwrap();
        assert!(!t.success);
        assert!(t.steps.iter().all(|s| s.action_index == 0));
    }

    #[test]
    fn known_workflow_lookup() {
        let prompt = "base\n\nKnown workflows:\npick up the grey star: Step 1: Pick up the grey star.\npick up the red ball: Step 1: Turn left.";
        assert_eq!(known_workflow(prompt, "Pick up the red ball").as_deref(), Some("Step 1: Turn left."));
        assert_eq!(known_workflow(prompt, "Pick up grey star.").as_deref(), Some("Step 1: Pick up the grey star."));
        assert_eq!(known_workflow(prompt, "pick up the blue box"), None);
        assert_eq!(known_workflow("base", "pick up the red ball"), None);
    }

    #[test]
    fn object_mentions_ignore_doors() {
        let text = "You see a closed red door one step ahead. You see a grey star two steps ahead. You are carrying the blue box.";
        let seen = mentioned_objects(text);
        assert_eq!(seen.len(), 2);
        assert_eq!(render_goal(&seen[0]), "Pick up the grey star");
        assert_eq!(carried_object(text).map(|g| render_goal(&g)).as_deref(), Some("Pick up the blue box"));
    }
}
