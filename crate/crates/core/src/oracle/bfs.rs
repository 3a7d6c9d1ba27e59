//! Breadth-first planner over the full mutable world state.

use std::collections::hash_map::Entry;
use std::collections::{HashMap, VecDeque};

use thiserror::Error;

use crate::world::{Action, Goal, GridWorld, WorldState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("goal object {0} is not in the world")]
    AbsentObject(String),
    #[error("no plan picks up the {goal} within {depth} actions")]
    Infeasible { goal: String, depth: usize },
}

/// Default search depth; far above the 64-step episode horizon.
pub const DEFAULT_MAX_DEPTH: usize = 96;

/// Shortest action sequence from the world's current state that ends with
/// the goal object in hand.
///
/// The search space is the full mutable state (agent pose, door states,
/// carried object and every object position), so plans that move other
/// objects out of the way are considered too.
pub fn bfs_plan(world: &GridWorld, goal: &Goal) -> Result<Vec<Action>, PlanError> {
    bfs_plan_within(world, goal, DEFAULT_MAX_DEPTH)
}

pub fn bfs_plan_within(world: &GridWorld, goal: &Goal, max_depth: usize) -> Result<Vec<Action>, PlanError> {
    let describe = || format!("{} {}", goal.color.name(), goal.kind.name());
    let target = world.find_object(goal).ok_or_else(|| PlanError::AbsentObject(describe()))?;
    let start = world.state();
    if world.goal_satisfied_in(&start, target) {
        return Ok(Vec::new());
    }

    let mut parents: HashMap<WorldState, (WorldState, Action)> = HashMap::new();
    let mut frontier = VecDeque::from([(start, 0usize)]);
    parents.insert(start, (start, Action::TurnLeft));

    while let Some((state, depth)) = frontier.pop_front() {
        if depth >= max_depth {
            continue;
        }
        for action in Action::ALL {
            let (next, effect) = world.transition(&state, action);
            if effect.is_noop() {
                continue;
            }
            if let Entry::Vacant(slot) = parents.entry(next) {
                slot.insert((state, action));
                if world.goal_satisfied_in(&next, target) {
                    return Ok(unwind(&parents, start, next));
                }
                frontier.push_back((next, depth + 1));
            }
        }
    }
    Err(PlanError::Infeasible { goal: describe(), depth: max_depth })
}

fn unwind(parents: &HashMap<WorldState, (WorldState, Action)>, start: WorldState, mut at: WorldState) -> Vec<Action> {
    let mut plan = Vec::new();
    while at != start {
        let (prev, action) = parents[&at];
        plan.push(action);
        at = prev;
    }
    plan.reverse();
    plan
}
