//! Text form of primitive action plans, as stored in workflow memory.
//!
//! `Step 1: Turn left. Step 2: Go forward 3 times. Step 3: Pick up the grey star.`
//! Consecutive repeats collapse into one step with an `N times` suffix.

use thiserror::Error;

use crate::textview::render_goal;
use crate::world::{Action, Goal};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkflowParseError {
    #[error("workflow has no steps")]
    Empty,
    #[error("step {0} does not name a primitive action: '{1}'")]
    UnknownStep(usize, String),
}

fn phrase(action: Action, goal: &Goal) -> String {
    match action {
        Action::TurnLeft => "Turn left".into(),
        Action::TurnRight => "Turn right".into(),
        Action::GoForward => "Go forward".into(),
        Action::PickUp => render_goal(goal),
        Action::PutDown => "Put down the carried object".into(),
        Action::ToggleDoor => "Toggle the door".into(),
    }
}

pub fn encode_workflow(actions: &[Action], goal: &Goal) -> String {
    let mut steps: Vec<(Action, usize)> = Vec::new();
    for &a in actions {
        match steps.last_mut() {
            Some((last, n)) if *last == a => *n += 1,
            _ => steps.push((a, 1)),
        }
    }
    steps
        .iter()
        .enumerate()
        .map(|(i, &(a, n))| {
            let times = if n > 1 { format!(" {n} times") } else { String::new() };
            format!("Step {}: {}{}.", i + 1, phrase(a, goal), times)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Expands a workflow written by [`encode_workflow`] back into actions.
/// Free-form workflows that name anything other than primitive actions fail.
pub fn decode_workflow(text: &str) -> Result<Vec<Action>, WorkflowParseError> {
    let lowered = text.to_lowercase();
    let mut bodies: Vec<&str> = Vec::new();
    let mut rest = lowered.as_str();
    while let Some(start) = rest.find("step ") {
        let after = &rest[start + 5..];
        let digits = after.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits == 0 || !after[digits..].starts_with(':') {
            rest = after;
            continue;
        }
        let body = &after[digits + 1..];
        let end = next_step_marker(body).unwrap_or(body.len());
        bodies.push(&body[..end]);
        rest = &body[end..];
    }
    if bodies.is_empty() {
        return Err(WorkflowParseError::Empty);
    }
    let mut actions = Vec::new();
    for (i, body) in bodies.iter().enumerate() {
        let step = body.trim().trim_end_matches('.').trim();
        let (head, count) = split_repeat(step);
        let action = if head == "turn left" {
            Action::TurnLeft
        } else if head == "turn right" {
            Action::TurnRight
        } else if head == "go forward" {
            Action::GoForward
        } else if head.starts_with("pick up") {
            Action::PickUp
        } else if head.starts_with("put down") {
            Action::PutDown
        } else if head.starts_with("toggle") {
            Action::ToggleDoor
        } else {
            return Err(WorkflowParseError::UnknownStep(i + 1, step.to_string()));
        };
        actions.extend(std::iter::repeat_n(action, count));
    }
    Ok(actions)
}

fn next_step_marker(body: &str) -> Option<usize> {
    let mut from = 0;
    while let Some(rel) = body[from..].find("step ") {
        let at = from + rel;
        let after = &body[at + 5..];
        let digits = after.chars().take_while(|c| c.is_ascii_digit()).count();
        if digits > 0 && after[digits..].starts_with(':') {
            return Some(at);
        }
        from = at + 5;
    }
    None
}

fn split_repeat(step: &str) -> (&str, usize) {
    if let Some(head) = step.strip_suffix(" times") {
        if let Some((h, n)) = head.rsplit_once(' ') {
            if let Ok(n) = n.parse::<usize>() {
                return (h.trim(), n);
            }
        }
    }
    (step, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Color, ObjectKind};
    use proptest::prelude::*;

    fn star() -> Goal {
        Goal::new(Color::Grey, ObjectKind::Star)
    }

    #[test]
    fn encodes_runs() {
        let plan = [Action::TurnLeft, Action::GoForward, Action::GoForward, Action::GoForward, Action::PickUp];
        assert_eq!(
            encode_workflow(&plan, &star()),
            "Step 1: Turn left. Step 2: Go forward 3 times. Step 3: Pick up the grey star."
        );
        assert_eq!(encode_workflow(&[], &star()), "");
    }

    #[test]
    fn free_text_is_rejected() {
        assert_eq!(decode_workflow("Navigate to the blue door."), Err(WorkflowParseError::Empty));
        assert!(matches!(
            decode_workflow("Step 1: Navigate north. Step 2: Pick up the grey star."),
            Err(WorkflowParseError::UnknownStep(1, _))
        ));
    }

    proptest! {
        #[test]
        fn round_trip(idx in prop::collection::vec(0usize..6, 1..40)) {
            let plan: Vec<Action> = idx.into_iter().map(|i| Action::ALL[i]).collect();
            prop_assert_eq!(decode_workflow(&encode_workflow(&plan, &star())).unwrap(), plan);
        }
    }
}
