//! Egocentric text observations.
//!
//! The agent sees a 7x7 window in front of it: six rows ahead of its own row
//! and three columns to either side. Walls and closed doors are opaque. A cell
//! is visible when the straight segment between the centre of the agent's
//! cell and the centre of that cell does not pass through the interior of an
//! opaque cell. Segments that only graze a corner are not blocked.
//!
//! All sentence templates live in this module; see `docs/observation-format.md`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::world::{ActionMenus, Color, Direction, DoorState, Goal, GridWorld, ObjectKind, Pos};

/// Rows visible in front of the agent, not counting its own row.
pub const VIEW_DEPTH: i32 = 6;
/// Columns visible to either side of the agent.
pub const VIEW_HALF_WIDTH: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Entity {
    Object { index: usize, color: Color, kind: ObjectKind },
    Door { index: usize, color: Color, state: DoorState },
}

impl Entity {
    fn color(&self) -> Color {
        match self {
            Entity::Object { color, .. } | Entity::Door { color, .. } => *color,
        }
    }

    fn noun_phrase(&self) -> String {
        match self {
            Entity::Object { color, kind, .. } => format!("a {} {}", color.name(), kind.name()),
            Entity::Door { color, state: DoorState::Closed, .. } => format!("a closed {} door", color.name()),
            Entity::Door { color, state: DoorState::Open, .. } => format!("an open {} door", color.name()),
        }
    }
}

/// An entity with its offset in the agent's frame: `ahead` along the facing
/// direction, `right` to the agent's right (negative means left).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibleEntity {
    pub entity: Entity,
    pub ahead: i32,
    pub right: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub text: String,
    pub visible_entities: Vec<VisibleEntity>,
    pub menus: ActionMenus,
}

/// World position of the cell at `(ahead, right)` relative to the agent.
pub fn frame_to_world(origin: Pos, facing: Direction, ahead: i32, right: i32) -> Pos {
    let (fx, fy) = facing.delta();
    let (rx, ry) = facing.right().delta();
    Pos::new(origin.x + ahead * fx + right * rx, origin.y + ahead * fy + right * ry)
}

/// Whether the window cell at `(ahead, right)` is visible from the agent.
///
/// Walks the cells pierced by the centre-to-centre segment with exact integer
/// arithmetic. When the segment passes exactly through a cell corner it moves
/// diagonally, since the two side cells are touched only at a point.
pub fn is_visible(world: &GridWorld, ahead: i32, right: i32) -> bool {
    if !(0..=VIEW_DEPTH).contains(&ahead) || right.abs() > VIEW_HALF_WIDTH {
        return false;
    }
    let origin = world.agent.position;
    let facing = world.agent.facing;
    if !world.in_bounds(frame_to_world(origin, facing, ahead, right)) {
        return false;
    }
    let (span_f, span_l) = (ahead as i64, right.abs() as i64);
    let side = right.signum();
    let (mut i, mut j) = (0i64, 0i64);
    while (i, j) != (span_f, span_l) {
        if span_l == 0 {
            i += 1;
        } else if span_f == 0 {
            j += 1;
        } else {
            // Compare the segment parameters of the next forward and lateral boundary crossings.
            match ((2 * i + 1) * span_l).cmp(&((2 * j + 1) * span_f)) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        if (i, j) != (span_f, span_l) && world.is_opaque(frame_to_world(origin, facing, i as i32, side * j as i32)) {
            return false;
        }
    }
    true
}

/// Entities in view, ordered nearest first (by steps), then left before
/// right, then by color name.
pub fn visible_entities(world: &GridWorld) -> Vec<VisibleEntity> {
    let origin = world.agent.position;
    let facing = world.agent.facing;
    let mut seen = Vec::new();
    for ahead in 0..=VIEW_DEPTH {
        for right in -VIEW_HALF_WIDTH..=VIEW_HALF_WIDTH {
            if (ahead, right) == (0, 0) || !is_visible(world, ahead, right) {
                continue;
            }
            let p = frame_to_world(origin, facing, ahead, right);
            if let Some(index) = world.object_at(p) {
                let o = &world.objects[index];
                seen.push(VisibleEntity {
                    entity: Entity::Object { index, color: o.color, kind: o.kind },
                    ahead,
                    right,
                });
            }
            if let Some(index) = world.door_at(p) {
                let d = &world.doors[index];
                seen.push(VisibleEntity {
                    entity: Entity::Door { index, color: d.color, state: d.state },
                    ahead,
                    right,
                });
            }
        }
    }
    seen.sort_by(|a, b| {
        let da = a.ahead.abs() + a.right.abs();
        let db = b.ahead.abs() + b.right.abs();
        da.cmp(&db).then(a.right.cmp(&b.right)).then(a.entity.color().name().cmp(b.entity.color().name()))
    });
    seen
}

/// Steps to the first wall (or closed door) straight ahead, if one is in view.
pub fn forward_wall_distance(world: &GridWorld) -> Option<u32> {
    (1..=VIEW_DEPTH)
        .find(|&k| world.is_opaque(frame_to_world(world.agent.position, world.agent.facing, k, 0)))
        .map(|k| (k - 1) as u32)
}

pub fn render(world: &GridWorld) -> Observation {
    let visible = visible_entities(world);
    let mut sentences = Vec::with_capacity(visible.len() + 2);
    sentences.push(match forward_wall_distance(world) {
        Some(n) => format!("You are {} from a wall.", steps(n)),
        None => "You see no wall ahead.".to_string(),
    });
    for v in &visible {
        sentences.push(format!("You see {} {}.", v.entity.noun_phrase(), offset_phrase(v.ahead, v.right)));
    }
    if let Some(c) = world.agent.carrying {
        sentences.push(format!("You are carrying the {}.", world.objects[c].describe()));
    }
    Observation { text: sentences.join(" "), visible_entities: visible, menus: world.action_menus() }
}

/// `"one step"`, `"two steps"`, ..., `"ten steps"`, then digits.
pub fn steps(n: u32) -> String {
    const WORDS: [&str; 11] = ["zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"];
    let count = WORDS.get(n as usize).map_or_else(|| n.to_string(), |w| w.to_string());
    if n == 1 {
        format!("{count} step")
    } else {
        format!("{count} steps")
    }
}

fn offset_phrase(ahead: i32, right: i32) -> String {
    let along = match ahead.cmp(&0) {
        Ordering::Greater => Some(format!("{} ahead", steps(ahead as u32))),
        Ordering::Less => Some(format!("{} behind", steps(ahead.unsigned_abs()))),
        Ordering::Equal => None,
    };
    let across = match right.cmp(&0) {
        Ordering::Greater => Some(format!("{} to the right", steps(right as u32))),
        Ordering::Less => Some(format!("{} to the left", steps(right.unsigned_abs()))),
        Ordering::Equal => None,
    };
    match (along, across) {
        (Some(a), Some(b)) => format!("{a} and {b}"),
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => "here".to_string(),
    }
}

/// `valid_actions={0: "turn left", ...}, invalid_actions={3: "pick up", ...}`
pub fn render_menus(menus: &ActionMenus) -> String {
    let list = |actions: &[crate::world::Action]| {
        actions.iter().map(|a| format!("{}: \"{}\"", a.index(), a.name())).collect::<Vec<_>>().join(", ")
    };
    format!("valid_actions={{{}}}, invalid_actions={{{}}}", list(&menus.valid), list(&menus.invalid))
}

pub fn render_goal(goal: &Goal) -> String {
    format!("Pick up the {} {}", goal.color.name(), goal.kind.name())
}

/// Normal form used as a memory key: lower case, single spaces, no trailing
/// punctuation, and the article after "pick up" forced to "the".
pub fn canonical_goal(text: &str) -> String {
    let lowered = text.trim().to_lowercase();
    let trimmed = lowered.trim_end_matches(['.', '!', ' ']);
    let mut words: Vec<&str> = trimmed.split_whitespace().collect();
    if words.len() >= 3 && words[0] == "pick" && words[1] == "up" {
        match words[2] {
            "the" => {}
            "a" | "an" => words[2] = "the",
            _ => words.insert(2, "the"),
        }
    }
    words.join(" ")
}

pub fn parse_goal(text: &str) -> Option<Goal> {
    let canonical = canonical_goal(text);
    let rest = canonical.strip_prefix("pick up the ")?;
    let mut words = rest.split(' ');
    let color = Color::from_name(words.next()?)?;
    let kind = ObjectKind::from_name(words.next()?)?;
    words.next().is_none().then_some(Goal::new(color, kind))
}
