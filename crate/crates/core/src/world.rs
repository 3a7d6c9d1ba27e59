//! Procedurally generated four-room gridworld and its transition dynamics.
//!
//! The grid is a 2x2 arrangement of square rooms separated by one-cell walls.
//! Each shared wall carries exactly one door. Generation is driven by a
//! ChaCha8 stream per stage (doors, objects, agent), so a given `(seed,
//! config)` always yields the same world on every platform.
//!
//! The mutable part of a world (agent pose, door states, object positions)
//! can be extracted as a compact [`WorldState`]; the planner in
//! [`crate::oracle`] searches over that representation using the exact same
//! transition function that [`GridWorld::step`] uses.

use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound on objects per world; keeps [`WorldState`] a fixed-size `Copy` value.
pub const MAX_OBJECTS: usize = 12;
/// Number of rooms in the 2x2 layout.
pub const ROOM_COUNT: usize = 4;

const NO_CELL: u8 = u8::MAX;

const STREAM_DOORS: u64 = 1;
const STREAM_OBJECTS: u64 = 2;
const STREAM_AGENT: u64 = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("grid size {0} must be odd and between 7 and 15")]
    GridSize(usize),
    #[error("object count {0} must be between 1 and {MAX_OBJECTS}")]
    ObjectCount(usize),
    #[error("room {room} can host {free} objects but {needed} were requested")]
    RoomCapacity { room: usize, free: usize, needed: usize },
    #[error("goal '{0}' names an object that is not in the world")]
    AbsentObject(String),
    #[error("malformed world snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectKind {
    Key,
    Ball,
    Box,
    Star,
    Hexagon,
    Square,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 6] =
        [ObjectKind::Key, ObjectKind::Ball, ObjectKind::Box, ObjectKind::Star, ObjectKind::Hexagon, ObjectKind::Square];

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Key => "key",
            ObjectKind::Ball => "ball",
            ObjectKind::Box => "box",
            ObjectKind::Star => "star",
            ObjectKind::Hexagon => "hexagon",
            ObjectKind::Square => "square",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Purple,
    Yellow,
    Grey,
}

impl Color {
    pub const ALL: [Color; 6] = [Color::Red, Color::Green, Color::Blue, Color::Purple, Color::Yellow, Color::Grey];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Purple => "purple",
            Color::Yellow => "yellow",
            Color::Grey => "grey",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "gray" => Some(Color::Grey),
            _ => Self::ALL.into_iter().find(|c| c.name() == name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    North,
    East,
    South,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::North, Direction::East, Direction::South, Direction::West];

    /// Unit step as `(dx, dy)` with y growing southwards.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::North => (0, -1),
            Direction::East => (1, 0),
            Direction::South => (0, 1),
            Direction::West => (-1, 0),
        }
    }

    pub fn left(self) -> Self {
        Self::ALL[(self as usize + 3) % 4]
    }

    pub fn right(self) -> Self {
        Self::ALL[(self as usize + 1) % 4]
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::North => "north",
            Direction::East => "east",
            Direction::South => "south",
            Direction::West => "west",
        }
    }

    fn from_u8(v: u8) -> Self {
        Self::ALL[(v & 3) as usize]
    }
}

/// Primitive action with a fixed global index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    TurnLeft = 0,
    TurnRight = 1,
    GoForward = 2,
    PickUp = 3,
    PutDown = 4,
    ToggleDoor = 5,
}

impl Action {
    pub const ALL: [Action; 6] =
        [Action::TurnLeft, Action::TurnRight, Action::GoForward, Action::PickUp, Action::PutDown, Action::ToggleDoor];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(index: i64) -> Option<Self> {
        usize::try_from(index).ok().and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::TurnLeft => "turn left",
            Action::TurnRight => "turn right",
            Action::GoForward => "go forward",
            Action::PickUp => "pick up",
            Action::PutDown => "put down",
            Action::ToggleDoor => "toggle door",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Pos { x, y }
    }

    pub fn step(self, dir: Direction) -> Pos {
        let (dx, dy) = dir.delta();
        Pos::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Pos) -> u32 {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Wall,
    Floor,
    Door,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoorState {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Door {
    pub color: Color,
    pub position: Pos,
    pub state: DoorState,
    pub home_state: DoorState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldObject {
    pub kind: ObjectKind,
    pub color: Color,
    /// `None` while the agent carries the object.
    pub position: Option<Pos>,
    pub home_position: Pos,
}

impl WorldObject {
    pub fn describe(&self) -> String {
        format!("{} {}", self.color.name(), self.kind.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentPose {
    pub position: Pos,
    pub facing: Direction,
    /// Index into [`GridWorld::objects`].
    pub carrying: Option<usize>,
    pub home_position: Pos,
    pub home_facing: Direction,
}

/// Interior bounds of one room, inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub name: String,
    pub min: Pos,
    pub max: Pos,
}

impl Room {
    pub fn contains(&self, p: Pos) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn cells(&self) -> impl Iterator<Item = Pos> + '_ {
        (self.min.y..=self.max.y).flat_map(move |y| (self.min.x..=self.max.x).map(move |x| Pos::new(x, y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    /// Side length of the square grid, walls included.
    pub grid_size: usize,
    pub num_objects: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { grid_size: 13, num_objects: 4 }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.grid_size.is_multiple_of(2) || !(7..=15).contains(&self.grid_size) {
            return Err(WorldError::GridSize(self.grid_size));
        }
        if self.num_objects == 0 || self.num_objects > MAX_OBJECTS {
            return Err(WorldError::ObjectCount(self.num_objects));
        }
        // Every room loses exactly two cells to door approaches.
        let free = (self.interior() * self.interior()) as usize - 2;
        for room in 0..ROOM_COUNT {
            let needed = self.num_objects / ROOM_COUNT + usize::from(room < self.num_objects % ROOM_COUNT);
            if needed > free {
                return Err(WorldError::RoomCapacity { room, free, needed });
            }
        }
        Ok(())
    }

    fn interior(&self) -> i32 {
        (self.grid_size as i32 - 3) / 2
    }
}

/// A pick-up goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Goal {
    pub color: Color,
    pub kind: ObjectKind,
}

impl Goal {
    pub fn new(color: Color, kind: ObjectKind) -> Self {
        Goal { color, kind }
    }
}

/// What a single call to [`GridWorld::step`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEffect {
    Turned(Direction),
    Moved(Pos),
    PickedUp(usize),
    PutDown(usize),
    Toggled {
        door: usize,
        state: DoorState,
    },
    /// The action's precondition did not hold; nothing changed.
    NoOp,
}

impl StepEffect {
    pub fn is_noop(&self) -> bool {
        matches!(self, StepEffect::NoOp)
    }
}

/// Compact copy of everything `step` can change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WorldState {
    agent: u8,
    facing: u8,
    carrying: u8,
    doors_open: u8,
    objects: [u8; MAX_OBJECTS],
}

impl WorldState {
    pub fn carrying(&self) -> Option<usize> {
        (self.carrying != NO_CELL).then_some(self.carrying as usize)
    }

    pub fn facing(&self) -> Direction {
        Direction::from_u8(self.facing)
    }

    pub fn door_open(&self, door: usize) -> bool {
        self.doors_open & (1 << door) != 0
    }
}

/// Valid/invalid partition of the six actions for the current state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMenus {
    pub valid: Vec<Action>,
    pub invalid: Vec<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridWorld {
    pub seed: u64,
    pub config: GenConfig,
    pub width: usize,
    pub height: usize,
    #[serde(with = "cell_rows")]
    pub cells: Vec<Cell>,
    pub rooms: Vec<Room>,
    pub doors: Vec<Door>,
    pub objects: Vec<WorldObject>,
    pub agent: AgentPose,
}

const ROOM_NAMES: [&str; ROOM_COUNT] = ["north-west room", "north-east room", "south-west room", "south-east room"];

impl GridWorld {
    /// Generates a world fully determined by `(seed, config)`.
    pub fn generate(seed: u64, config: GenConfig) -> Result<GridWorld, WorldError> {
        config.validate()?;
        let size = config.grid_size;
        let n = config.interior();
        let mid = n + 1;
        let far = size as i32 - 2;

        let mut cells = vec![Cell::Floor; size * size];
        for y in 0..size as i32 {
            for x in 0..size as i32 {
                if x == 0 || y == 0 || x == size as i32 - 1 || y == size as i32 - 1 || x == mid || y == mid {
                    cells[y as usize * size + x as usize] = Cell::Wall;
                }
            }
        }

        let rooms: Vec<Room> = [(1, 1), (mid + 1, 1), (1, mid + 1), (mid + 1, mid + 1)]
            .iter()
            .zip(ROOM_NAMES)
            .map(|(&(x0, y0), name)| Room {
                name: name.to_string(),
                min: Pos::new(x0, y0),
                max: Pos::new(x0 + n - 1, y0 + n - 1),
            })
            .collect();

        // Doors: one per shared wall, in the order NW|NE, SW|SE, NW/SW, NE/SE.
        let mut rng = stage_rng(seed, STREAM_DOORS);
        let wall_segments = [
            (Pos::new(mid, 1), Pos::new(mid, n)),
            (Pos::new(mid, mid + 1), Pos::new(mid, far)),
            (Pos::new(1, mid), Pos::new(n, mid)),
            (Pos::new(mid + 1, mid), Pos::new(far, mid)),
        ];
        let door_colors = index::sample(&mut rng, Color::ALL.len(), wall_segments.len());
        let mut doors = Vec::with_capacity(wall_segments.len());
        for (i, (a, b)) in wall_segments.iter().enumerate() {
            let position = if a.x == b.x {
                Pos::new(a.x, rng.gen_range(a.y..=b.y))
            } else {
                Pos::new(rng.gen_range(a.x..=b.x), a.y)
            };
            cells[position.y as usize * size + position.x as usize] = Cell::Door;
            doors.push(Door {
                color: Color::ALL[door_colors.index(i)],
                position,
                state: DoorState::Closed,
                home_state: DoorState::Closed,
            });
        }

        // Objects: distinct (kind, color) pairs, spread round-robin over a shuffled room order.
        let mut rng = stage_rng(seed, STREAM_OBJECTS);
        let pairs = index::sample(&mut rng, ObjectKind::ALL.len() * Color::ALL.len(), config.num_objects);
        let room_order = index::sample(&mut rng, ROOM_COUNT, ROOM_COUNT).into_vec();
        let near_door = |p: Pos| doors.iter().any(|d| d.position.manhattan(p) == 1);
        let mut free: Vec<Vec<Pos>> = rooms.iter().map(|r| r.cells().filter(|&p| !near_door(p)).collect()).collect();
        let mut objects = Vec::with_capacity(config.num_objects);
        for j in 0..config.num_objects {
            let pair = pairs.index(j);
            let room = room_order[j % ROOM_COUNT];
            let slot = rng.gen_range(0..free[room].len());
            let position = free[room].remove(slot);
            objects.push(WorldObject {
                kind: ObjectKind::ALL[pair / Color::ALL.len()],
                color: Color::ALL[pair % Color::ALL.len()],
                position: Some(position),
                home_position: position,
            });
        }

        // Agent: uniform room, uniform unoccupied cell, uniform facing.
        let mut rng = stage_rng(seed, STREAM_AGENT);
        let room = &rooms[rng.gen_range(0..ROOM_COUNT)];
        let open: Vec<Pos> = room.cells().filter(|&p| objects.iter().all(|o| o.home_position != p)).collect();
        let position = open[rng.gen_range(0..open.len())];
        let facing = Direction::ALL[rng.gen_range(0..4)];

        Ok(GridWorld {
            seed,
            config,
            width: size,
            height: size,
            cells,
            rooms,
            doors,
            objects,
            agent: AgentPose { position, facing, carrying: None, home_position: position, home_facing: facing },
        })
    }

    /// Restores agent, objects and doors to their generation-time values.
    pub fn reset(&mut self) {
        self.agent.position = self.agent.home_position;
        self.agent.facing = self.agent.home_facing;
        self.agent.carrying = None;
        for o in &mut self.objects {
            o.position = Some(o.home_position);
        }
        for d in &mut self.doors {
            d.state = d.home_state;
        }
    }

    pub fn reset_copy(&self) -> GridWorld {
        let mut w = self.clone();
        w.reset();
        w
    }

    pub fn in_bounds(&self, p: Pos) -> bool {
        p.x >= 0 && p.y >= 0 && (p.x as usize) < self.width && (p.y as usize) < self.height
    }

    /// Static cell content; out-of-bounds reads as wall.
    pub fn cell(&self, p: Pos) -> Cell {
        if self.in_bounds(p) {
            self.cells[self.index_of(p)]
        } else {
            Cell::Wall
        }
    }

    pub fn door_at(&self, p: Pos) -> Option<usize> {
        self.doors.iter().position(|d| d.position == p)
    }

    pub fn object_at(&self, p: Pos) -> Option<usize> {
        self.objects.iter().position(|o| o.position == Some(p))
    }

    pub fn room_of(&self, p: Pos) -> Option<usize> {
        self.rooms.iter().position(|r| r.contains(p))
    }

    pub fn find_object(&self, goal: &Goal) -> Option<usize> {
        self.objects.iter().position(|o| o.color == goal.color && o.kind == goal.kind)
    }

    pub fn facing_pos(&self) -> Pos {
        self.agent.position.step(self.agent.facing)
    }

    /// Opaque cells block sight: walls and closed doors.
    pub fn is_opaque(&self, p: Pos) -> bool {
        match self.cell(p) {
            Cell::Wall => true,
            Cell::Floor => false,
            Cell::Door => self.door_at(p).is_some_and(|d| self.doors[d].state == DoorState::Closed),
        }
    }

    fn index_of(&self, p: Pos) -> usize {
        p.y as usize * self.width + p.x as usize
    }

    fn pos_of(&self, idx: u8) -> Pos {
        Pos::new(idx as i32 % self.width as i32, idx as i32 / self.width as i32)
    }

    /// Extracts the mutable part of the world.
    pub fn state(&self) -> WorldState {
        let mut objects = [NO_CELL; MAX_OBJECTS];
        for (slot, o) in objects.iter_mut().zip(&self.objects) {
            *slot = o.position.map_or(NO_CELL, |p| self.index_of(p) as u8);
        }
        let doors_open = self
            .doors
            .iter()
            .enumerate()
            .filter(|(_, d)| d.state == DoorState::Open)
            .fold(0u8, |m, (i, _)| m | (1 << i));
        WorldState {
            agent: self.index_of(self.agent.position) as u8,
            facing: self.agent.facing as u8,
            carrying: self.agent.carrying.map_or(NO_CELL, |c| c as u8),
            doors_open,
            objects,
        }
    }

    /// Overwrites the mutable part of the world with `s`.
    pub fn set_state(&mut self, s: &WorldState) {
        self.agent.position = self.pos_of(s.agent);
        self.agent.facing = s.facing();
        self.agent.carrying = s.carrying();
        for (i, o) in self.objects.iter_mut().enumerate() {
            o.position = (s.objects[i] != NO_CELL)
                .then(|| Pos::new(s.objects[i] as i32 % self.width as i32, s.objects[i] as i32 / self.width as i32));
        }
        for (i, d) in self.doors.iter_mut().enumerate() {
            d.state = if s.door_open(i) { DoorState::Open } else { DoorState::Closed };
        }
    }

    pub fn agent_pos_in(&self, s: &WorldState) -> Pos {
        self.pos_of(s.agent)
    }

    fn object_in(&self, s: &WorldState, cell: u8) -> Option<usize> {
        s.objects[..self.objects.len()].iter().position(|&c| c == cell)
    }

    fn facing_index(&self, s: &WorldState) -> Option<(Pos, u8)> {
        let p = self.pos_of(s.agent).step(s.facing());
        self.in_bounds(p).then(|| (p, self.index_of(p) as u8))
    }

    /// Whether `action` would change `s`.
    pub fn is_valid_in(&self, s: &WorldState, action: Action) -> bool {
        match action {
            Action::TurnLeft | Action::TurnRight => true,
            Action::GoForward => match self.facing_index(s) {
                Some((p, idx)) => match self.cell(p) {
                    Cell::Wall => false,
                    Cell::Floor => self.object_in(s, idx).is_none(),
                    Cell::Door => self.door_at(p).is_some_and(|d| s.door_open(d)),
                },
                None => false,
            },
            Action::PickUp => {
                s.carrying().is_none() && self.facing_index(s).is_some_and(|(_, idx)| self.object_in(s, idx).is_some())
            }
            Action::PutDown => {
                s.carrying().is_some()
                    && self
                        .facing_index(s)
                        .is_some_and(|(p, idx)| self.cell(p) == Cell::Floor && self.object_in(s, idx).is_none())
            }
            Action::ToggleDoor => self.facing_index(s).is_some_and(|(p, _)| self.cell(p) == Cell::Door),
        }
    }

    /// Pure transition over compact states. Invalid actions return `s` unchanged.
    pub fn transition(&self, s: &WorldState, action: Action) -> (WorldState, StepEffect) {
        if !self.is_valid_in(s, action) {
            return (*s, StepEffect::NoOp);
        }
        let mut next = *s;
        let effect = match action {
            Action::TurnLeft => {
                next.facing = s.facing().left() as u8;
                StepEffect::Turned(next.facing())
            }
            Action::TurnRight => {
                next.facing = s.facing().right() as u8;
                StepEffect::Turned(next.facing())
            }
            Action::GoForward => {
                let (p, idx) = self.facing_index(s).expect("validated");
                next.agent = idx;
                StepEffect::Moved(p)
            }
            Action::PickUp => {
                let (_, idx) = self.facing_index(s).expect("validated");
                let obj = self.object_in(s, idx).expect("validated");
                next.objects[obj] = NO_CELL;
                next.carrying = obj as u8;
                StepEffect::PickedUp(obj)
            }
            Action::PutDown => {
                let (_, idx) = self.facing_index(s).expect("validated");
                let obj = s.carrying as usize;
                next.objects[obj] = idx;
                next.carrying = NO_CELL;
                StepEffect::PutDown(obj)
            }
            Action::ToggleDoor => {
                let (p, _) = self.facing_index(s).expect("validated");
                let door = self.door_at(p).expect("door cell without door");
                next.doors_open ^= 1 << door;
                let state = if next.door_open(door) { DoorState::Open } else { DoorState::Closed };
                StepEffect::Toggled { door, state }
            }
        };
        (next, effect)
    }

    pub fn step(&mut self, action: Action) -> StepEffect {
        let (next, effect) = self.transition(&self.state(), action);
        if !effect.is_noop() {
            self.set_state(&next);
        }
        effect
    }

    pub fn action_menus(&self) -> ActionMenus {
        let s = self.state();
        let (valid, invalid) = Action::ALL.into_iter().partition(|&a| self.is_valid_in(&s, a));
        ActionMenus { valid, invalid }
    }

    pub fn goal_satisfied(&self, goal: &Goal) -> Result<bool, WorldError> {
        if self.find_object(goal).is_none() {
            return Err(WorldError::AbsentObject(format!("{} {}", goal.color.name(), goal.kind.name())));
        }
        Ok(self.agent.carrying.is_some_and(|c| {
            let o = &self.objects[c];
            o.color == goal.color && o.kind == goal.kind
        }))
    }

    /// `true` iff the state has the goal object in hand.
    pub fn goal_satisfied_in(&self, s: &WorldState, goal_object: usize) -> bool {
        s.carrying() == Some(goal_object)
    }

    /// Human-facing map; never shown to the policy.
    pub fn ascii_map(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let p = Pos::new(x, y);
                let ch = if p == self.agent.position {
                    match self.agent.facing {
                        Direction::North => '^',
                        Direction::East => '>',
                        Direction::South => 'v',
                        Direction::West => '<',
                    }
                } else if let Some(o) = self.object_at(p) {
                    match self.objects[o].kind {
                        ObjectKind::Key => 'K',
                        ObjectKind::Ball => 'B',
                        ObjectKind::Box => 'X',
                        ObjectKind::Star => 'S',
                        ObjectKind::Hexagon => 'H',
                        ObjectKind::Square => 'Q',
                    }
                } else {
                    match self.cell(p) {
                        Cell::Wall => '#',
                        Cell::Floor => '.',
                        Cell::Door => match self.door_at(p).map(|d| self.doors[d].state) {
                            Some(DoorState::Open) => 'd',
                            _ => 'D',
                        },
                    }
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    /// Canonical JSON snapshot (sorted keys, pretty-printed).
    pub fn to_snapshot_json(&self) -> String {
        crate::canonical::to_canonical_json(self).expect("world serializes")
    }

    pub fn from_snapshot_json(text: &str) -> Result<GridWorld, WorldError> {
        let world: GridWorld = serde_json::from_str(text).map_err(|e| WorldError::Snapshot(e.to_string()))?;
        if world.cells.len() != world.width * world.height {
            return Err(WorldError::Snapshot("cell count does not match dimensions".into()));
        }
        if world.objects.len() > MAX_OBJECTS || world.objects.is_empty() {
            return Err(WorldError::ObjectCount(world.objects.len()));
        }
        if world.width * world.height > NO_CELL as usize {
            return Err(WorldError::GridSize(world.width));
        }
        Ok(world)
    }
}

fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

mod cell_rows {
    use super::Cell;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(cells: &[Cell], s: S) -> Result<S::Ok, S::Error> {
        let width = (cells.len() as f64).sqrt() as usize;
        let rows: Vec<String> = cells
            .chunks(width.max(1))
            .map(|row| {
                row.iter()
                    .map(|c| match c {
                        Cell::Wall => '#',
                        Cell::Floor => '.',
                        Cell::Door => 'D',
                    })
                    .collect()
            })
            .collect();
        s.collect_seq(rows)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Cell>, D::Error> {
        let rows = Vec::<String>::deserialize(d)?;
        let mut cells = Vec::new();
        for row in rows {
            for ch in row.chars() {
                cells.push(match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Floor,
                    'D' => Cell::Door,
                    other => return Err(D::Error::custom(format!("unknown cell '{other}'"))),
                });
            }
        }
        Ok(cells)
    }
}
