//! Gridworld task environments.
//!
//! A task state is split into an invariant part (the agent position) and a
//! task part (the inventory of collected objects). Movement dynamics are shared
//! by every task on a map; objects only change the inventory.
//!
//! Objects form a chain: the key can always be picked up, the door opens only
//! when the key is held, and the treasure is collected only once the door is
//! open. Interaction happens automatically when the agent enters the cell.
//! The task is complete once the last object of the chain is collected.

pub mod generate;
pub mod layout;

use std::fmt;
use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{generate_task, mirror_task, strip_treasure};
pub use layout::{Cell, Layout, MapMarkers};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("map line {line}: {msg}")]
    Layout { line: usize, msg: String },
    #[error("usage error: {0}")]
    Usage(String),
    #[error("task generation failed: {0}")]
    Generation(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub x: i32,
    pub y: i32,
}

impl Pos {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn moved(self, action: Action) -> Self {
        let (dx, dy) = action.delta();
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn neighbors(self) -> [Pos; 4] {
        Action::ALL.map(|a| self.moved(a))
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
        }
    }

    pub fn random(rng: &mut impl Rng) -> Self {
        Self::ALL[rng.gen_range(0..Self::COUNT)]
    }
}

/// Set of collected objects. Flags only ever get added within an episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Inventory(u8);

impl Inventory {
    pub const EMPTY: Inventory = Inventory(0);
    pub const KEY: u8 = 1;
    pub const DOOR: u8 = 2;
    pub const TREASURE: u8 = 4;

    pub fn from_bits(bits: u8) -> Self {
        Self(bits & 0b111)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn has(self, flag: u8) -> bool {
        self.0 & flag != 0
    }

    pub fn with(self, flag: u8) -> Self {
        Self(self.0 | flag)
    }

    /// True when every flag of `self` is also set in `other`.
    pub fn is_subset_of(self, other: Inventory) -> bool {
        self.0 & !other.0 == 0
    }
}

impl fmt::Display for Inventory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return f.write_str("none");
        }
        let names: Vec<&str> = [(Self::KEY, "key"), (Self::DOOR, "door"), (Self::TREASURE, "treasure")]
            .into_iter()
            .filter(|(flag, _)| self.has(*flag))
            .map(|(_, n)| n)
            .collect();
        f.write_str(&names.join("+"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub pos: Pos,
    pub inventory: Inventory,
    pub alive: bool,
    pub t: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: GridState,
    /// Commanded action.
    pub action: Action,
    /// Action actually applied after noise.
    pub executed: Action,
    pub reward: f64,
    pub next_state: GridState,
    /// Episode is over after this transition.
    pub terminal: bool,
    /// Episode ended only because the step budget ran out.
    pub timeout: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutId {
    Kdt1,
    Kdt2,
    Hazard,
    /// Four-room map with generator-placed objects.
    Generated,
}

impl LayoutId {
    pub fn parse(s: &str) -> Result<Self, EnvError> {
        match s {
            "kdt1" => Ok(Self::Kdt1),
            "kdt2" => Ok(Self::Kdt2),
            "hazard" => Ok(Self::Hazard),
            "generated" => Ok(Self::Generated),
            other => Err(EnvError::Config(format!("invalid layout id {other:?}"))),
        }
    }

    fn builtin_map(self) -> Layout {
        match self {
            LayoutId::Kdt1 | LayoutId::Generated => Layout::kdt1(),
            LayoutId::Kdt2 => Layout::kdt2(),
            LayoutId::Hazard => Layout::hazard(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    /// +1 for every object event.
    AllObjects,
    /// +1 only for the event that completes the task.
    TerminalOnly,
}

impl RewardMode {
    pub fn label(self) -> &'static str {
        match self {
            RewardMode::AllObjects => "all-objects",
            RewardMode::TerminalOnly => "terminal-only",
        }
    }
}

impl std::str::FromStr for RewardMode {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [RewardMode::AllObjects, RewardMode::TerminalOnly]
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| EnvError::Config(format!("invalid reward mode {s:?}")))
    }
}

/// Object placement for one task. The door and treasure are optional so that
/// shorter chains (key only, key and door) can be expressed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Objects {
    pub key: Pos,
    #[serde(default)]
    pub door: Option<Pos>,
    #[serde(default)]
    pub treasure: Option<Pos>,
}

impl Objects {
    /// Inventory that marks the task as complete.
    pub fn goal(&self) -> Inventory {
        let mut inv = Inventory::EMPTY.with(Inventory::KEY);
        if self.door.is_some() {
            inv = inv.with(Inventory::DOOR);
        }
        if self.treasure.is_some() {
            inv = inv.with(Inventory::TREASURE);
        }
        inv
    }

    pub fn max_return(&self, mode: RewardMode) -> f64 {
        match mode {
            RewardMode::AllObjects => self.goal().bits().count_ones() as f64,
            RewardMode::TerminalOnly => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub layout: LayoutId,
    /// Replaces the built-in map for `layout`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_file: Option<PathBuf>,
    /// Probability that the commanded action is replaced by a uniform random one.
    pub noise: f64,
    pub budget: u32,
    pub reward_mode: RewardMode,
    /// Overrides the markers of the map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Objects>,
    #[serde(default)]
    pub seed: u64,
}

impl EnvConfig {
    pub fn kdt1() -> Self {
        Self {
            layout: LayoutId::Kdt1,
            map_file: None,
            noise: 0.2,
            budget: 300,
            reward_mode: RewardMode::AllObjects,
            objects: None,
            seed: 0,
        }
    }

    pub fn kdt2() -> Self {
        Self { layout: LayoutId::Kdt2, ..Self::kdt1() }
    }

    pub fn hazard() -> Self {
        Self {
            layout: LayoutId::Hazard,
            map_file: None,
            noise: 0.2,
            budget: 500,
            reward_mode: RewardMode::TerminalOnly,
            objects: None,
            seed: 0,
        }
    }

    pub fn for_layout(layout: LayoutId) -> Self {
        match layout {
            LayoutId::Kdt1 => Self::kdt1(),
            LayoutId::Kdt2 => Self::kdt2(),
            LayoutId::Hazard => Self::hazard(),
            LayoutId::Generated => Self { layout, ..Self::kdt1() },
        }
    }

    pub fn with_reward_mode(mut self, mode: RewardMode) -> Self {
        self.reward_mode = mode;
        self
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn map(&self) -> Result<Layout, EnvError> {
        match &self.map_file {
            Some(path) => Layout::load(path),
            None => Ok(self.layout.builtin_map()),
        }
    }

    /// Objects of the task: explicit placement or the map markers.
    pub fn resolve_objects(&self, layout: &Layout) -> Result<Objects, EnvError> {
        if let Some(objects) = self.objects {
            return Ok(objects);
        }
        if self.layout == LayoutId::Generated {
            return Err(EnvError::Config("generated layout requires explicit objects".into()));
        }
        let m = layout.markers();
        let key = m.key.ok_or_else(|| EnvError::Config("map has no key marker".into()))?;
        Ok(Objects { key, door: m.door, treasure: m.treasure })
    }
}

/// A validated environment. Stepping is a pure function of the state, the
/// action and the caller's random source.
#[derive(Clone, Debug)]
pub struct GridEnv {
    layout: Layout,
    objects: Objects,
    goal: Inventory,
    noise: f64,
    budget: u32,
    reward_mode: RewardMode,
}

impl GridEnv {
    pub fn new(config: &EnvConfig) -> Result<Self, EnvError> {
        if !(0.0..=1.0).contains(&config.noise) {
            return Err(EnvError::Config(format!("action noise {} outside [0,1]", config.noise)));
        }
        if config.budget == 0 {
            return Err(EnvError::Config("episode budget must be positive".into()));
        }
        let layout = config.map()?;
        let objects = config.resolve_objects(&layout)?;
        if objects.treasure.is_some() && objects.door.is_none() {
            return Err(EnvError::Config("a treasure requires a door".into()));
        }
        let mut placed = vec![objects.key];
        placed.extend(objects.door);
        placed.extend(objects.treasure);
        for (i, p) in placed.iter().enumerate() {
            if layout.cell(*p) != Cell::Floor {
                return Err(EnvError::Config(format!("object at {p} is not on a floor cell")));
            }
            if *p == layout.start() || placed[..i].contains(p) {
                return Err(EnvError::Config(format!("object at {p} overlaps another object or the start")));
            }
        }
        Ok(Self {
            goal: objects.goal(),
            layout,
            objects,
            noise: config.noise,
            budget: config.budget,
            reward_mode: config.reward_mode,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn objects(&self) -> &Objects {
        &self.objects
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn reward_mode(&self) -> RewardMode {
        self.reward_mode
    }

    pub fn goal(&self) -> Inventory {
        self.goal
    }

    pub fn reset(&self) -> GridState {
        GridState { pos: self.layout.start(), inventory: Inventory::EMPTY, alive: true, t: 0 }
    }

    pub fn is_complete(&self, state: &GridState) -> bool {
        self.goal.is_subset_of(state.inventory)
    }

    pub fn is_terminal(&self, state: &GridState) -> bool {
        !state.alive || self.is_complete(state) || state.t >= self.budget
    }

    /// Position after applying `action` with noise-free dynamics.
    pub fn move_from(&self, pos: Pos, action: Action) -> Pos {
        let next = pos.moved(action);
        if self.layout.is_passable(next) {
            next
        } else {
            pos
        }
    }

    /// Inventory after entering `pos` while holding `inv`.
    pub fn interact(&self, pos: Pos, inv: Inventory) -> Inventory {
        let o = &self.objects;
        if pos == o.key && !inv.has(Inventory::KEY) {
            inv.with(Inventory::KEY)
        } else if o.door == Some(pos) && inv.has(Inventory::KEY) && !inv.has(Inventory::DOOR) {
            inv.with(Inventory::DOOR)
        } else if o.treasure == Some(pos) && inv.has(Inventory::DOOR) && !inv.has(Inventory::TREASURE) {
            inv.with(Inventory::TREASURE)
        } else {
            inv
        }
    }

    pub fn step(&self, state: &GridState, action: Action, rng: &mut impl Rng) -> Result<Transition, EnvError> {
        if self.is_terminal(state) {
            return Err(EnvError::Usage("step called on a terminal state".into()));
        }
        let executed = if rng.gen::<f64>() < self.noise { Action::random(rng) } else { action };
        let pos = self.move_from(state.pos, executed);
        let alive = self.layout.cell(pos) != Cell::Fatal;
        let inventory = if alive { self.interact(pos, state.inventory) } else { state.inventory };
        let next = GridState { pos, inventory, alive, t: state.t + 1 };

        let event = inventory != state.inventory;
        let complete = self.is_complete(&next);
        let reward = match (event, self.reward_mode) {
            (false, _) => 0.0,
            (true, RewardMode::AllObjects) => 1.0,
            (true, RewardMode::TerminalOnly) => {
                if complete {
                    1.0
                } else {
                    0.0
                }
            }
        };
        let terminal = !alive || complete || next.t >= self.budget;
        Ok(Transition {
            state: *state,
            action,
            executed,
            reward,
            next_state: next,
            terminal,
            timeout: terminal && alive && !complete,
        })
    }
}
