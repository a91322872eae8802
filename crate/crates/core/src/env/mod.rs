//! Environment contract and the built-in grid problems.
//!
//! Every problem is a [`Layout`] plus an [`EnvironmentSpec`] describing its
//! action set, rewards and episode cap. [`GridEnv`] runs episodes over a spec.
//! Maze and classroom states are `[y, x]` coordinates; FrozenLake states are
//! flat cell indices.

mod layout;
mod registry;
mod render;

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use layout::{CellKind, Layout};
pub use registry::{
    applications, builtin, registered_keys, Application, EnvironmentRef, GRID_ACTIONS,
    LAKE_ACTIONS,
};
pub use render::{render_svg, render_text, CellHighlight};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown environment {key:?}; registered: {}", known.join(", "))]
    UnknownEnvironment { key: String, known: Vec<String> },
    #[error("invalid layout: {0}")]
    Layout(String),
    #[error("episode is over; call reset before stepping again")]
    EpisodeOver,
    #[error("action id {action} is out of range for {n} actions")]
    InvalidAction { action: usize, n: usize },
    #[error("state {0} does not belong to this environment")]
    ForeignState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }

    /// Counter-clockwise neighbour of this heading.
    pub fn turn_left(self) -> Self {
        match self {
            Direction::Up => Direction::Left,
            Direction::Left => Direction::Down,
            Direction::Down => Direction::Right,
            Direction::Right => Direction::Up,
        }
    }

    pub fn turn_right(self) -> Self {
        match self {
            Direction::Up => Direction::Right,
            Direction::Right => Direction::Down,
            Direction::Down => Direction::Left,
            Direction::Left => Direction::Up,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateRepr {
    Coord,
    Index,
}

/// The native environment state.
///
/// `id` is derived from whichever of `coord` / `index` the environment uses:
/// `"[3,1]"` for coordinates, `"7"` for indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EnvState {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

impl EnvState {
    pub fn from_coord(y: usize, x: usize) -> Self {
        Self {
            id: format!("[{y},{x}]"),
            coord: Some([y, x]),
            index: None,
        }
    }

    pub fn from_index(index: usize) -> Self {
        Self {
            id: index.to_string(),
            coord: None,
            index: Some(index),
        }
    }

    /// Inverse of `id`: `"[3,1]"` or `"15"`. Does not check membership in
    /// any environment; see [`EnvironmentSpec::parse_state`].
    pub fn parse(id: &str) -> Option<Self> {
        let id = id.trim();
        if let Some(inner) = id.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let (y, x) = inner.split_once(',')?;
            return Some(Self::from_coord(y.trim().parse().ok()?, x.trim().parse().ok()?));
        }
        id.parse().ok().map(Self::from_index)
    }
}

impl fmt::Display for EnvState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: EnvState,
    pub reward: f64,
    pub terminal: bool,
    pub goal_reached: bool,
    /// The episode hit its step cap without otherwise terminating.
    pub truncated: bool,
    /// Direction actually applied after any slip.
    pub executed: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardProfile {
    pub goal: f64,
    pub hazard: f64,
    pub punk: f64,
    pub step: f64,
    /// Added to the final step when the episode is truncated at its cap.
    pub timeout_penalty: f64,
}

/// A named point of interest used by rule-based descriptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: String,
    pub coord: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct EnvironmentSpec {
    pub name: String,
    pub sub_config: String,
    pub action_set: Vec<Direction>,
    pub start: EnvState,
    pub goals: Vec<EnvState>,
    pub episode_cap: u32,
    pub stochastic: bool,
    pub layout: Layout,
    pub repr: StateRepr,
    pub rewards: RewardProfile,
    pub landmarks: Vec<Landmark>,
}

impl EnvironmentSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn from_layout(
        name: &str,
        sub_config: &str,
        layout: Layout,
        action_set: Vec<Direction>,
        repr: StateRepr,
        rewards: RewardProfile,
        episode_cap: u32,
        stochastic: bool,
        landmarks: Vec<Landmark>,
    ) -> Result<Self, EnvError> {
        if action_set.is_empty() {
            return Err(EnvError::Layout("action set is empty".into()));
        }
        if episode_cap == 0 {
            return Err(EnvError::Layout("episode cap must be positive".into()));
        }
        let start_flat = layout
            .find(CellKind::Start)
            .next()
            .ok_or_else(|| EnvError::Layout("no start cell".into()))?;
        let mut spec = Self {
            name: name.into(),
            sub_config: sub_config.into(),
            action_set,
            start: EnvState::from_index(0),
            goals: Vec::new(),
            episode_cap,
            stochastic,
            layout,
            repr,
            rewards,
            landmarks,
        };
        spec.start = spec.state_of(start_flat);
        spec.goals = spec
            .layout
            .find(CellKind::Goal)
            .map(|f| spec.state_of(f))
            .collect();
        for lm in &spec.landmarks {
            if spec.layout.at(lm.coord[0], lm.coord[1]).is_none() {
                return Err(EnvError::Layout(format!(
                    "landmark {} lies outside the layout",
                    lm.name
                )));
            }
        }
        Ok(spec)
    }

    pub fn key(&self) -> String {
        format!("{}/{}", self.name, self.sub_config)
    }

    pub fn state_of(&self, flat: usize) -> EnvState {
        match self.repr {
            StateRepr::Index => EnvState::from_index(flat),
            StateRepr::Coord => {
                let (y, x) = self.layout.coord(flat);
                EnvState::from_coord(y, x)
            }
        }
    }

    /// Flat cell of a state, rejecting states from other environments.
    pub fn cell_of(&self, state: &EnvState) -> Result<usize, EnvError> {
        let flat = match (self.repr, state.coord, state.index) {
            (StateRepr::Coord, Some([y, x]), _) if y < self.layout.rows() && x < self.layout.cols() => {
                self.layout.flat(y, x)
            }
            (StateRepr::Index, _, Some(i)) if i < self.layout.len() => i,
            _ => return Err(EnvError::ForeignState(state.id.clone())),
        };
        if self.layout.cell(flat).is_wall() || self.state_of(flat).id != state.id {
            return Err(EnvError::ForeignState(state.id.clone()));
        }
        Ok(flat)
    }

    pub fn cell_kind(&self, state: &EnvState) -> Result<CellKind, EnvError> {
        self.cell_of(state).map(|f| self.layout.cell(f))
    }

    /// Resolves a state id such as `"[3,1]"` or `"15"`.
    pub fn parse_state(&self, id: &str) -> Result<EnvState, EnvError> {
        let foreign = || EnvError::ForeignState(id.to_string());
        let state = match self.repr {
            StateRepr::Index => EnvState::from_index(id.trim().parse().map_err(|_| foreign())?),
            StateRepr::Coord => {
                let inner = id
                    .trim()
                    .strip_prefix('[')
                    .and_then(|s| s.strip_suffix(']'))
                    .ok_or_else(foreign)?;
                let (y, x) = inner.split_once(',').ok_or_else(foreign)?;
                EnvState::from_coord(
                    y.trim().parse().map_err(|_| foreign())?,
                    x.trim().parse().map_err(|_| foreign())?,
                )
            }
        };
        self.cell_of(&state)?;
        Ok(state)
    }

    /// Target cell of a move; blocked moves and moves off the grid stay put.
    pub fn move_from(&self, flat: usize, dir: Direction) -> usize {
        let (y, x) = self.layout.coord(flat);
        let (dy, dx) = dir.delta();
        let ny = y as isize + dy;
        let nx = x as isize + dx;
        if ny < 0 || nx < 0 {
            return flat;
        }
        match self.layout.at(ny as usize, nx as usize) {
            Some(kind) if !kind.is_wall() => self.layout.flat(ny as usize, nx as usize),
            _ => flat,
        }
    }

    /// Moves from `state` that do not run into a wall.
    ///
    /// Stochastic problems keep the full action set: slips are resolved by
    /// clamping, so every action is meaningful. Terminal states have no
    /// legal actions.
    pub fn legal_actions(&self, state: &EnvState) -> Result<Vec<Direction>, EnvError> {
        let flat = self.cell_of(state)?;
        if self.layout.cell(flat).is_terminal() {
            return Ok(Vec::new());
        }
        if self.stochastic {
            return Ok(self.action_set.clone());
        }
        Ok(self
            .action_set
            .iter()
            .copied()
            .filter(|&d| self.move_from(flat, d) != flat)
            .collect())
    }

    /// Every non-wall cell reachable from the start, once each, row-major.
    pub fn enumerate_states(&self) -> Vec<EnvState> {
        let start = self
            .cell_of(&self.start)
            .expect("start lies inside its own layout");
        let mut seen = vec![false; self.layout.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(cur) = queue.pop_front() {
            for dir in GRID_ACTIONS {
                let next = self.move_from(cur, dir);
                if !seen[next] {
                    seen[next] = true;
                    queue.push_back(next);
                }
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(f, _)| self.state_of(f))
            .collect()
    }

    pub fn is_goal(&self, state: &EnvState) -> bool {
        self.goals.iter().any(|g| g == state)
    }
}

/// The episodic interaction contract used by collection and training.
pub trait Environment {
    fn spec(&self) -> &Arc<EnvironmentSpec>;

    /// Starts a new episode. Identical seeds give identical trajectories
    /// under identical action sequences.
    fn reset(&mut self, seed: u64) -> EnvState;

    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError>;

    fn state(&self) -> EnvState;

    fn steps_taken(&self) -> u32;
}

#[derive(Debug, Clone)]
pub struct GridEnv {
    spec: Arc<EnvironmentSpec>,
    pos: usize,
    steps: u32,
    done: bool,
    rng: ChaCha8Rng,
}

impl GridEnv {
    pub fn new(spec: Arc<EnvironmentSpec>) -> Self {
        let pos = spec.cell_of(&spec.start).expect("valid start");
        Self {
            spec,
            pos,
            steps: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }
}

impl Environment for GridEnv {
    fn spec(&self) -> &Arc<EnvironmentSpec> {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> EnvState {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = self.spec.cell_of(&self.spec.start).expect("valid start");
        self.steps = 0;
        self.done = false;
        self.spec.start.clone()
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeOver);
        }
        let n = self.spec.action_set.len();
        let intended = *self
            .spec
            .action_set
            .get(action)
            .ok_or(EnvError::InvalidAction { action, n })?;
        let executed = if self.spec.stochastic {
            match self.rng.random_range(0..3u8) {
                0 => intended,
                1 => intended.turn_left(),
                _ => intended.turn_right(),
            }
        } else {
            intended
        };
        self.pos = self.spec.move_from(self.pos, executed);
        self.steps += 1;

        let rewards = &self.spec.rewards;
        let kind = self.spec.layout.cell(self.pos);
        let (mut reward, mut terminal) = match kind {
            CellKind::Goal => (rewards.goal, true),
            CellKind::Hazard => (rewards.hazard, true),
            CellKind::Punk => (rewards.punk, true),
            _ => (rewards.step, false),
        };
        let mut truncated = false;
        if !terminal && self.steps >= self.spec.episode_cap {
            reward += rewards.timeout_penalty;
            terminal = true;
            truncated = true;
        }
        self.done = terminal;
        Ok(StepOutcome {
            next_state: self.spec.state_of(self.pos),
            reward,
            terminal,
            goal_reached: kind == CellKind::Goal,
            truncated,
            executed,
        })
    }

    fn state(&self) -> EnvState {
        self.spec.state_of(self.pos)
    }

    fn steps_taken(&self) -> u32 {
        self.steps
    }
}
