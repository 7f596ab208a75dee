//! Deterministic GridWorld with consumable diamonds and persistent fires.
//!
//! Map text is a rectangular character grid:
//!
//! ```text
//! # max_steps: 50
//! SD..F..
//! F.F.D..
//! ```
//!
//! `S` start, `G` goal, `D` diamond, `F` fire, `.` empty. Lines starting with
//! `#` are comments; a `# max_steps: N` comment sets the episode limit
//! (default 50).

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace, EnvContract, Environment, StepResult};
use crate::error::{Error, Result};
use crate::nn::DenseArray;

pub const GRIDWORLD_V1_MAP: &str = "\
# max_steps: 50
SD..F..
F.F.D..
....FD.
F.F..DG
";

pub const GRIDWORLD_V2_MAP: &str = "\
# max_steps: 100
S..F....D.
.D.F.FF...
...D...F.D
FF.FF.D...
..D...F.F.
.F..D...FG
";

const DEFAULT_MAX_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::Up, GridAction::Down, GridAction::Left, GridAction::Right];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Contract(format!("grid action index {i} out of range 0..4")))
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.trim().to_ascii_lowercase().as_str() {
            "up" | "u" => Ok(GridAction::Up),
            "down" | "d" => Ok(GridAction::Down),
            "left" | "l" => Ok(GridAction::Left),
            "right" | "r" => Ok(GridAction::Right),
            other => Err(Error::Config(format!("unknown grid action '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GridAction::Up => "up",
            GridAction::Down => "down",
            GridAction::Left => "left",
            GridAction::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub start: Cell,
    pub goal: Cell,
    /// Row-major order; bit `i` of the state mask refers to `diamonds[i]`.
    pub diamonds: Vec<Cell>,
    pub fires: Vec<Cell>,
    pub max_steps: usize,
    pub step_reward: f64,
    pub diamond_reward: f64,
    pub fire_reward: f64,
}

impl GridSpec {
    pub fn v1() -> Self {
        parse_grid_map(GRIDWORLD_V1_MAP).expect("bundled v1 map parses")
    }

    pub fn v2() -> Self {
        parse_grid_map(GRIDWORLD_V2_MAP).expect("bundled v2 map parses")
    }

    pub fn observation_dim(&self) -> usize {
        2 + self.diamonds.len()
    }

    pub fn initial_state(&self) -> GridState {
        GridState {
            position: self.start,
            remaining_diamonds: full_mask(self.diamonds.len()),
            steps_taken: 0,
            accrued_reward: 0.0,
        }
    }

    /// `[(fire + step) * max_steps, diamond * |diamonds|]`, a superset of all
    /// achievable episode returns.
    pub fn return_range(&self) -> (f64, f64) {
        (
            (self.fire_reward + self.step_reward) * self.max_steps as f64,
            self.diamond_reward * self.diamonds.len() as f64,
        )
    }

    pub fn contract(&self) -> EnvContract {
        EnvContract {
            observation_dim: self.observation_dim(),
            action_space: ActionSpace::Discrete(4),
            max_steps: self.max_steps,
            declared_return_range: Some(self.return_range()),
        }
    }

    pub fn is_fire(&self, cell: Cell) -> bool {
        self.fires.binary_search(&cell).is_ok()
    }

    pub fn diamond_index(&self, cell: Cell) -> Option<usize> {
        self.diamonds.iter().position(|&d| d == cell)
    }

    fn validate(&self) -> Result<()> {
        let in_bounds = |c: &Cell| c.row < self.height && c.col < self.width;
        let all = [self.start, self.goal].into_iter().chain(self.diamonds.iter().copied()).chain(self.fires.iter().copied());
        if let Some(c) = all.clone().find(|c| !in_bounds(c)) {
            return Err(Error::Contract(format!("cell {c} outside {}x{} grid", self.height, self.width)));
        }
        if self.diamonds.iter().any(|d| self.is_fire(*d)) {
            return Err(Error::Contract("a cell cannot hold both a diamond and a fire".into()));
        }
        if self.is_fire(self.start) {
            return Err(Error::Contract("start cell is on fire".into()));
        }
        if self.diamonds.len() > 63 {
            return Err(Error::Contract("at most 63 diamonds are supported".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Contract("max_steps must be positive".into()));
        }
        Ok(())
    }
}

fn full_mask(n: usize) -> u64 {
    if n == 0 {
        0
    } else {
        (1u64 << n) - 1
    }
}

pub fn parse_grid_map(text: &str) -> Result<GridSpec> {
    let mut max_steps = DEFAULT_MAX_STEPS;
    let mut width = None;
    let mut height = 0;
    let (mut start, mut goal) = (None, None);
    let mut diamonds = Vec::new();
    let mut fires = Vec::new();

    for (line_idx, raw) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = raw.trim_end();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(value) = comment.trim().strip_prefix("max_steps:") {
                max_steps = value.trim().parse().map_err(|_| Error::Parse {
                    line: line_no,
                    column: 1,
                    message: format!("bad max_steps value '{}'", value.trim()),
                })?;
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let row = height;
        let mut cols = 0;
        for (col, ch) in line.chars().enumerate() {
            let cell = Cell::new(row, col);
            let err = |message: String| Error::Parse { line: line_no, column: col + 1, message };
            match ch {
                '.' => {}
                'D' => diamonds.push(cell),
                'F' => fires.push(cell),
                'S' => {
                    if start.replace(cell).is_some() {
                        return Err(err("duplicate start 'S'".into()));
                    }
                }
                'G' => {
                    if goal.replace(cell).is_some() {
                        return Err(err("duplicate goal 'G'".into()));
                    }
                }
                other => return Err(err(format!("unknown glyph '{other}'"))),
            }
            cols += 1;
        }
        match width {
            None => width = Some(cols),
            Some(w) if w != cols => {
                return Err(Error::Parse {
                    line: line_no,
                    column: cols.min(w) + 1,
                    message: format!("ragged row: expected {w} cells, found {cols}"),
                })
            }
            _ => {}
        }
        height += 1;
    }

    let last_line = text.lines().count().max(1);
    let with_msg = |msg: &str| Error::Parse { line: last_line, column: 1, message: msg.into() };
    let width = width.ok_or_else(|| with_msg("empty map"))?;
    let start = start.ok_or_else(|| with_msg("missing start 'S'"))?;
    let goal = goal.ok_or_else(|| with_msg("missing goal 'G'"))?;
    fires.sort();

    let spec = GridSpec {
        width,
        height,
        start,
        goal,
        diamonds,
        fires,
        max_steps,
        step_reward: -1.0,
        diamond_reward: 20.0,
        fire_reward: -100.0,
    };
    spec.validate()?;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    pub position: Cell,
    pub remaining_diamonds: u64,
    pub steps_taken: usize,
    pub accrued_reward: f64,
}

impl GridState {
    pub fn is_finished(&self, spec: &GridSpec) -> bool {
        self.position == spec.goal || self.steps_taken >= spec.max_steps
    }
}

/// Normalized `(col / width, row / height)` followed by one bit per diamond
/// (1 = still present).
pub fn grid_observe(spec: &GridSpec, state: &GridState) -> DenseArray {
    let mut obs = Vec::with_capacity(spec.observation_dim());
    obs.push(state.position.col as f64 / spec.width as f64);
    obs.push(state.position.row as f64 / spec.height as f64);
    for i in 0..spec.diamonds.len() {
        obs.push(((state.remaining_diamonds >> i) & 1) as f64);
    }
    DenseArray::row_vector(&obs).expect("finite observation")
}

pub fn grid_step(spec: &GridSpec, state: &GridState, action: GridAction) -> Result<(GridState, StepResult)> {
    if state.is_finished(spec) {
        return Err(Error::Contract("step called on a finished GridWorld episode".into()));
    }
    let Cell { row, col } = state.position;
    let dest = match action {
        GridAction::Up => Cell::new(row.saturating_sub(1), col),
        GridAction::Down => Cell::new((row + 1).min(spec.height - 1), col),
        GridAction::Left => Cell::new(row, col.saturating_sub(1)),
        GridAction::Right => Cell::new(row, (col + 1).min(spec.width - 1)),
    };
    let mut reward = spec.step_reward;
    let mut remaining = state.remaining_diamonds;
    if let Some(i) = spec.diamond_index(dest) {
        if (remaining >> i) & 1 == 1 {
            reward += spec.diamond_reward;
            remaining &= !(1u64 << i);
        }
    }
    if spec.is_fire(dest) {
        reward += spec.fire_reward;
    }
    let next = GridState {
        position: dest,
        remaining_diamonds: remaining,
        steps_taken: state.steps_taken + 1,
        accrued_reward: state.accrued_reward + reward,
    };
    let terminated = dest == spec.goal;
    let truncated = !terminated && next.steps_taken >= spec.max_steps;
    let observation = grid_observe(spec, &next);
    Ok((
        next,
        StepResult {
            observation,
            reward,
            terminated,
            truncated,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    spec: GridSpec,
    contract: EnvContract,
    state: GridState,
}

impl GridWorld {
    pub fn new(spec: GridSpec) -> Self {
        let contract = spec.contract();
        let state = spec.initial_state();
        Self { spec, contract, state }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn state(&self) -> &GridState {
        &self.state
    }
}

impl Environment for GridWorld {
    fn contract(&self) -> &EnvContract {
        &self.contract
    }

    fn reset(&mut self, _seed: u64) -> DenseArray {
        self.state = self.spec.initial_state();
        grid_observe(&self.spec, &self.state)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let a = match action {
            Action::Discrete(i) => GridAction::from_index(*i)?,
            Action::Continuous(_) => return Err(Error::Contract("GridWorld takes discrete actions".into())),
        };
        let (next, result) = grid_step(&self.spec, &self.state, a)?;
        self.state = next;
        Ok(result)
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
