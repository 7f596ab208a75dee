//! Environments behind a single episodic contract.
//!
//! Environments are selected by string id (see [`make_env`]):
//! `gridworld-v1`, `gridworld-v2`, `gridworld-file:<path>`, `pointmass` and
//! `chain`, each optionally suffixed with `+delayed` to hold back all reward
//! until the final transition.

mod chain;
mod delayed;
mod grid;
mod pointmass;

pub use chain::{chain_enumerate, ChainEnv, ChainMdpSpec, EnumeratedPath, MAX_ENUMERATED_PATHS};
pub use delayed::{delay_rewards, Delayed};
pub use grid::{
    grid_observe, grid_step, parse_grid_map, Cell, GridAction, GridSpec, GridState, GridWorld, GRIDWORLD_V1_MAP,
    GRIDWORLD_V2_MAP,
};
pub use pointmass::PointMass;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::DenseArray;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { dim: usize, low: f64, high: f64 },
}

impl ActionSpace {
    /// Width of an action once encoded as a row (one-hot for discrete).
    pub fn encoded_dim(&self) -> usize {
        match *self {
            ActionSpace::Discrete(n) => n,
            ActionSpace::Continuous { dim, .. } => dim,
        }
    }

    /// Width of an action as stored in a batch (index for discrete).
    pub fn stored_dim(&self) -> usize {
        match *self {
            ActionSpace::Discrete(_) => 1,
            ActionSpace::Continuous { dim, .. } => dim,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ActionSpace::Discrete(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    /// Row form used in batches: the index as a float, or the raw vector.
    pub fn to_row(&self) -> Vec<f64> {
        match self {
            Action::Discrete(a) => vec![*a as f64],
            Action::Continuous(v) => v.clone(),
        }
    }

    pub fn from_row(space: &ActionSpace, row: &[f64]) -> Self {
        match space {
            ActionSpace::Discrete(_) => Action::Discrete(row[0] as usize),
            ActionSpace::Continuous { .. } => Action::Continuous(row.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvContract {
    pub observation_dim: usize,
    pub action_space: ActionSpace,
    pub max_steps: usize,
    /// Bounds on any episode's return, when the environment can state them.
    pub declared_return_range: Option<(f64, f64)>,
}

impl EnvContract {
    pub fn validate(&self) -> Result<()> {
        if self.max_steps < 1 {
            return Err(Error::Contract("max_steps must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.declared_return_range {
            if !(lo < hi) {
                return Err(Error::Contract(format!("declared return range [{lo}, {hi}] is empty")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: DenseArray,
    pub reward: f64,
    /// Episode ended in a terminal state (e.g. the goal).
    pub terminated: bool,
    /// Episode hit the step limit.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// An episodic environment. Each episode's randomness comes from the seed
/// passed to [`reset`](Environment::reset).
pub trait Environment: Send {
    fn contract(&self) -> &EnvContract;

    /// Starts a new episode and returns the first observation (a `1 × d` row).
    fn reset(&mut self, seed: u64) -> DenseArray;

    fn step(&mut self, action: &Action) -> Result<StepResult>;

    fn clone_box(&self) -> Box<dyn Environment>;
}

impl Clone for Box<dyn Environment> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Builds an environment from its string id.
pub fn make_env(id: &str) -> Result<Box<dyn Environment>> {
    let (base, delayed) = match id.strip_suffix("+delayed") {
        Some(base) => (base, true),
        None => (id, false),
    };
    let env: Box<dyn Environment> = match base {
        "gridworld-v1" => Box::new(GridWorld::new(GridSpec::v1())),
        "gridworld-v2" => Box::new(GridWorld::new(GridSpec::v2())),
        "pointmass" => Box::new(PointMass::new()),
        "chain" => Box::new(ChainEnv::new(ChainMdpSpec::demo())?),
        other => match other.strip_prefix("gridworld-file:") {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                Box::new(GridWorld::new(parse_grid_map(&text)?))
            }
            None => return Err(Error::Config(format!("unknown environment id '{id}'"))),
        },
    };
    env.contract().validate()?;
    Ok(if delayed { Box::new(Delayed::new(env)) } else { env })
}
