//! One-dimensional point mass: push toward a fixed target with bounded force.

use super::{Action, ActionSpace, EnvContract, Environment, StepResult};
use crate::error::{Error, Result};
use crate::nn::DenseArray;

const TARGET: f64 = 0.8;
const GAIN: f64 = 0.1;
const HORIZON: usize = 30;

#[derive(Debug, Clone)]
pub struct PointMass {
    x: f64,
    t: usize,
    contract: EnvContract,
}

impl PointMass {
    pub fn new() -> Self {
        Self {
            x: 0.0,
            t: 0,
            contract: EnvContract {
                observation_dim: 1,
                action_space: ActionSpace::Continuous { dim: 1, low: -1.0, high: 1.0 },
                max_steps: HORIZON,
                // |x - 0.8| <= 1.8 on [-1, 1]
                declared_return_range: Some((-1.8 * HORIZON as f64, 0.0)),
            },
        }
    }

    pub fn position(&self) -> f64 {
        self.x
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for PointMass {
    fn contract(&self) -> &EnvContract {
        &self.contract
    }

    fn reset(&mut self, _seed: u64) -> DenseArray {
        self.x = 0.0;
        self.t = 0;
        DenseArray::row_vector(&[self.x]).expect("finite")
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.t >= HORIZON {
            return Err(Error::Contract("step called on a finished pointmass episode".into()));
        }
        let a = match action {
            Action::Continuous(v) if v.len() == 1 => v[0],
            Action::Continuous(v) => return Err(Error::dim("pointmass action", 1, v.len())),
            Action::Discrete(_) => return Err(Error::Contract("pointmass takes continuous actions".into())),
        };
        if !a.is_finite() {
            return Err(Error::Numeric(format!("pointmass action {a}")));
        }
        self.x = (self.x + GAIN * a.clamp(-1.0, 1.0)).clamp(-1.0, 1.0);
        self.t += 1;
        Ok(StepResult {
            observation: DenseArray::row_vector(&[self.x])?,
            reward: -(self.x - TARGET).abs(),
            terminated: false,
            truncated: self.t >= HORIZON,
        })
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
