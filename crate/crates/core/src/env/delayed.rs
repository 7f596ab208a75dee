use super::{Action, EnvContract, Environment, StepResult};
use crate::error::Result;
use crate::nn::DenseArray;

/// Replaces per-step rewards with zeros and pays the undiscounted episode
/// sum on the final step.
pub fn delay_rewards(rewards: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    if let Some(last) = out.last_mut() {
        *last = rewards.iter().sum();
    }
    out
}

pub struct Delayed {
    inner: Box<dyn Environment>,
    accrued: f64,
}

impl Delayed {
    pub fn new(inner: Box<dyn Environment>) -> Self {
        Self { inner, accrued: 0.0 }
    }
}

impl Environment for Delayed {
    fn contract(&self) -> &EnvContract {
        self.inner.contract()
    }

    fn reset(&mut self, seed: u64) -> DenseArray {
        self.accrued = 0.0;
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        let mut r = self.inner.step(action)?;
        self.accrued += r.reward;
        r.reward = if r.done() { self.accrued } else { 0.0 };
        Ok(r)
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(Delayed {
            inner: self.inner.clone_box(),
            accrued: self.accrued,
        })
    }
}
