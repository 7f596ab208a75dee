//! On-policy collection and return bookkeeping.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{Action, ActionSpace, Environment};
use crate::error::{Error, Result};
use crate::nn::DenseArray;

/// Anything that can pick an action for a single observation row.
pub trait Policy {
    fn act(&self, observation: &DenseArray, rng: &mut dyn rand::RngCore) -> Result<(Action, f64)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Episodes(usize),
    /// Keep collecting whole episodes until at least this many steps exist.
    Steps(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub observations: DenseArray,
    /// Discrete actions are stored as their index in a single column.
    pub actions: DenseArray,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// True on the last step of every trajectory.
    pub dones: Vec<bool>,
    pub returns_to_go: Vec<f64>,
    /// Half-open step ranges, one per trajectory.
    pub bounds: Vec<(usize, usize)>,
    /// Discounted return of each trajectory, `Z(τ) = z_0`.
    pub trajectory_returns: Vec<f64>,
    /// Undiscounted reward sum of each trajectory.
    pub episode_returns: Vec<f64>,
    pub terminated: Vec<bool>,
    pub gamma: f64,
    pub action_space: ActionSpace,
}

/// Backward recursion `z_t = r_t + γ z_{t+1}` inside each trajectory; the last
/// step of a trajectory has no tail.
pub fn compute_returns(rewards: &[f64], bounds: &[(usize, usize)], gamma: f64) -> Vec<f64> {
    let mut z = vec![0.0; rewards.len()];
    for &(start, end) in bounds {
        let mut acc = 0.0;
        for t in (start..end).rev() {
            acc = rewards[t] + gamma * acc;
            z[t] = acc;
        }
    }
    z
}

impl RolloutBatch {
    pub fn from_trajectories(trajectories: &[Trajectory], action_space: ActionSpace, gamma: f64) -> Result<Self> {
        if trajectories.is_empty() || trajectories.iter().any(Trajectory::is_empty) {
            return Err(Error::Contract("rollout batch needs non-empty trajectories".into()));
        }
        let obs_dim = trajectories[0].observations[0].len();
        let act_dim = action_space.stored_dim();
        let total: usize = trajectories.iter().map(Trajectory::len).sum();
        let mut obs = Vec::with_capacity(total * obs_dim);
        let mut acts = Vec::with_capacity(total * act_dim);
        let mut log_probs = Vec::with_capacity(total);
        let mut rewards = Vec::with_capacity(total);
        let mut dones = Vec::with_capacity(total);
        let mut bounds = Vec::with_capacity(trajectories.len());
        let mut terminated = Vec::with_capacity(trajectories.len());
        let mut episode_returns = Vec::with_capacity(trajectories.len());
        for tr in trajectories {
            let start = rewards.len();
            for t in 0..tr.len() {
                if tr.observations[t].len() != obs_dim || tr.actions[t].len() != act_dim {
                    return Err(Error::dim("trajectory step", format!("{obs_dim}/{act_dim}"), format!("{}/{}", tr.observations[t].len(), tr.actions[t].len())));
                }
                obs.extend_from_slice(&tr.observations[t]);
                acts.extend_from_slice(&tr.actions[t]);
                log_probs.push(tr.log_probs[t]);
                rewards.push(tr.rewards[t]);
                dones.push(t + 1 == tr.len());
            }
            bounds.push((start, rewards.len()));
            terminated.push(tr.terminated);
            episode_returns.push(tr.rewards.iter().sum());
        }
        let mut batch = Self {
            observations: DenseArray::new(total, obs_dim, obs)?,
            actions: DenseArray::new(total, act_dim, acts)?,
            log_probs,
            rewards,
            dones,
            returns_to_go: Vec::new(),
            bounds,
            trajectory_returns: Vec::new(),
            episode_returns,
            terminated,
            gamma,
            action_space,
        };
        batch.compute_returns(gamma);
        Ok(batch)
    }

    /// Recomputes `returns_to_go` and `trajectory_returns` for a discount.
    pub fn compute_returns(&mut self, gamma: f64) {
        self.gamma = gamma;
        self.returns_to_go = compute_returns(&self.rewards, &self.bounds, gamma);
        self.trajectory_returns = self.bounds.iter().map(|&(s, _)| self.returns_to_go[s]).collect();
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn n_trajectories(&self) -> usize {
        self.bounds.len()
    }

    /// `Z(τ)` repeated for every step of its trajectory.
    pub fn trajectory_return_per_step(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for (&(s, e), &z) in self.bounds.iter().zip(&self.trajectory_returns) {
            out[s..e].iter_mut().for_each(|v| *v = z);
        }
        out
    }

    /// Discrete action indices (panics on continuous batches).
    pub fn action_indices(&self) -> Vec<usize> {
        assert!(self.action_space.is_discrete(), "action_indices on a continuous batch");
        self.actions.data().iter().map(|&a| a as usize).collect()
    }

    pub fn concat(batches: &[&RolloutBatch]) -> Result<Self> {
        let first = batches.first().ok_or_else(|| Error::Contract("concat of zero batches".into()))?;
        let mut out = (*first).clone();
        for b in &batches[1..] {
            if b.action_space != first.action_space || b.observations.cols() != first.observations.cols() {
                return Err(Error::Contract("concat of batches from different environments".into()));
            }
            let offset = out.len();
            out.observations = DenseArray::vstack(&[&out.observations, &b.observations])?;
            out.actions = DenseArray::vstack(&[&out.actions, &b.actions])?;
            out.log_probs.extend_from_slice(&b.log_probs);
            out.rewards.extend_from_slice(&b.rewards);
            out.dones.extend_from_slice(&b.dones);
            out.returns_to_go.extend_from_slice(&b.returns_to_go);
            out.bounds.extend(b.bounds.iter().map(|&(s, e)| (s + offset, e + offset)));
            out.trajectory_returns.extend_from_slice(&b.trajectory_returns);
            out.episode_returns.extend_from_slice(&b.episode_returns);
            out.terminated.extend_from_slice(&b.terminated);
        }
        Ok(out)
    }
}

/// Seed of the policy's sampling stream for one episode, kept apart from the
/// environment's own stream.
fn policy_stream_seed(episode_seed: u64) -> u64 {
    episode_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03
}

pub fn run_episode(env: &mut dyn Environment, policy: &dyn Policy, seed: u64) -> Result<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(policy_stream_seed(seed));
    let max_steps = env.contract().max_steps;
    let mut obs = env.reset(seed);
    let mut tr = Trajectory {
        observations: Vec::new(),
        actions: Vec::new(),
        log_probs: Vec::new(),
        rewards: Vec::new(),
        terminated: false,
        truncated: false,
    };
    loop {
        let (action, log_prob) = policy.act(&obs, &mut rng)?;
        let step = env.step(&action)?;
        if !step.reward.is_finite() {
            return Err(Error::Numeric(format!("environment emitted reward {}", step.reward)));
        }
        tr.observations.push(obs.into_data());
        tr.actions.push(action.to_row());
        tr.log_probs.push(log_prob);
        tr.rewards.push(step.reward);
        let done = step.done();
        tr.terminated = step.terminated;
        tr.truncated = step.truncated;
        obs = step.observation;
        if done {
            break;
        }
        if tr.len() >= max_steps {
            return Err(Error::Contract(format!("environment ran past max_steps = {max_steps}")));
        }
    }
    Ok(tr)
}

/// Collects whole episodes; episode `i` is seeded with `base_seed + i`.
pub fn collect(env: &mut dyn Environment, policy: &dyn Policy, budget: Budget, base_seed: u64, gamma: f64) -> Result<RolloutBatch> {
    let mut trajectories = Vec::new();
    let mut steps = 0;
    let mut i = 0u64;
    loop {
        let done = match budget {
            Budget::Episodes(n) => trajectories.len() >= n,
            Budget::Steps(n) => steps >= n,
        };
        if done {
            break;
        }
        let tr = run_episode(env, policy, base_seed.wrapping_add(i))?;
        steps += tr.len();
        trajectories.push(tr);
        i += 1;
    }
    RolloutBatch::from_trajectories(&trajectories, env.contract().action_space.clone(), gamma)
}

/// A policy that picks uniformly among discrete actions. Handy for tests and
/// smoke runs.
pub struct UniformPolicy {
    pub n_actions: usize,
}

impl Policy for UniformPolicy {
    fn act(&self, _observation: &DenseArray, rng: &mut dyn rand::RngCore) -> Result<(Action, f64)> {
        let a = rng.random_range(0..self.n_actions);
        Ok((Action::Discrete(a), -(self.n_actions as f64).ln()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::make_env;
    use proptest::prelude::*;

    #[test]
    fn delayed_returns_gamma_one() {
        assert_eq!(compute_returns(&[0.0, 0.0, -84.0], &[(0, 3)], 1.0), vec![-84.0; 3]);
    }

    #[test]
    fn delayed_returns_discounted() {
        let z = compute_returns(&[0.0, 0.0, -84.0], &[(0, 3)], 0.99);
        let expect = [-82.3284, -83.16, -84.0];
        for (a, b) in z.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn single_step_return() {
        assert_eq!(compute_returns(&[2.5], &[(0, 1)], 0.9), vec![2.5]);
    }

    #[test]
    fn episode_budget_on_grid() {
        let mut env = make_env("gridworld-v1+delayed").unwrap();
        let batch = collect(env.as_mut(), &UniformPolicy { n_actions: 4 }, Budget::Episodes(50), 7, 0.99).unwrap();
        assert_eq!(batch.n_trajectories(), 50);
        for (i, &(s, e)) in batch.bounds.iter().enumerate() {
            assert!(e - s <= 50);
            assert!(batch.rewards[s..e - 1].iter().all(|&r| r == 0.0));
            assert_eq!(batch.rewards[e - 1], batch.episode_returns[i]);
            assert!(batch.dones[e - 1]);
        }
    }

    #[test]
    fn step_budget_completes_last_episode() {
        let mut env = make_env("chain").unwrap();
        let batch = collect(env.as_mut(), &UniformPolicy { n_actions: 2 }, Budget::Steps(10), 1, 0.9).unwrap();
        assert_eq!(batch.len(), 12);
        assert_eq!(batch.n_trajectories(), 3);
    }

    #[test]
    fn collection_is_deterministic() {
        let mut env = make_env("chain").unwrap();
        let p = UniformPolicy { n_actions: 2 };
        let a = collect(env.as_mut(), &p, Budget::Episodes(20), 3, 0.9).unwrap();
        let b = collect(env.as_mut(), &p, Budget::Episodes(20), 3, 0.9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn concat_preserves_trajectory_returns() {
        let mut env = make_env("gridworld-v1").unwrap();
        let p = UniformPolicy { n_actions: 4 };
        let a = collect(env.as_mut(), &p, Budget::Episodes(3), 1, 0.99).unwrap();
        let b = collect(env.as_mut(), &p, Budget::Episodes(4), 100, 0.99).unwrap();
        let mut c = RolloutBatch::concat(&[&a, &b]).unwrap();
        assert_eq!(c.n_trajectories(), 7);
        assert_eq!(c.trajectory_returns[3..], b.trajectory_returns[..]);
        let before = c.trajectory_returns.clone();
        c.compute_returns(0.99);
        assert_eq!(c.trajectory_returns, before);
    }

    proptest! {
        #[test]
        fn recursion_identity(rewards in prop::collection::vec(-50.0f64..50.0, 1..40), gamma in 0.0f64..=1.0) {
            let bounds = [(0, rewards.len())];
            let z = compute_returns(&rewards, &bounds, gamma);
            for t in 0..rewards.len() - 1 {
                prop_assert_eq!(z[t], rewards[t] + gamma * z[t + 1]);
            }
            prop_assert_eq!(z[rewards.len() - 1], rewards[rewards.len() - 1]);
            let z0 = compute_returns(&rewards, &bounds, 0.0);
            prop_assert_eq!(z0, rewards);
        }
    }
}
