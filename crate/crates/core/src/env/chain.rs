//! Small finite-horizon tabular MDPs whose trajectory distribution can be
//! enumerated exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Action, ActionSpace, EnvContract, Environment, StepResult};
use crate::error::{Error, Result};
use crate::nn::DenseArray;

pub const MAX_ENUMERATED_PATHS: usize = 100_000;
pub const MAX_CHAIN_STATES: usize = 6;
pub const MAX_CHAIN_ACTIONS: usize = 3;
pub const MAX_CHAIN_HORIZON: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainMdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transitions[s][a][s']`
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a]`
    pub rewards: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub horizon: usize,
    pub gamma: f64,
}

impl ChainMdpSpec {
    /// Three states, two actions: action 1 moves right along the chain, action 0
    /// stays put; the last state pays off.
    pub fn demo() -> Self {
        let n = 3;
        let mut transitions = vec![vec![vec![0.0; n]; 2]; n];
        for s in 0..n {
            transitions[s][0][s] = 1.0;
            let right = (s + 1).min(n - 1);
            transitions[s][1][right] = 0.8;
            transitions[s][1][s] += 0.2;
        }
        let spec = Self {
            n_states: n,
            n_actions: 2,
            transitions,
            rewards: vec![vec![0.0, -1.0], vec![0.0, -1.0], vec![2.0, 1.0]],
            initial: vec![1.0, 0.0, 0.0],
            horizon: 4,
            gamma: 0.9,
        };
        spec.validate().expect("demo chain is valid");
        spec
    }

    /// Random instance with integer rewards in `[-3, 3]`. About a third of the
    /// transition entries are zeroed to keep the path count small.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize, horizon: usize, gamma: f64) -> Result<Self> {
        let mut transitions = vec![vec![vec![0.0; n_states]; n_actions]; n_states];
        for row in transitions.iter_mut().flatten() {
            loop {
                for p in row.iter_mut() {
                    *p = if rng.random::<f64>() < 0.35 { 0.0 } else { rng.random_range(0.05..1.0) };
                }
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    row.iter_mut().for_each(|p| *p /= total);
                    break;
                }
            }
        }
        let rewards = (0..n_states)
            .map(|_| (0..n_actions).map(|_| rng.random_range(-3i32..=3) as f64).collect())
            .collect();
        let mut initial: Vec<f64> = (0..n_states).map(|_| rng.random_range(0.0..1.0)).collect();
        let total: f64 = initial.iter().sum();
        initial.iter_mut().for_each(|p| *p /= total);
        let spec = Self {
            n_states,
            n_actions,
            transitions,
            rewards,
            initial,
            horizon,
            gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Random instance where every action can still reach every return: all
    /// transition entries are positive and rewards depend on the state only.
    pub fn random_covering<R: Rng + ?Sized>(
        rng: &mut R,
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        gamma: f64,
    ) -> Result<Self> {
        let mut spec = Self::random(rng, n_states, n_actions, horizon, gamma)?;
        for row in spec.transitions.iter_mut().flatten() {
            row.iter_mut().for_each(|p| *p = rng.random_range(0.05..1.0));
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= total);
        }
        for row in spec.rewards.iter_mut() {
            let r = row[0];
            row.iter_mut().for_each(|v| *v = r);
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || ns > MAX_CHAIN_STATES || na == 0 || na > MAX_CHAIN_ACTIONS {
            return Err(Error::Contract(format!(
                "chain needs 1..={MAX_CHAIN_STATES} states and 1..={MAX_CHAIN_ACTIONS} actions, got {ns}x{na}"
            )));
        }
        if self.horizon == 0 || self.horizon > MAX_CHAIN_HORIZON {
            return Err(Error::Contract(format!("chain horizon must be in 1..={MAX_CHAIN_HORIZON}")));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Contract(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.transitions.len() != ns || self.rewards.len() != ns || self.initial.len() != ns {
            return Err(Error::dim("chain tables", ns, self.transitions.len()));
        }
        check_distribution(&self.initial, "initial distribution")?;
        for s in 0..ns {
            if self.transitions[s].len() != na || self.rewards[s].len() != na {
                return Err(Error::dim("chain action tables", na, self.transitions[s].len()));
            }
            for a in 0..na {
                if self.transitions[s][a].len() != ns {
                    return Err(Error::dim("chain transition row", ns, self.transitions[s][a].len()));
                }
                check_distribution(&self.transitions[s][a], "transition row")?;
                if !self.rewards[s][a].is_finite() {
                    return Err(Error::Numeric("non-finite chain reward".into()));
                }
            }
        }
        Ok(())
    }

    pub fn validate_policy(&self, policy: &[Vec<f64>]) -> Result<()> {
        if policy.len() != self.n_states {
            return Err(Error::dim("policy table rows", self.n_states, policy.len()));
        }
        for row in policy {
            if row.len() != self.n_actions {
                return Err(Error::dim("policy table row", self.n_actions, row.len()));
            }
            check_distribution(row, "policy row")?;
        }
        Ok(())
    }

    /// Loose bounds on the discounted return of any path.
    pub fn return_bounds(&self) -> (f64, f64) {
        let flat = self.rewards.iter().flatten();
        let lo = flat.clone().copied().fold(f64::INFINITY, f64::min);
        let hi = flat.copied().fold(f64::NEG_INFINITY, f64::max);
        let weight: f64 = (0..self.horizon).map(|t| self.gamma.powi(t as i32)).sum();
        let (lo, hi) = (lo.min(0.0) * weight, hi.max(0.0) * weight);
        if lo < hi {
            (lo, hi)
        } else {
            (lo - 1.0, hi + 1.0)
        }
    }
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::Contract(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::Contract(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumeratedPath {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub probability: f64,
    pub discounted_return: f64,
}

impl EnumeratedPath {
    /// Discounted return-to-go at every step (`z_t = r_t + γ z_{t+1}`).
    pub fn returns_to_go(&self, gamma: f64) -> Vec<f64> {
        let mut z = vec![0.0; self.rewards.len()];
        let mut acc = 0.0;
        for t in (0..self.rewards.len()).rev() {
            acc = self.rewards[t] + gamma * acc;
            z[t] = acc;
        }
        z
    }
}

/// Every horizon-length trajectory under a stationary tabular policy, with its
/// exact probability. Zero-probability branches are pruned.
pub fn chain_enumerate(spec: &ChainMdpSpec, policy: &[Vec<f64>]) -> Result<Vec<EnumeratedPath>> {
    spec.validate()?;
    spec.validate_policy(policy)?;
    let mut out = Vec::new();
    let mut states = Vec::with_capacity(spec.horizon);
    let mut actions = Vec::with_capacity(spec.horizon);
    let mut rewards = Vec::with_capacity(spec.horizon);
    for s0 in 0..spec.n_states {
        let p0 = spec.initial[s0];
        if p0 > 0.0 {
            expand(spec, policy, s0, p0, &mut states, &mut actions, &mut rewards, &mut out)?;
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn expand(
    spec: &ChainMdpSpec,
    policy: &[Vec<f64>],
    s: usize,
    prob: f64,
    states: &mut Vec<usize>,
    actions: &mut Vec<usize>,
    rewards: &mut Vec<f64>,
    out: &mut Vec<EnumeratedPath>,
) -> Result<()> {
    states.push(s);
    for a in 0..spec.n_actions {
        let pa = policy[s][a];
        if pa == 0.0 {
            continue;
        }
        actions.push(a);
        rewards.push(spec.rewards[s][a]);
        if states.len() == spec.horizon {
            if out.len() >= MAX_ENUMERATED_PATHS {
                return Err(Error::Size(format!("chain enumeration exceeds {MAX_ENUMERATED_PATHS} paths")));
            }
            let mut path = EnumeratedPath {
                states: states.clone(),
                actions: actions.clone(),
                rewards: rewards.clone(),
                probability: prob * pa,
                discounted_return: 0.0,
            };
            path.discounted_return = path.returns_to_go(spec.gamma)[0];
            out.push(path);
        } else {
            for s2 in 0..spec.n_states {
                let pt = spec.transitions[s][a][s2];
                if pt > 0.0 {
                    expand(spec, policy, s2, prob * pa * pt, states, actions, rewards, out)?;
                }
            }
        }
        actions.pop();
        rewards.pop();
    }
    states.pop();
    Ok(())
}

/// The chain as a sampled environment with one-hot observations.
#[derive(Debug, Clone)]
pub struct ChainEnv {
    spec: ChainMdpSpec,
    contract: EnvContract,
    state: usize,
    t: usize,
    rng: ChaCha8Rng,
}

impl ChainEnv {
    pub fn new(spec: ChainMdpSpec) -> Result<Self> {
        spec.validate()?;
        let contract = EnvContract {
            observation_dim: spec.n_states,
            action_space: ActionSpace::Discrete(spec.n_actions),
            max_steps: spec.horizon,
            declared_return_range: Some(spec.return_bounds()),
        };
        Ok(Self {
            spec,
            contract,
            state: 0,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn spec(&self) -> &ChainMdpSpec {
        &self.spec
    }

    fn observe(&self) -> DenseArray {
        let mut v = vec![0.0; self.spec.n_states];
        v[self.state] = 1.0;
        DenseArray::row_vector(&v).expect("finite")
    }

    fn draw(&mut self, p: &[f64]) -> usize {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return i;
            }
        }
        p.iter().rposition(|&pi| pi > 0.0).unwrap_or(0)
    }
}

impl Environment for ChainEnv {
    fn contract(&self) -> &EnvContract {
        &self.contract
    }

    fn reset(&mut self, seed: u64) -> DenseArray {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let initial = self.spec.initial.clone();
        self.state = self.draw(&initial);
        self.t = 0;
        self.observe()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.t >= self.spec.horizon {
            return Err(Error::Contract("step called on a finished chain episode".into()));
        }
        let a = match action {
            Action::Discrete(a) if *a < self.spec.n_actions => *a,
            _ => return Err(Error::Contract(format!("invalid chain action {action:?}"))),
        };
        let reward = self.spec.rewards[self.state][a];
        let row = self.spec.transitions[self.state][a].clone();
        self.state = self.draw(&row);
        self.t += 1;
        Ok(StepResult {
            observation: self.observe(),
            reward,
            terminated: false,
            truncated: self.t >= self.spec.horizon,
        })
    }

    fn clone_box(&self) -> Box<dyn Environment> {
        Box::new(self.clone())
    }
}
