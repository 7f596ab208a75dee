//! Actor(-critic) network, GAE and the clipped-surrogate update.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::heads::{eval_head, head_backward};
use crate::nn::{AdamState, CategoricalHead, DenseArray, GaussianHead, MlpModel, OutputTransform};
use crate::rollout::{Policy, RolloutBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    Gae,
    Hca,
    HcaClip,
    Hdice,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Gae => "gae",
            Estimator::Hca => "hca",
            Estimator::HcaClip => "hca_clip",
            Estimator::Hdice => "hdice",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub values: Vec<f64>,
    pub estimator: Estimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub lr: f64,
    pub clip_eps: f64,
    pub ppo_epochs: usize,
    pub entropy_coef: f64,
    /// Present only when the policy carries a value head.
    pub value_loss_coef: Option<f64>,
    /// Present only for GAE.
    pub gae_lambda: Option<f64>,
    pub gamma: f64,
    pub minibatch_size: usize,
    pub max_grad_norm: Option<f64>,
    pub normalize_advantages: bool,
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::Config(format!("clip_eps {} outside (0, 1)", self.clip_eps)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if let Some(l) = self.gae_lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::Config(format!("gae_lambda {l} outside [0, 1]")));
            }
        }
        if self.ppo_epochs == 0 || self.minibatch_size == 0 {
            return Err(Error::Config("ppo_epochs and minibatch_size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        Ok(())
    }
}

/// Shared ReLU trunk with a linear actor head and, for vanilla PPO only, a
/// linear value head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    trunk: MlpModel,
    actor: MlpModel,
    log_std: Option<Vec<f64>>,
    value: Option<MlpModel>,
    action_space: ActionSpace,
}

impl PolicyNet {
    pub fn new(obs_dim: usize, action_space: ActionSpace, hidden: &[usize], with_value: bool, seed: u64) -> Result<Self> {
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(hidden);
        let width = *dims.last().expect("non-empty");
        if hidden.is_empty() {
            return Err(Error::Config("policy needs at least one hidden layer".into()));
        }
        let trunk = MlpModel::new(&dims, OutputTransform::Relu, seed)?;
        let actor = MlpModel::new(&[width, action_space.encoded_dim()], OutputTransform::Identity, seed.wrapping_add(1))?;
        let value = if with_value {
            Some(MlpModel::new(&[width, 1], OutputTransform::Identity, seed.wrapping_add(2))?)
        } else {
            None
        };
        let log_std = match action_space {
            ActionSpace::Continuous { dim, .. } => Some(vec![0.0; dim]),
            ActionSpace::Discrete(_) => None,
        };
        Ok(Self {
            trunk,
            actor,
            log_std,
            value,
            action_space,
        })
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.action_space
    }

    pub fn obs_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn has_value_head(&self) -> bool {
        self.value.is_some()
    }

    pub fn log_std(&self) -> Option<&[f64]> {
        self.log_std.as_deref()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p = self.trunk.params();
        p.extend(self.actor.params());
        if let Some(ls) = &self.log_std {
            p.push(ls);
        }
        if let Some(v) = &self.value {
            p.extend(v.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.trunk.params_mut();
        p.extend(self.actor.params_mut());
        if let Some(ls) = &mut self.log_std {
            p.push(ls);
        }
        if let Some(v) = &mut self.value {
            p.extend(v.params_mut());
        }
        p
    }

    /// Actor head outputs (logits or Gaussian means) for a batch.
    pub fn head_outputs(&self, obs: &DenseArray) -> Result<DenseArray> {
        self.actor.forward(&self.trunk.forward(obs)?)
    }

    pub fn values(&self, obs: &DenseArray) -> Result<Vec<f64>> {
        let v = self.value.as_ref().ok_or_else(|| Error::Contract("policy has no value head".into()))?;
        Ok(v.forward(&self.trunk.forward(obs)?)?.into_data())
    }

    /// Action probabilities at each row (discrete policies only).
    pub fn probs(&self, obs: &DenseArray) -> Result<DenseArray> {
        if !self.action_space.is_discrete() {
            return Err(Error::Contract("probs on a continuous policy".into()));
        }
        let out = self.head_outputs(obs)?;
        let mut p = DenseArray::zeros(out.rows(), out.cols());
        for r in 0..out.rows() {
            p.row_mut(r).copy_from_slice(&CategoricalHead::from_logits(out.row(r))?.probs());
        }
        Ok(p)
    }

    pub fn log_probs(&self, obs: &DenseArray, actions: &DenseArray) -> Result<Vec<f64>> {
        let out = self.head_outputs(obs)?;
        Ok(eval_head(&self.action_space, &out, self.log_std.as_deref(), actions)?.log_probs)
    }
}

impl Policy for PolicyNet {
    fn act(&self, observation: &DenseArray, rng: &mut dyn rand::RngCore) -> Result<(Action, f64)> {
        let out = self.head_outputs(observation)?;
        match self.action_space {
            ActionSpace::Discrete(_) => {
                let head = CategoricalHead::from_logits(out.row(0))?;
                let a = head.sample(rng);
                Ok((Action::Discrete(a), head.log_prob(a)?))
            }
            ActionSpace::Continuous { .. } => {
                let head = GaussianHead::new(out.row(0), self.log_std.as_deref().expect("continuous"))?;
                let a = head.sample(rng);
                let lp = head.log_prob(&a)?;
                Ok((Action::Continuous(a), lp))
            }
        }
    }
}

/// `δ_t = r_t + γ V(s_{t+1})(1 − done_t) − V(s_t)`, `Â_t = δ_t + γλ(1 − done_t) Â_{t+1}`.
/// Returns `(advantages, value targets Â + V)`.
pub fn gae_from_values(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (next_v, carry) = if dones[t] { (0.0, 0.0) } else { (values[t + 1], 1.0) };
        let delta = rewards[t] + gamma * next_v * carry - values[t];
        next_adv = delta + gamma * lambda * carry * next_adv;
        adv[t] = next_adv;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

pub fn gae_advantages(batch: &RolloutBatch, policy: &PolicyNet, gamma: f64, lambda: f64) -> Result<(Advantages, Vec<f64>)> {
    let values = policy.values(&batch.observations)?;
    let (adv, targets) = gae_from_values(&batch.rewards, &values, &batch.dones, gamma, lambda);
    Ok((Advantages { values: adv, estimator: Estimator::Gae }, targets))
}

/// Standardizes in place with the population std (floored at 1e-8).
pub fn normalize_advantages(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    values.iter_mut().for_each(|v| *v = (*v - mean) / std);
}

/// A minibatch as seen by the loss.
#[derive(Debug, Clone)]
pub struct PpoMinibatch {
    pub observations: DenseArray,
    pub actions: DenseArray,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub value_targets: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoLoss {
    pub total: f64,
    /// `−mean(min(ρÂ, clip(ρ)Â))`
    pub policy: f64,
    pub value: Option<f64>,
    pub entropy: f64,
    pub clip_fraction: f64,
}

/// Loss and gradients in [`PolicyNet::params_mut`] order.
pub fn ppo_loss_and_grad(policy: &PolicyNet, mb: &PpoMinibatch, config: &PpoConfig) -> Result<(PpoLoss, Vec<Vec<f64>>)> {
    let n = mb.observations.rows();
    if n == 0 || mb.actions.rows() != n || mb.old_log_probs.len() != n || mb.advantages.len() != n {
        return Err(Error::dim("ppo minibatch", n, mb.advantages.len()));
    }
    match (&policy.value, &mb.value_targets) {
        (Some(_), Some(t)) if t.len() == n => {}
        (None, None) => {}
        _ => return Err(Error::Contract("value targets must accompany a value head and nothing else".into())),
    }
    let nf = n as f64;
    let trunk_cache = policy.trunk.forward_cached(&mb.observations)?;
    let actor_cache = policy.actor.forward_cached(trunk_cache.output())?;
    let head = eval_head(&policy.action_space, actor_cache.output(), policy.log_std.as_deref(), &mb.actions)?;

    let (lo, hi) = (1.0 - config.clip_eps, 1.0 + config.clip_eps);
    let mut surrogate = 0.0;
    let mut clipped = 0usize;
    let mut w_logp = vec![0.0; n];
    for i in 0..n {
        let rho = (head.log_probs[i] - mb.old_log_probs[i]).exp();
        let a = mb.advantages[i];
        let unclipped = rho * a;
        let clipped_term = rho.clamp(lo, hi) * a;
        surrogate += unclipped.min(clipped_term);
        let active = (a >= 0.0 && rho < hi) || (a < 0.0 && rho > lo);
        if active {
            // d(−ρÂ/n)/d log π = −ρÂ/n
            w_logp[i] = -rho * a / nf;
        } else {
            clipped += 1;
        }
    }
    let entropy = head.entropies.iter().sum::<f64>() / nf;
    let policy_loss = -surrogate / nf;
    let w_ent = vec![-config.entropy_coef / nf; n];
    let (d_head, d_ls) = head_backward(&policy.action_space, actor_cache.output(), policy.log_std.as_deref(), &mb.actions, &w_logp, &w_ent)?;
    let actor_grads = policy.actor.backward(&actor_cache, &d_head)?;
    let mut d_trunk_out = actor_grads.input.clone();

    let mut value_loss = None;
    let mut value_grads = None;
    if let (Some(vnet), Some(targets)) = (&policy.value, &mb.value_targets) {
        let coef = config.value_loss_coef.unwrap_or(0.0);
        let vcache = vnet.forward_cached(trunk_cache.output())?;
        let v = vcache.output().data();
        let mut mse = 0.0;
        let mut dv = vec![0.0; n];
        for i in 0..n {
            let diff = v[i] - targets[i];
            mse += diff * diff;
            dv[i] = 2.0 * coef * diff / nf;
        }
        value_loss = Some(mse / nf);
        let g = vnet.backward(&vcache, &DenseArray::column_vector(&dv)?)?;
        for (d, gi) in d_trunk_out.data_mut().iter_mut().zip(g.input.data()) {
            *d += gi;
        }
        value_grads = Some(g);
    }
    let trunk_grads = policy.trunk.backward(&trunk_cache, &d_trunk_out)?;

    let total = policy_loss - config.entropy_coef * entropy + config.value_loss_coef.unwrap_or(0.0) * value_loss.unwrap_or(0.0);
    if !total.is_finite() {
        return Err(Error::Numeric(format!("ppo loss is {total}")));
    }
    let mut grads = trunk_grads.into_flat();
    grads.extend(actor_grads.into_flat());
    if policy.log_std.is_some() {
        grads.push(d_ls);
    }
    if let Some(g) = value_grads {
        grads.extend(g.into_flat());
    }
    Ok((
        PpoLoss {
            total,
            policy: policy_loss,
            value: value_loss,
            entropy,
            clip_fraction: clipped as f64 / nf,
        },
        grads,
    ))
}

/// Epoch-averaged statistics of the last PPO epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: Option<f64>,
    pub entropy: f64,
    pub clip_fraction: f64,
}

pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut PolicyNet,
    optimizer: &mut AdamState,
    batch: &RolloutBatch,
    advantages: &Advantages,
    value_targets: Option<&[f64]>,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<PpoStats> {
    let n = batch.len();
    if advantages.values.len() != n {
        return Err(Error::dim("ppo_update advantages", n, advantages.values.len()));
    }
    if advantages.estimator != Estimator::Gae && policy.has_value_head() {
        return Err(Error::Contract(format!("{} advantages with a value head present", advantages.estimator.name())));
    }
    let mut adv = advantages.values.clone();
    if config.normalize_advantages {
        normalize_advantages(&mut adv);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = PpoStats::default();
    for _ in 0..config.ppo_epochs {
        order.shuffle(rng);
        let mut acc = PpoStats::default();
        let mut acc_v = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(config.minibatch_size) {
            let mb = PpoMinibatch {
                observations: batch.observations.select_rows(idx),
                actions: batch.actions.select_rows(idx),
                old_log_probs: idx.iter().map(|&i| batch.log_probs[i]).collect(),
                advantages: idx.iter().map(|&i| adv[i]).collect(),
                value_targets: value_targets.map(|t| idx.iter().map(|&i| t[i]).collect()),
            };
            let (loss, grads) = ppo_loss_and_grad(policy, &mb, config)?;
            let grad_refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
            optimizer.step(&mut policy.params_mut(), &grad_refs, config.max_grad_norm)?;
            acc.policy_loss += loss.policy;
            acc.entropy += loss.entropy;
            acc.clip_fraction += loss.clip_fraction;
            acc_v += loss.value.unwrap_or(0.0);
            batches += 1;
        }
        let b = batches as f64;
        stats = PpoStats {
            policy_loss: acc.policy_loss / b,
            value_loss: policy.has_value_head().then_some(acc_v / b),
            entropy: acc.entropy / b,
            clip_fraction: acc.clip_fraction / b,
        };
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::AdamConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config() -> PpoConfig {
        PpoConfig {
            lr: 3e-4,
            clip_eps: 0.2,
            ppo_epochs: 1,
            entropy_coef: 0.1,
            value_loss_coef: Some(1e-4),
            gae_lambda: Some(0.95),
            gamma: 0.99,
            minibatch_size: 256,
            max_grad_norm: None,
            normalize_advantages: false,
        }
    }

    #[test]
    fn gae_lambda_one_is_monte_carlo() {
        let r = [0.0, 0.0, -84.0, 1.0, 2.0];
        let dones = [false, false, true, false, true];
        let (adv, _) = gae_from_values(&r, &[0.0; 5], &dones, 0.99, 1.0);
        let z = crate::rollout::compute_returns(&r, &[(0, 3), (3, 5)], 0.99);
        for (a, b) in adv.iter().zip(&z) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gae_lambda_zero_is_reward() {
        let r = [0.5, -1.0, 3.0];
        let (adv, _) = gae_from_values(&r, &[0.0; 3], &[false, false, true], 0.9, 0.0);
        assert_eq!(adv, r.to_vec());
    }

    #[test]
    fn gae_single_td_error() {
        let (adv, targets) = gae_from_values(&[0.0, 0.0], &[1.0, 2.0], &[false, true], 1.0, 0.0);
        assert_eq!(adv[0], 1.0);
        assert_eq!(targets[0], 2.0);
    }

    #[test]
    fn normalization_moments() {
        let mut a = vec![1.0, 5.0, -2.0, 8.0];
        normalize_advantages(&mut a);
        let m = a.iter().sum::<f64>() / 4.0;
        let v = a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-9);
    }

    fn toy_minibatch(policy: &PolicyNet, value: bool) -> PpoMinibatch {
        let obs = DenseArray::from_rows(&[[0.1, 0.5], [0.9, -0.3], [-0.4, 0.2]]).unwrap();
        let actions = DenseArray::column_vector(&[0.0, 2.0, 1.0]).unwrap();
        let mut old = policy.log_probs(&obs, &actions).unwrap();
        old[1] += 0.1;
        PpoMinibatch {
            observations: obs,
            actions,
            old_log_probs: old,
            advantages: vec![1.5, -0.7, 0.3],
            value_targets: value.then(|| vec![1.0, -2.0, 0.5]),
        }
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let policy = PolicyNet::new(2, ActionSpace::Discrete(3), &[8, 8], true, 4).unwrap();
        let mut cfg = config();
        cfg.value_loss_coef = Some(0.5);
        let mb = toy_minibatch(&policy, true);
        let (_, grads) = ppo_loss_and_grad(&policy, &mb, &cfg).unwrap();
        let flat: Vec<f64> = grads.concat();
        let eps = 1e-5;
        let mut p = policy.clone();
        let mut k = 0;
        let n_tensors = p.params_mut().len();
        for t in 0..n_tensors {
            let len = p.params_mut()[t].len();
            for j in 0..len {
                let orig = p.params_mut()[t][j];
                p.params_mut()[t][j] = orig + eps;
                let lp = ppo_loss_and_grad(&p, &mb, &cfg).unwrap().0.total;
                p.params_mut()[t][j] = orig - eps;
                let lm = ppo_loss_and_grad(&p, &mb, &cfg).unwrap().0.total;
                p.params_mut()[t][j] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                let an = flat[k];
                let scale = fd.abs().max(an.abs());
                if scale > 1e-6 {
                    assert!((fd - an).abs() / scale < 1e-4, "param {t}/{j}: fd {fd} vs {an}");
                }
                k += 1;
            }
        }
    }

    #[test]
    fn zero_advantage_zero_entropy_leaves_policy() {
        let mut policy = PolicyNet::new(2, ActionSpace::Discrete(3), &[8], false, 1).unwrap();
        let mut cfg = config();
        cfg.entropy_coef = 0.0;
        cfg.value_loss_coef = None;
        let mut mb = toy_minibatch(&policy, false);
        mb.advantages = vec![0.0; 3];
        let (_, grads) = ppo_loss_and_grad(&policy, &mb, &cfg).unwrap();
        assert!(grads.iter().flatten().all(|&g| g == 0.0));
        let before = policy.clone();
        let mut opt = AdamState::for_params(AdamConfig::default(), &policy.params_mut());
        let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        opt.step(&mut policy.params_mut(), &refs, None).unwrap();
        assert_eq!(before, policy);
    }

    #[test]
    fn first_pass_is_vanilla_policy_gradient() {
        // at ρ = 1 the surrogate gradient is −mean(Â ∇log π)
        let policy = PolicyNet::new(2, ActionSpace::Discrete(3), &[8], false, 2).unwrap();
        let mut cfg = config();
        cfg.entropy_coef = 0.0;
        cfg.value_loss_coef = None;
        let mut mb = toy_minibatch(&policy, false);
        mb.old_log_probs = policy.log_probs(&mb.observations, &mb.actions).unwrap();
        let (loss, grads) = ppo_loss_and_grad(&policy, &mb, &cfg).unwrap();
        assert_eq!(loss.clip_fraction, 0.0);
        let out = policy.head_outputs(&mb.observations).unwrap();
        let w: Vec<f64> = mb.advantages.iter().map(|a| -a / 3.0).collect();
        let (d, _) = head_backward(policy.action_space(), &out, None, &mb.actions, &w, &[0.0; 3]).unwrap();
        let d_actor_bias: Vec<f64> = (0..3).map(|j| (0..3).map(|r| d.get(r, j)).sum()).collect();
        let got = &grads[grads.len() - 1];
        for j in 0..3 {
            assert!((got[j] - d_actor_bias[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn clipping_inactive_equals_unclipped() {
        let policy = PolicyNet::new(2, ActionSpace::Discrete(3), &[8], false, 3).unwrap();
        let mut cfg = config();
        cfg.value_loss_coef = None;
        let mut mb = toy_minibatch(&policy, false);
        mb.old_log_probs = policy.log_probs(&mb.observations, &mb.actions).unwrap();
        mb.old_log_probs[0] += 0.05;
        let (loss, _) = ppo_loss_and_grad(&policy, &mb, &cfg).unwrap();
        let lp = policy.log_probs(&mb.observations, &mb.actions).unwrap();
        let unclipped: f64 = (0..3).map(|i| (lp[i] - mb.old_log_probs[i]).exp() * mb.advantages[i]).sum::<f64>() / 3.0;
        assert_eq!(loss.clip_fraction, 0.0);
        assert!((loss.policy + unclipped).abs() < 1e-15);
    }

    #[test]
    fn normalization_keeps_gradient_direction() {
        // one state, two actions, positive advantage on action 0, negative on 1
        let policy = PolicyNet::new(1, ActionSpace::Discrete(2), &[4], false, 9).unwrap();
        let mut cfg = config();
        cfg.entropy_coef = 0.0;
        cfg.value_loss_coef = None;
        let obs = DenseArray::from_rows(&[[1.0], [1.0]]).unwrap();
        let actions = DenseArray::column_vector(&[0.0, 1.0]).unwrap();
        let old = policy.log_probs(&obs, &actions).unwrap();
        for adv in [vec![5.0, -1.0], vec![1.0, -1.0]] {
            let mb = PpoMinibatch {
                observations: obs.clone(),
                actions: actions.clone(),
                old_log_probs: old.clone(),
                advantages: adv,
                value_targets: None,
            };
            let (_, grads) = ppo_loss_and_grad(&policy, &mb, &cfg).unwrap();
            let bias = &grads[grads.len() - 1];
            // descending the loss raises logit 0 relative to logit 1
            assert!(bias[0] < bias[1]);
        }
    }

    #[test]
    fn value_head_only_with_gae() {
        let mut policy = PolicyNet::new(2, ActionSpace::Discrete(3), &[8], true, 5).unwrap();
        let mut opt = AdamState::for_params(AdamConfig::default(), &policy.params_mut());
        let obs = DenseArray::zeros(3, 2);
        let fake = RolloutBatch::from_trajectories(
            &[crate::rollout::Trajectory {
                observations: (0..3).map(|r| obs.row(r).to_vec()).collect(),
                actions: vec![vec![0.0]; 3],
                log_probs: vec![-1.0; 3],
                rewards: vec![0.0; 3],
                terminated: true,
                truncated: false,
            }],
            ActionSpace::Discrete(3),
            0.99,
        )
        .unwrap();
        let adv = Advantages { values: vec![0.0; 3], estimator: Estimator::Hdice };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(ppo_update(&mut policy, &mut opt, &fake, &adv, None, &config(), &mut rng), Err(Error::Contract(_))));
    }
}
