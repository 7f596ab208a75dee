//! Return-conditioned hindsight policy `h(a | s, z)` and the direct-ratio
//! advantage used by PPO-HCA and PPO-HCA-Clip.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, ActionSpace};
use crate::error::{Error, Result};
use crate::heads::{eval_head, head_backward};
use crate::nn::{AdamConfig, AdamState, CategoricalHead, DenseArray, GaussianHead, MlpModel, OutputTransform, RunningNormalizer};
use crate::ppo::{Advantages, Estimator, PolicyNet};
use crate::rollout::RolloutBatch;

/// Densities below this saturate the direct ratio.
pub const MIN_HINDSIGHT_DENSITY: f64 = 1e-12;
pub const DEFAULT_RATIO_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConditionOn {
    /// Discounted return-to-go from the current step.
    ReturnToGo,
    /// The whole trajectory's return `Z(τ)` at every step.
    TrajectoryReturn,
}

impl ConditionOn {
    pub fn name(self) -> &'static str {
        match self {
            ConditionOn::ReturnToGo => "return_to_go",
            ConditionOn::TrajectoryReturn => "trajectory_return",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "return_to_go" => Ok(ConditionOn::ReturnToGo),
            "trajectory_return" => Ok(ConditionOn::TrajectoryReturn),
            other => Err(Error::Config(format!("unknown condition_on '{other}'"))),
        }
    }

    /// The per-step conditioning returns for a batch.
    pub fn returns(self, batch: &RolloutBatch) -> Vec<f64> {
        match self {
            ConditionOn::ReturnToGo => batch.returns_to_go.clone(),
            ConditionOn::TrajectoryReturn => batch.trajectory_return_per_step(),
        }
    }
}

/// Epochs, learning rate, minibatch size and clipping for one auxiliary model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub max_grad_norm: Option<f64>,
}

impl Default for AuxTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 3e-4,
            batch_size: 256,
            max_grad_norm: Some(10.0),
        }
    }
}

/// Runs `epochs` passes of shuffled minibatches, calling `step` on each index
/// chunk; returns the mean loss of the final epoch.
pub(crate) fn minibatch_epochs<R: Rng + ?Sized>(
    n: usize,
    cfg: &AuxTrainConfig,
    rng: &mut R,
    mut step: impl FnMut(&[usize], &mut R) -> Result<f64>,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Contract("training on an empty batch".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size.max(1)) {
            total += step(idx, rng)? * idx.len() as f64;
        }
        epoch_losses.push(total / n as f64);
    }
    Ok(epoch_losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HindsightModel {
    net: MlpModel,
    log_std: Option<Vec<f64>>,
    z_normalizer: RunningNormalizer,
    action_space: ActionSpace,
}

impl HindsightModel {
    pub fn new(obs_dim: usize, action_space: ActionSpace, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut dims = vec![obs_dim + 1];
        dims.extend_from_slice(hidden);
        dims.push(action_space.encoded_dim());
        let log_std = match action_space {
            ActionSpace::Continuous { dim, .. } => Some(vec![0.0; dim]),
            ActionSpace::Discrete(_) => None,
        };
        Ok(Self {
            net: MlpModel::new(&dims, OutputTransform::Identity, seed)?,
            log_std,
            z_normalizer: RunningNormalizer::new(1, true),
            action_space,
        })
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.action_space
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim() - 1
    }

    pub fn z_normalizer(&self) -> &RunningNormalizer {
        &self.z_normalizer
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.net.params_mut();
        if let Some(ls) = &mut self.log_std {
            p.push(ls);
        }
        p
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut p = self.net.params();
        if let Some(ls) = &self.log_std {
            p.push(ls);
        }
        p
    }

    /// Refits the z normalizer from scratch on these returns.
    pub fn fit_normalizer(&mut self, z: &[f64]) -> Result<()> {
        self.z_normalizer = RunningNormalizer::new(1, self.z_normalizer.enabled());
        self.z_normalizer.update_scalars(z)
    }

    fn input(&self, obs: &DenseArray, z: &[f64]) -> Result<DenseArray> {
        if obs.rows() != z.len() {
            return Err(Error::dim("hindsight input rows", obs.rows(), z.len()));
        }
        let zn: Vec<f64> = z.iter().map(|&v| self.z_normalizer.apply_scalar(v)).collect();
        DenseArray::hstack(&[obs, &DenseArray::column_vector(&zn)?])
    }

    pub fn head_outputs(&self, obs: &DenseArray, z: &[f64]) -> Result<DenseArray> {
        self.net.forward(&self.input(obs, z)?)
    }

    pub fn log_probs(&self, obs: &DenseArray, actions: &DenseArray, z: &[f64]) -> Result<Vec<f64>> {
        let out = self.head_outputs(obs, z)?;
        Ok(eval_head(&self.action_space, &out, self.log_std.as_deref(), actions)?.log_probs)
    }

    /// `h(· | s, z)` for each row (discrete only).
    pub fn probs(&self, obs: &DenseArray, z: &[f64]) -> Result<DenseArray> {
        if !self.action_space.is_discrete() {
            return Err(Error::Contract("probs on a continuous hindsight model".into()));
        }
        let out = self.head_outputs(obs, z)?;
        let mut p = DenseArray::zeros(out.rows(), out.cols());
        for r in 0..out.rows() {
            p.row_mut(r).copy_from_slice(&CategoricalHead::from_logits(out.row(r))?.probs());
        }
        Ok(p)
    }

    /// One action per row from `h(· | s_i, z_i)`, in stored-row form.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &DenseArray, z: &[f64], rng: &mut R) -> Result<DenseArray> {
        let out = self.head_outputs(obs, z)?;
        let mut actions = DenseArray::zeros(out.rows(), self.action_space.stored_dim());
        for r in 0..out.rows() {
            let a = match self.action_space {
                ActionSpace::Discrete(_) => Action::Discrete(CategoricalHead::from_logits(out.row(r))?.sample(rng)),
                ActionSpace::Continuous { .. } => {
                    Action::Continuous(GaussianHead::new(out.row(r), self.log_std.as_deref().expect("continuous"))?.sample(rng))
                }
            };
            actions.row_mut(r).copy_from_slice(&a.to_row());
        }
        Ok(actions)
    }

    /// Mean negative log-likelihood and its gradient in `params_mut` order.
    pub fn nll_and_grad(&self, obs: &DenseArray, actions: &DenseArray, z: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
        let n = obs.rows();
        if n == 0 {
            return Err(Error::Contract("hindsight loss on an empty batch".into()));
        }
        let cache = self.net.forward_cached(&self.input(obs, z)?)?;
        let ls = self.log_std.as_deref();
        let eval = eval_head(&self.action_space, cache.output(), ls, actions)?;
        let loss = -eval.log_probs.iter().sum::<f64>() / n as f64;
        let w = vec![-1.0 / n as f64; n];
        let (d_out, d_ls) = head_backward(&self.action_space, cache.output(), ls, actions, &w, &vec![0.0; n])?;
        let mut grads = self.net.backward(&cache, &d_out)?.into_flat();
        if self.log_std.is_some() {
            grads.push(d_ls);
        }
        Ok((loss, grads))
    }
}

/// Supervised fit of `h` on `(s, a, z)` triples. The z normalizer is refitted
/// on `z` first. Returns the mean loss of each epoch.
pub fn train_hindsight<R: Rng + ?Sized>(
    model: &mut HindsightModel,
    obs: &DenseArray,
    actions: &DenseArray,
    z: &[f64],
    cfg: &AuxTrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if obs.rows() == 0 {
        return Err(Error::Contract("train_hindsight on an empty batch".into()));
    }
    model.fit_normalizer(z)?;
    let mut opt = AdamState::for_params(AdamConfig::with_lr(cfg.lr), &model.params_mut());
    minibatch_epochs(obs.rows(), cfg, rng, |idx, _| {
        let zb: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
        let (loss, grads) = model.nll_and_grad(&obs.select_rows(idx), &actions.select_rows(idx), &zb)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("hindsight loss is {loss}")));
        }
        let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        opt.step(&mut model.params_mut(), &refs, cfg.max_grad_norm)?;
        Ok(loss)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioStats {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
    /// Steps whose hindsight density fell below the saturation floor.
    pub saturated: usize,
}

impl RatioStats {
    pub fn of(ratios: &[f64], saturated: usize) -> Self {
        let n = ratios.len().max(1) as f64;
        Self {
            mean: ratios.iter().sum::<f64>() / n,
            max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            saturated,
        }
    }
}

/// `ratio = π / h` from log densities; saturates at `cap` when `h` is below
/// [`MIN_HINDSIGHT_DENSITY`]. The clipped variant confines it to `[0, 1]`.
pub fn direct_ratio(log_pi: f64, log_h: f64, clip: bool, cap: f64) -> (f64, bool) {
    let (mut ratio, saturated) = if log_h.exp() < MIN_HINDSIGHT_DENSITY {
        (cap, true)
    } else {
        ((log_pi - log_h).exp().min(cap), false)
    };
    if clip {
        ratio = ratio.clamp(0.0, 1.0);
    }
    (ratio, saturated)
}

/// `Â = (1 − ratio)·z` with the direct ratio.
pub fn hca_from_log_probs(log_pi: &[f64], log_h: &[f64], z: &[f64], clip: bool, cap: f64) -> (Advantages, Vec<f64>, RatioStats) {
    let mut ratios = Vec::with_capacity(z.len());
    let mut saturated = 0;
    for i in 0..z.len() {
        let (r, sat) = direct_ratio(log_pi[i], log_h[i], clip, cap);
        saturated += sat as usize;
        ratios.push(r);
    }
    let values = ratios.iter().zip(z).map(|(r, z)| (1.0 - r) * z).collect();
    let stats = RatioStats::of(&ratios, saturated);
    let estimator = if clip { Estimator::HcaClip } else { Estimator::Hca };
    (Advantages { values, estimator }, ratios, stats)
}

pub fn hca_advantage(
    policy: &PolicyNet,
    hindsight: &HindsightModel,
    batch: &RolloutBatch,
    condition_on: ConditionOn,
    clip: bool,
) -> Result<(Advantages, RatioStats)> {
    let z = condition_on.returns(batch);
    let log_pi = policy.log_probs(&batch.observations, &batch.actions)?;
    let log_h = hindsight.log_probs(&batch.observations, &batch.actions, &z)?;
    let (adv, _, stats) = hca_from_log_probs(&log_pi, &log_h, &z, clip, DEFAULT_RATIO_CAP);
    Ok((adv, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probe_row_direct_ratios() {
        let (r, _) = direct_ratio(0.002f64.ln(), 0.349f64.ln(), false, DEFAULT_RATIO_CAP);
        assert!((r - 0.005731).abs() < 1e-6);
        let (r, _) = direct_ratio(0.845f64.ln(), 0.210f64.ln(), false, DEFAULT_RATIO_CAP);
        assert!((r - 4.02381).abs() < 1e-5);
        let (r, _) = direct_ratio(0.845f64.ln(), 0.210f64.ln(), true, DEFAULT_RATIO_CAP);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn matched_distributions_zero_advantage() {
        let lp = [-0.3, -1.2, -2.0];
        let (adv, ratios, _) = hca_from_log_probs(&lp, &lp, &[5.0, -3.0, 70.0], false, DEFAULT_RATIO_CAP);
        assert!(ratios.iter().all(|&r| r == 1.0));
        assert!(adv.values.iter().all(|&a| a == 0.0));
    }

    #[test]
    fn tiny_density_saturates() {
        let (adv, ratios, stats) = hca_from_log_probs(&[-0.1], &[-40.0], &[2.0], false, 1e6);
        assert_eq!(ratios[0], 1e6);
        assert_eq!(stats.saturated, 1);
        assert_eq!(adv.values[0], (1.0 - 1e6) * 2.0);
    }

    proptest! {
        #[test]
        fn sign_rule_and_ranges(lp in -8.0f64..0.0, lh in -8.0f64..0.0, z in 0.1f64..100.0) {
            let (adv, ratios, _) = hca_from_log_probs(&[lp], &[lh], &[z], false, DEFAULT_RATIO_CAP);
            prop_assert!(ratios[0] >= 0.0);
            if ratios[0] > 1.0 { prop_assert!(adv.values[0] < 0.0); }
            if ratios[0] < 1.0 { prop_assert!(adv.values[0] > 0.0); }
            let (_, clipped, _) = hca_from_log_probs(&[lp], &[lh], &[z], true, DEFAULT_RATIO_CAP);
            prop_assert!((0.0..=1.0).contains(&clipped[0]));
        }
    }

    fn toy(n: usize, seed: u64, z_determines: bool) -> (DenseArray, DenseArray, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probs = [0.1, 0.2, 0.3, 0.4];
        let head = CategoricalHead::from_probs(&probs).unwrap();
        let mut obs = Vec::new();
        let mut acts = Vec::new();
        let mut z = Vec::new();
        for _ in 0..n {
            let a = head.sample(&mut rng);
            obs.push(vec![0.5, -0.5]);
            acts.push(a as f64);
            z.push(if z_determines { 10.0 * a as f64 + rng.random_range(-1.0..1.0) } else { rng.random_range(-50.0..50.0) });
        }
        (DenseArray::from_rows(&obs).unwrap(), DenseArray::column_vector(&acts).unwrap(), z)
    }

    #[test]
    fn independent_z_recovers_marginal() {
        let (obs, acts, z) = toy(2000, 1, false);
        let empirical: Vec<f64> = (0..4).map(|a| acts.data().iter().filter(|&&x| x as usize == a).count() as f64 / 2000.0).collect();
        let mut model = HindsightModel::new(2, ActionSpace::Discrete(4), &[32, 32], 7).unwrap();
        let cfg = AuxTrainConfig { epochs: 60, lr: 3e-3, batch_size: 256, max_grad_norm: Some(10.0) };
        train_hindsight(&mut model, &obs, &acts, &z, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let probe = DenseArray::from_rows(&[[0.5, -0.5], [0.5, -0.5], [0.5, -0.5]]).unwrap();
        let p = model.probs(&probe, &[-40.0, 0.0, 40.0]).unwrap();
        for r in 0..3 {
            let kl: f64 = (0..4).map(|a| empirical[a] * (empirical[a] / p.get(r, a)).ln()).sum();
            assert!(kl < 0.05, "row {r}: kl {kl}");
        }
    }

    #[test]
    fn separable_z_is_learned() {
        let (obs, acts, z) = toy(2000, 3, true);
        let mut model = HindsightModel::new(2, ActionSpace::Discrete(4), &[32, 32], 8).unwrap();
        let cfg = AuxTrainConfig { epochs: 80, lr: 3e-3, batch_size: 256, max_grad_norm: Some(10.0) };
        train_hindsight(&mut model, &obs, &acts, &z, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let (tobs, tacts, tz) = toy(500, 99, true);
        let p = model.probs(&tobs, &tz).unwrap();
        let correct = (0..500)
            .filter(|&r| {
                let best = (0..4).max_by(|&a, &b| p.get(r, a).total_cmp(&p.get(r, b))).unwrap();
                best == tacts.get(r, 0) as usize
            })
            .count();
        assert!(correct as f64 / 500.0 > 0.99, "accuracy {}", correct as f64 / 500.0);
    }

    #[test]
    fn single_sample_memorization_is_monotone() {
        let obs = DenseArray::from_rows(&[[0.2, 0.7]]).unwrap();
        let acts = DenseArray::column_vector(&[2.0]).unwrap();
        let mut model = HindsightModel::new(2, ActionSpace::Discrete(4), &[16], 1).unwrap();
        let cfg = AuxTrainConfig { epochs: 30, lr: 1e-2, batch_size: 256, max_grad_norm: None };
        let losses = train_hindsight(&mut model, &obs, &acts, &[3.0], &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "{losses:?}");
    }

    #[test]
    fn empty_batch_rejected() {
        let mut model = HindsightModel::new(2, ActionSpace::Discrete(4), &[4], 1).unwrap();
        let r = train_hindsight(&mut model, &DenseArray::zeros(0, 2), &DenseArray::zeros(0, 1), &[], &AuxTrainConfig::default(), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
