//! Hindsight DICE: return predictor `χ(z | s)`, the bounded model `φ(s, a, z)`,
//! its training objective, ratio reconstruction and the auxiliary-update
//! schedule.
//!
//! The objective minimized over `φ` is
//!
//! ```text
//! ½ · E_{s ~ batch, z ~ χ(·|s), a ~ h(·|s,z)} [φ²]  −  E_{(s,a) ~ batch, z ~ ψ} [φ]
//! ```
//!
//! whose pointwise minimizer is `π ψ / (χ h)`. Multiplying by `χ` (and dropping
//! a constant `ψ`) recovers the hindsight ratio `π / h` without dividing by `h`.

use std::collections::VecDeque;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::ActionSpace;
use crate::error::{Error, Result};
use crate::hindsight::{minibatch_epochs, AuxTrainConfig, HindsightModel, RatioStats};
use crate::nn::{
    gaussian_log_density, AdamConfig, AdamState, DenseArray, ForwardCache, MlpModel, OutputTransform, RunningNormalizer, LOG_STD_MAX,
    LOG_STD_MIN,
};
use crate::ppo::{Advantages, Estimator};
use crate::rollout::RolloutBatch;

/// Something that can sample returns given states and report their density.
pub trait ReturnModel {
    fn sample_returns(&self, obs: &DenseArray, rng: &mut dyn RngCore) -> Result<Vec<f64>>;
    /// `log χ(z_i | s_i)` in raw return units.
    fn log_density(&self, obs: &DenseArray, z: &[f64]) -> Result<Vec<f64>>;
}

/// Something that can sample actions given states and returns.
pub trait HindsightSampler {
    /// One action per row, in stored-row form.
    fn sample_actions(&self, obs: &DenseArray, z: &[f64], rng: &mut dyn RngCore) -> Result<DenseArray>;
}

/// A trainable scalar function `φ(s, a, z)`.
pub trait DiceFunction {
    type Cache;
    fn forward(&self, obs: &DenseArray, actions: &DenseArray, z: &[f64]) -> Result<(Vec<f64>, Self::Cache)>;
    /// Parameter gradients for `upstream = dL/dφ`, in `params_mut` order.
    fn backward(&self, cache: &Self::Cache, upstream: &[f64]) -> Result<Vec<Vec<f64>>>;
    fn params_mut(&mut self) -> Vec<&mut [f64]>;

    fn evaluate(&self, obs: &DenseArray, actions: &DenseArray, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(obs, actions, z)?.0)
    }
}

impl HindsightSampler for HindsightModel {
    fn sample_actions(&self, obs: &DenseArray, z: &[f64], rng: &mut dyn RngCore) -> Result<DenseArray> {
        self.sample(obs, z, rng)
    }
}

/// Unimodal Gaussian over returns given the state. The network predicts mean
/// and log-std of the *normalized* return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPredictor {
    net: MlpModel,
    target_normalizer: RunningNormalizer,
}

impl ReturnPredictor {
    pub fn new(obs_dim: usize, hidden: &[usize], normalize_targets: bool, seed: u64) -> Result<Self> {
        let mut dims = vec![obs_dim];
        dims.extend_from_slice(hidden);
        dims.push(2);
        Ok(Self {
            net: MlpModel::new(&dims, OutputTransform::LogStdClamp { lo: LOG_STD_MIN, hi: LOG_STD_MAX }, seed)?,
            target_normalizer: RunningNormalizer::new(1, normalize_targets),
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.params_mut()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.net.params()
    }

    pub fn target_normalizer(&self) -> &RunningNormalizer {
        &self.target_normalizer
    }

    pub fn fit_normalizer(&mut self, z: &[f64]) -> Result<()> {
        self.target_normalizer = RunningNormalizer::new(1, self.target_normalizer.enabled());
        self.target_normalizer.update_scalars(z)
    }

    /// `(mean, log_std)` per row in normalized units.
    pub fn predict(&self, obs: &DenseArray) -> Result<Vec<(f64, f64)>> {
        let out = self.net.forward(obs)?;
        Ok((0..out.rows()).map(|r| (out.get(r, 0), out.get(r, 1))).collect())
    }

    /// Mean and std per row in raw return units.
    pub fn predict_raw(&self, obs: &DenseArray) -> Result<Vec<(f64, f64)>> {
        let scale = self.target_normalizer.scale()[0];
        Ok(self
            .predict(obs)?
            .into_iter()
            .map(|(m, ls)| (self.target_normalizer.invert_scalar(m), ls.exp() * scale))
            .collect())
    }

    /// Mean Gaussian NLL of the normalized targets and its gradients.
    pub fn nll_and_grad(&self, obs: &DenseArray, z: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
        let n = obs.rows();
        if n == 0 || z.len() != n {
            return Err(Error::dim("return predictor batch", n, z.len()));
        }
        let cache = self.net.forward_cached(obs)?;
        let out = cache.output();
        let nf = n as f64;
        let mut loss = 0.0;
        let mut up = DenseArray::zeros(n, 2);
        for i in 0..n {
            let t = self.target_normalizer.apply_scalar(z[i]);
            let (m, ls) = (out.get(i, 0), out.get(i, 1));
            loss -= gaussian_log_density(t, m, ls);
            let inv_var = (-2.0 * ls).exp();
            let diff = t - m;
            up.set(i, 0, -diff * inv_var / nf);
            up.set(i, 1, -(diff * diff * inv_var - 1.0) / nf);
        }
        let grads = self.net.backward(&cache, &up)?.into_flat();
        Ok((loss / nf, grads))
    }
}

impl ReturnModel for ReturnPredictor {
    fn sample_returns(&self, obs: &DenseArray, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(self
            .predict(obs)?
            .into_iter()
            .map(|(m, ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                self.target_normalizer.invert_scalar(m + ls.exp() * eps)
            })
            .collect())
    }

    fn log_density(&self, obs: &DenseArray, z: &[f64]) -> Result<Vec<f64>> {
        if obs.rows() != z.len() {
            return Err(Error::dim("return density rows", obs.rows(), z.len()));
        }
        let log_scale = self.target_normalizer.scale()[0].ln();
        Ok(self
            .predict(obs)?
            .into_iter()
            .zip(z)
            .map(|((m, ls), &zi)| gaussian_log_density(self.target_normalizer.apply_scalar(zi), m, ls) - log_scale)
            .collect())
    }
}

/// Refits the target normalizer and fits `χ` by Gaussian maximum likelihood.
pub fn train_return_predictor<R: Rng + ?Sized>(
    chi: &mut ReturnPredictor,
    obs: &DenseArray,
    z: &[f64],
    cfg: &AuxTrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if obs.rows() == 0 {
        return Err(Error::Contract("train_return_predictor on an empty batch".into()));
    }
    chi.fit_normalizer(z)?;
    let mut opt = AdamState::for_params(AdamConfig::with_lr(cfg.lr), &chi.params_mut());
    minibatch_epochs(obs.rows(), cfg, rng, |idx, _| {
        let zb: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
        let (loss, grads) = chi.nll_and_grad(&obs.select_rows(idx), &zb)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("return predictor loss is {loss}")));
        }
        let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        opt.step(&mut chi.params_mut(), &refs, cfg.max_grad_norm)?;
        Ok(loss)
    })
}

/// `C · sigmoid(net([s ; enc(a) ; normalized z]))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiceModel {
    net: MlpModel,
    z_normalizer: RunningNormalizer,
    action_space: ActionSpace,
    c: f64,
}

impl DiceModel {
    pub fn new(obs_dim: usize, action_space: ActionSpace, hidden: &[usize], c: f64, seed: u64) -> Result<Self> {
        let mut dims = vec![obs_dim + action_space.encoded_dim() + 1];
        dims.extend_from_slice(hidden);
        dims.push(1);
        Ok(Self {
            net: MlpModel::new(&dims, OutputTransform::SigmoidScaled { c }, seed)?,
            z_normalizer: RunningNormalizer::new(1, true),
            action_space,
            c,
        })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.net.params()
    }

    pub fn fit_normalizer(&mut self, z: &[f64]) -> Result<()> {
        self.z_normalizer = RunningNormalizer::new(1, self.z_normalizer.enabled());
        self.z_normalizer.update_scalars(z)
    }

    fn input(&self, obs: &DenseArray, actions: &DenseArray, z: &[f64]) -> Result<DenseArray> {
        let n = obs.rows();
        if actions.rows() != n || z.len() != n {
            return Err(Error::dim("dice input rows", n, format!("{} actions / {} returns", actions.rows(), z.len())));
        }
        let enc = encode_actions(&self.action_space, actions)?;
        let zn: Vec<f64> = z.iter().map(|&v| self.z_normalizer.apply_scalar(v)).collect();
        DenseArray::hstack(&[obs, &enc, &DenseArray::column_vector(&zn)?])
    }
}

/// One-hot rows for discrete actions, the raw vector for continuous ones.
pub fn encode_actions(space: &ActionSpace, actions: &DenseArray) -> Result<DenseArray> {
    match *space {
        ActionSpace::Discrete(k) => {
            if actions.cols() != 1 {
                return Err(Error::dim("discrete action columns", 1, actions.cols()));
            }
            let mut out = DenseArray::zeros(actions.rows(), k);
            for r in 0..actions.rows() {
                let a = actions.get(r, 0) as usize;
                if a >= k {
                    return Err(Error::dim("discrete action index", format!("< {k}"), a));
                }
                out.set(r, a, 1.0);
            }
            Ok(out)
        }
        ActionSpace::Continuous { dim, .. } => {
            if actions.cols() != dim {
                return Err(Error::dim("continuous action width", dim, actions.cols()));
            }
            Ok(actions.clone())
        }
    }
}

impl DiceFunction for DiceModel {
    type Cache = ForwardCache;

    fn forward(&self, obs: &DenseArray, actions: &DenseArray, z: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let cache = self.net.forward_cached(&self.input(obs, actions, z)?)?;
        Ok((cache.output().data().to_vec(), cache))
    }

    fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<Vec<f64>>> {
        Ok(self.net.backward(cache, &DenseArray::column_vector(upstream)?)?.into_flat())
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.params_mut()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PsiSampler {
    Uniform { lo: f64, hi: f64 },
    /// `ψ(z) = χ(z | s)`; the ratio is then `φ` alone.
    ConditionalChi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsiKind {
    Uniform,
    Conditional,
}

impl PsiKind {
    pub fn name(self) -> &'static str {
        match self {
            PsiKind::Uniform => "uniform",
            PsiKind::Conditional => "conditional",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(PsiKind::Uniform),
            "conditional" => Ok(PsiKind::Conditional),
            other => Err(Error::Config(format!("unknown psi '{other}'"))),
        }
    }
}

impl PsiSampler {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Config(format!("uniform psi needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(PsiSampler::Uniform { lo, hi })
    }

    /// Uniform over the declared return range, or over the batch's observed
    /// returns widened by one when the environment declares none.
    pub fn resolve(kind: PsiKind, declared: Option<(f64, f64)>, batch_z: &[f64]) -> Result<Self> {
        match kind {
            PsiKind::Conditional => Ok(PsiSampler::ConditionalChi),
            PsiKind::Uniform => match declared {
                Some((lo, hi)) => Self::uniform(lo, hi),
                None => {
                    let lo = batch_z.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = batch_z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    Self::uniform(lo - 1.0, hi + 1.0)
                }
            },
        }
    }

    pub fn kind(&self) -> PsiKind {
        match self {
            PsiSampler::Uniform { .. } => PsiKind::Uniform,
            PsiSampler::ConditionalChi => PsiKind::Conditional,
        }
    }

    pub fn sample(&self, obs: &DenseArray, chi: &dyn ReturnModel, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        match *self {
            PsiSampler::Uniform { lo, hi } => Ok((0..obs.rows()).map(|_| rng.random_range(lo..hi)).collect()),
            PsiSampler::ConditionalChi => chi.sample_returns(obs, rng),
        }
    }
}

/// The samples behind one evaluation of the objective.
#[derive(Debug, Clone)]
pub struct DiceSamples {
    pub h_actions: DenseArray,
    pub chi_returns: Vec<f64>,
    pub psi_returns: Vec<f64>,
}

impl DiceSamples {
    /// Draws `z ~ χ(·|s)`, `a ~ h(·|s,z)` and `z' ~ ψ` for every row.
    pub fn draw(obs: &DenseArray, chi: &dyn ReturnModel, h: &dyn HindsightSampler, psi: &PsiSampler, rng: &mut dyn RngCore) -> Result<Self> {
        let chi_returns = chi.sample_returns(obs, rng)?;
        let h_actions = h.sample_actions(obs, &chi_returns, rng)?;
        let psi_returns = psi.sample(obs, chi, rng)?;
        Ok(Self {
            h_actions,
            chi_returns,
            psi_returns,
        })
    }
}

/// `½ mean(φ(s, a_h, z_χ)²) − mean(φ(s, a, z_ψ))` for fixed samples, with
/// gradients in `params_mut` order.
pub fn dice_loss_with_samples<F: DiceFunction>(
    phi: &F,
    obs: &DenseArray,
    actions: &DenseArray,
    samples: &DiceSamples,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = obs.rows();
    if n == 0 {
        return Err(Error::Contract("dice loss on an empty batch".into()));
    }
    let nf = n as f64;
    let (phi1, c1) = phi.forward(obs, &samples.h_actions, &samples.chi_returns)?;
    let (phi2, c2) = phi.forward(obs, actions, &samples.psi_returns)?;
    let loss = 0.5 * phi1.iter().map(|v| v * v).sum::<f64>() / nf - phi2.iter().sum::<f64>() / nf;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("dice loss is {loss}")));
    }
    let up1: Vec<f64> = phi1.iter().map(|v| v / nf).collect();
    let up2 = vec![-1.0 / nf; n];
    let mut grads = phi.backward(&c1, &up1)?;
    for (g, g2) in grads.iter_mut().zip(phi.backward(&c2, &up2)?) {
        for (a, b) in g.iter_mut().zip(g2) {
            *a += b;
        }
    }
    Ok((loss, grads))
}

pub fn dice_loss<F: DiceFunction>(
    phi: &F,
    chi: &dyn ReturnModel,
    h: &dyn HindsightSampler,
    obs: &DenseArray,
    actions: &DenseArray,
    psi: &PsiSampler,
    rng: &mut dyn RngCore,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let samples = DiceSamples::draw(obs, chi, h, psi, rng)?;
    dice_loss_with_samples(phi, obs, actions, &samples)
}

/// Adam on fresh per-minibatch samples; `χ` and `h` are read-only. Returns
/// the mean loss of each epoch.
#[allow(clippy::too_many_arguments)]
pub fn train_dice<F: DiceFunction, R: RngCore>(
    phi: &mut F,
    chi: &dyn ReturnModel,
    h: &dyn HindsightSampler,
    obs: &DenseArray,
    actions: &DenseArray,
    psi: &PsiSampler,
    cfg: &AuxTrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut opt = AdamState::for_params(AdamConfig::with_lr(cfg.lr), &phi.params_mut());
    minibatch_epochs(obs.rows(), cfg, rng, |idx, rng| {
        let (loss, grads) = dice_loss(phi, chi, h, &obs.select_rows(idx), &actions.select_rows(idx), psi, rng)?;
        let refs: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        opt.step(&mut phi.params_mut(), &refs, cfg.max_grad_norm)?;
        Ok(loss)
    })
}

/// `φ·χ` for uniform `ψ`, `φ` alone for conditional `ψ`.
pub fn hdice_ratio<F: DiceFunction>(
    phi: &F,
    chi: &dyn ReturnModel,
    obs: &DenseArray,
    actions: &DenseArray,
    z: &[f64],
    psi: PsiKind,
) -> Result<Vec<f64>> {
    let phi_v = phi.evaluate(obs, actions, z)?;
    match psi {
        PsiKind::Conditional => Ok(phi_v),
        PsiKind::Uniform => {
            let log_chi = chi.log_density(obs, z)?;
            Ok(phi_v.iter().zip(log_chi).map(|(p, lc)| p * lc.exp()).collect())
        }
    }
}

/// `Â_t = (1 − ratio_t)·z_t`.
pub fn hdice_advantage<F: DiceFunction>(
    phi: &F,
    chi: &dyn ReturnModel,
    obs: &DenseArray,
    actions: &DenseArray,
    z: &[f64],
    psi: PsiKind,
) -> Result<(Advantages, RatioStats)> {
    let ratios = hdice_ratio(phi, chi, obs, actions, z, psi)?;
    let values = ratios.iter().zip(z).map(|(r, z)| (1.0 - r) * z).collect();
    Ok((Advantages { values, estimator: Estimator::Hdice }, RatioStats::of(&ratios, 0)))
}

/// Auxiliary models retrain every `n` policy iterations on the last `n`
/// batches.
#[derive(Debug, Clone)]
pub struct AuxSchedule {
    n: usize,
    buffer: VecDeque<RolloutBatch>,
    events: usize,
}

#[derive(Debug, Clone)]
pub struct AuxDecision {
    pub train_now: bool,
    /// Concatenation of the buffered batches when `train_now`.
    pub training_data: Option<RolloutBatch>,
    pub batches_used: usize,
}

impl AuxSchedule {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("aux schedule n must be at least 1".into()));
        }
        Ok(Self {
            n,
            buffer: VecDeque::with_capacity(n),
            events: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn events(&self) -> usize {
        self.events
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Records the batch of 1-based `iteration` and decides whether to train.
    pub fn schedule_aux_update(&mut self, iteration: usize, batch: RolloutBatch) -> Result<AuxDecision> {
        if self.buffer.len() == self.n {
            self.buffer.pop_front();
        }
        self.buffer.push_back(batch);
        if !iteration.is_multiple_of(self.n) {
            return Ok(AuxDecision {
                train_now: false,
                training_data: None,
                batches_used: 0,
            });
        }
        let refs: Vec<&RolloutBatch> = self.buffer.iter().collect();
        let data = RolloutBatch::concat(&refs)?;
        self.events += 1;
        Ok(AuxDecision {
            train_now: true,
            training_data: Some(data),
            batches_used: refs.len(),
        })
    }
}
