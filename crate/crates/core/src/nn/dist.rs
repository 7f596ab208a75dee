//! Action and return distributions: softmax categorical and diagonal Gaussian.

use rand::Rng;
use rand_distr::StandardNormal;

use super::tensor::DenseArray;
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Numerically stable log-softmax (max subtracted first).
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&l| l - lse).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalHead {
    logits: DenseArray,
    log_probs: Vec<f64>,
}

impl CategoricalHead {
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Contract("categorical head needs at least one action".into()));
        }
        let logits = DenseArray::row_vector(logits)?;
        let log_probs = log_softmax(logits.data());
        Ok(Self { logits, log_probs })
    }

    /// Builds a head whose softmax equals `probs` (entries must be positive).
    pub fn from_probs(probs: &[f64]) -> Result<Self> {
        if probs.iter().any(|&p| p <= 0.0) {
            return Err(Error::Contract("probabilities must be positive".into()));
        }
        Self::from_logits(&probs.iter().map(|p| p.ln()).collect::<Vec<_>>())
    }

    pub fn n_actions(&self) -> usize {
        self.log_probs.len()
    }

    pub fn logits(&self) -> &[f64] {
        self.logits.data()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn log_prob(&self, action: usize) -> Result<f64> {
        self.log_probs
            .get(action)
            .copied()
            .ok_or_else(|| Error::dim("categorical action index", format!("< {}", self.n_actions()), action))
    }

    pub fn entropy(&self) -> f64 {
        -self.log_probs.iter().map(|&l| l.exp() * l).sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, l) in self.log_probs.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return i;
            }
        }
        self.n_actions() - 1
    }

    /// `d log p(action) / d logits = onehot(action) - p`.
    pub fn grad_log_prob(&self, action: usize) -> Vec<f64> {
        self.log_probs
            .iter()
            .enumerate()
            .map(|(i, l)| if i == action { 1.0 } else { 0.0 } - l.exp())
            .collect()
    }

    /// `d H / d logits_i = -p_i (log p_i + H)`.
    pub fn grad_entropy(&self) -> Vec<f64> {
        let h = self.entropy();
        self.log_probs.iter().map(|&l| -l.exp() * (l + h)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    mean: DenseArray,
    log_std: DenseArray,
}

impl GaussianHead {
    /// `log_std` is clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn new(mean: &[f64], log_std: &[f64]) -> Result<Self> {
        if mean.len() != log_std.len() || mean.is_empty() {
            return Err(Error::dim("gaussian head", mean.len(), log_std.len()));
        }
        let clamped: Vec<f64> = log_std.iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect();
        Ok(Self {
            mean: DenseArray::row_vector(mean)?,
            log_std: DenseArray::row_vector(&clamped)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.data()
    }

    pub fn log_std(&self) -> &[f64] {
        self.log_std.data()
    }

    pub fn log_prob(&self, action: &[f64]) -> Result<f64> {
        if action.len() != self.dim() {
            return Err(Error::dim("gaussian action", self.dim(), action.len()));
        }
        Ok(action
            .iter()
            .zip(self.mean.data())
            .zip(self.log_std.data())
            .map(|((&a, &m), &ls)| {
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - HALF_LN_2PI
            })
            .sum())
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.data().iter().map(|&ls| ls + 0.5 + HALF_LN_2PI).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mean
            .data()
            .iter()
            .zip(self.log_std.data())
            .map(|(&m, &ls)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + ls.exp() * eps
            })
            .collect()
    }

    /// Gradients of `log_prob(action)` with respect to `(mean, log_std)`.
    pub fn grad_log_prob(&self, action: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dm = Vec::with_capacity(self.dim());
        let mut dls = Vec::with_capacity(self.dim());
        for ((&a, &m), &ls) in action.iter().zip(self.mean.data()).zip(self.log_std.data()) {
            let var = (2.0 * ls).exp();
            let diff = a - m;
            dm.push(diff / var);
            dls.push(diff * diff / var - 1.0);
        }
        (dm, dls)
    }
}

/// Density of `N(mean, exp(log_std)^2)` at `x`, in log space.
#[inline]
pub fn gaussian_log_density(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) / log_std.exp();
    -0.5 * z * z - log_std - HALF_LN_2PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_categorical() {
        let h = CategoricalHead::from_logits(&[0.3; 4]).unwrap();
        for a in 0..4 {
            assert!((h.log_prob(a).unwrap() - 0.25f64.ln()).abs() < 1e-15);
        }
        assert!((h.entropy() - 4f64.ln()).abs() < 1e-12);
        assert!(h.log_prob(4).is_err());
    }

    #[test]
    fn categorical_from_table_probs() {
        // pi(Left|s) = 0.002 at the probe state
        let probs = [0.845, 0.002, 0.1, 0.053];
        let h = CategoricalHead::from_probs(&probs).unwrap();
        assert!((h.log_prob(1).unwrap() - 0.002f64.ln()).abs() < 1e-12);
        let s: f64 = h.probs().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = CategoricalHead::from_logits(&[1.0, -2.0, 0.5]).unwrap();
        let b = CategoricalHead::from_logits(&[1001.0, 998.0, 1000.5]).unwrap();
        for i in 0..3 {
            assert!((a.log_prob(i).unwrap() - b.log_prob(i).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn standard_normal_log_prob() {
        let g = GaussianHead::new(&[0.0], &[0.0]).unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((g.log_prob(&[0.0]).unwrap() - expect).abs() < 1e-15);
        assert!(g.log_prob(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn log_std_is_clamped() {
        let g = GaussianHead::new(&[0.0, 0.0], &[-50.0, 50.0]).unwrap();
        assert_eq!(g.log_std(), &[LOG_STD_MIN, LOG_STD_MAX]);
    }

    #[test]
    fn categorical_sampling_matches_probs() {
        let h = CategoricalHead::from_probs(&[0.1, 0.6, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 3];
        let n = 200_000;
        for _ in 0..n {
            counts[h.sample(&mut rng)] += 1;
        }
        for (c, p) in counts.iter().zip(h.probs()) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.005);
        }
    }

    #[test]
    fn gaussian_density_integrates_to_one() {
        // Monte-Carlo: E_{x~U[-L,L]}[2L p(x)] ~ 1
        let g = GaussianHead::new(&[0.3], &[-0.2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = 8.0;
        let n = 200_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let x: f64 = rng.random_range(-l..l);
            acc += 2.0 * l * g.log_prob(&[x]).unwrap().exp();
        }
        assert!((acc / n as f64 - 1.0).abs() < 0.01);
    }

    #[test]
    fn analytic_grads_match_finite_differences() {
        let logits = [0.2, -1.0, 0.7];
        let h = CategoricalHead::from_logits(&logits).unwrap();
        let g = h.grad_log_prob(2);
        let ge = h.grad_entropy();
        let eps = 1e-6;
        for i in 0..3 {
            let mut lp = logits;
            lp[i] += eps;
            let mut lm = logits;
            lm[i] -= eps;
            let hp = CategoricalHead::from_logits(&lp).unwrap();
            let hm = CategoricalHead::from_logits(&lm).unwrap();
            let fd = (hp.log_prob(2).unwrap() - hm.log_prob(2).unwrap()) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-8);
            let fd = (hp.entropy() - hm.entropy()) / (2.0 * eps);
            assert!((fd - ge[i]).abs() < 1e-8);
        }
        let gh = GaussianHead::new(&[0.5], &[-0.3]).unwrap();
        let (dm, dls) = gh.grad_log_prob(&[1.2]);
        let fdm = (GaussianHead::new(&[0.5 + eps], &[-0.3]).unwrap().log_prob(&[1.2]).unwrap()
            - GaussianHead::new(&[0.5 - eps], &[-0.3]).unwrap().log_prob(&[1.2]).unwrap())
            / (2.0 * eps);
        let fds = (GaussianHead::new(&[0.5], &[-0.3 + eps]).unwrap().log_prob(&[1.2]).unwrap()
            - GaussianHead::new(&[0.5], &[-0.3 - eps]).unwrap().log_prob(&[1.2]).unwrap())
            / (2.0 * eps);
        assert!((fdm - dm[0]).abs() < 1e-7 && (fds - dls[0]).abs() < 1e-7);
    }
}
