use serde::{Deserialize, Serialize};

use super::tensor::DenseArray;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one parameter list. The list order must stay fixed for
/// the lifetime of the state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<DenseArray>,
    v: Vec<DenseArray>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            m: shapes.iter().map(|&n| DenseArray::zeros(1, n)).collect(),
            v: shapes.iter().map(|&n| DenseArray::zeros(1, n)).collect(),
            t: 0,
        }
    }

    /// Moments sized from the current parameter list.
    pub fn for_params(config: AdamConfig, params: &[&mut [f64]]) -> Self {
        let shapes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(config, &shapes)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One Adam update. When `max_grad_norm` is set the global 2-norm of all
    /// gradients is clipped to it first. Returns the pre-clip gradient norm.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], max_grad_norm: Option<f64>) -> Result<f64> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::dim("adam_step parameter count", self.m.len(), format!("{} params / {} grads", params.len(), grads.len())));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(Error::dim("adam_step tensor size", self.m[i].len(), format!("param {} / grad {}", p.len(), g.len())));
            }
        }
        let mut sq = 0.0;
        for g in grads {
            for &v in g.iter() {
                if !v.is_finite() {
                    return Err(Error::Numeric(format!("adam_step: non-finite gradient {v}")));
                }
                sq += v * v;
            }
        }
        let norm = sq.sqrt();
        let scale = match max_grad_norm {
            Some(max) if norm > max => max / (norm + 1e-12),
            _ => 1.0,
        };

        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.t as f64;
        let bc1 = 1.0 - beta1.powf(t);
        let bc2 = 1.0 - beta2.powf(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for j in 0..p.len() {
                let gj = g[j] * scale;
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(norm)
    }
}
