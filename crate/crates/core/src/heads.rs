//! Batched log-likelihood and entropy of stored actions under a network's
//! action-head output, with gradients. Shared by the policy and the hindsight
//! model.
//!
//! Discrete heads read the network output as logits. Continuous heads read it
//! as the Gaussian mean and take a separate, state-independent log-std vector.

use crate::env::ActionSpace;
use crate::error::{Error, Result};
use crate::nn::{CategoricalHead, DenseArray, GaussianHead, LOG_STD_MAX, LOG_STD_MIN};

#[derive(Debug, Clone, PartialEq)]
pub struct HeadEval {
    pub log_probs: Vec<f64>,
    pub entropies: Vec<f64>,
}

fn check(space: &ActionSpace, outputs: &DenseArray, log_std: Option<&[f64]>, actions: &DenseArray) -> Result<()> {
    if outputs.cols() != space.encoded_dim() {
        return Err(Error::dim("action head width", space.encoded_dim(), outputs.cols()));
    }
    if actions.rows() != outputs.rows() || actions.cols() != space.stored_dim() {
        return Err(Error::dim(
            "action batch",
            format!("{}x{}", outputs.rows(), space.stored_dim()),
            format!("{}x{}", actions.rows(), actions.cols()),
        ));
    }
    match (space, log_std) {
        (ActionSpace::Continuous { dim, .. }, Some(ls)) if ls.len() == *dim => Ok(()),
        (ActionSpace::Continuous { .. }, _) => Err(Error::Contract("continuous head needs a log-std vector".into())),
        (ActionSpace::Discrete(_), _) => Ok(()),
    }
}

pub fn eval_head(space: &ActionSpace, outputs: &DenseArray, log_std: Option<&[f64]>, actions: &DenseArray) -> Result<HeadEval> {
    check(space, outputs, log_std, actions)?;
    let n = outputs.rows();
    let mut log_probs = Vec::with_capacity(n);
    let mut entropies = Vec::with_capacity(n);
    for r in 0..n {
        match space {
            ActionSpace::Discrete(_) => {
                let head = CategoricalHead::from_logits(outputs.row(r))?;
                log_probs.push(head.log_prob(actions.row(r)[0] as usize)?);
                entropies.push(head.entropy());
            }
            ActionSpace::Continuous { .. } => {
                let head = GaussianHead::new(outputs.row(r), log_std.expect("checked"))?;
                log_probs.push(head.log_prob(actions.row(r))?);
                entropies.push(head.entropy());
            }
        }
    }
    Ok(HeadEval { log_probs, entropies })
}

/// Gradient of `Σ_i w_logp[i]·log p_i + w_ent[i]·H_i` with respect to the head
/// outputs and the log-std vector.
pub fn head_backward(
    space: &ActionSpace,
    outputs: &DenseArray,
    log_std: Option<&[f64]>,
    actions: &DenseArray,
    w_logp: &[f64],
    w_ent: &[f64],
) -> Result<(DenseArray, Vec<f64>)> {
    check(space, outputs, log_std, actions)?;
    let n = outputs.rows();
    let mut d_out = DenseArray::zeros(n, outputs.cols());
    let mut d_ls = vec![0.0; log_std.map_or(0, <[f64]>::len)];
    for r in 0..n {
        match space {
            ActionSpace::Discrete(_) => {
                let head = CategoricalHead::from_logits(outputs.row(r))?;
                let g = head.grad_log_prob(actions.row(r)[0] as usize);
                let row = d_out.row_mut(r);
                if w_ent[r] != 0.0 {
                    let ge = head.grad_entropy();
                    for j in 0..row.len() {
                        row[j] = w_logp[r] * g[j] + w_ent[r] * ge[j];
                    }
                } else {
                    for j in 0..row.len() {
                        row[j] = w_logp[r] * g[j];
                    }
                }
            }
            ActionSpace::Continuous { .. } => {
                let raw = log_std.expect("checked");
                let head = GaussianHead::new(outputs.row(r), raw)?;
                let (dm, dls) = head.grad_log_prob(actions.row(r));
                let row = d_out.row_mut(r);
                for j in 0..row.len() {
                    row[j] = w_logp[r] * dm[j];
                }
                for j in 0..d_ls.len() {
                    if raw[j] > LOG_STD_MIN && raw[j] < LOG_STD_MAX {
                        d_ls[j] += w_logp[r] * dls[j] + w_ent[r];
                    }
                }
            }
        }
    }
    Ok((d_out, d_ls))
}
