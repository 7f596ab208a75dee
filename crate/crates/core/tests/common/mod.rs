//! Central-difference gradient checks shared by the integration tests.
#![allow(dead_code)]

use hdice::env::ActionSpace;
use hdice::hdice::{dice_loss_with_samples, DiceFunction, DiceModel, DiceSamples, ReturnPredictor};
use hdice::hindsight::HindsightModel;
use hdice::nn::{DenseArray, MlpModel, OutputTransform};
use hdice::ppo::{ppo_loss_and_grad, PolicyNet, PpoConfig, PpoMinibatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;

/// `‖a − b‖ / (‖a‖ + ‖b‖)` over every parameter tensor at once.
pub fn relative_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        assert_eq!(x.len(), y.len());
        for (u, v) in x.iter().zip(y) {
            diff += (u - v) * (u - v);
            na += u * u;
            nb += v * v;
        }
    }
    diff.sqrt() / (na.sqrt() + nb.sqrt()).max(1e-12)
}

pub fn numeric_gradient<M: Clone>(
    model: &M,
    params_mut: impl Fn(&mut M) -> Vec<&mut [f64]>,
    loss: impl Fn(&M) -> f64,
) -> Vec<Vec<f64>> {
    let mut m = model.clone();
    let shapes: Vec<usize> = params_mut(&mut m).iter().map(|p| p.len()).collect();
    let mut out = Vec::with_capacity(shapes.len());
    for (i, &len) in shapes.iter().enumerate() {
        let mut g = vec![0.0; len];
        for (j, gj) in g.iter_mut().enumerate() {
            let orig = params_mut(&mut m)[i][j];
            params_mut(&mut m)[i][j] = orig + FD_STEP;
            let up = loss(&m);
            params_mut(&mut m)[i][j] = orig - FD_STEP;
            let down = loss(&m);
            params_mut(&mut m)[i][j] = orig;
            *gj = (up - down) / (2.0 * FD_STEP);
        }
        out.push(g);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Mlp,
    Ppo,
    Hindsight,
    ReturnPredictor,
    Dice,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [LossKind::Mlp, LossKind::Ppo, LossKind::Hindsight, LossKind::ReturnPredictor, LossKind::Dice];
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseArray {
    let data = (0..rows * cols).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    DenseArray::new(rows, cols, data).unwrap()
}

fn random_space(rng: &mut ChaCha8Rng) -> ActionSpace {
    if rng.random_bool(0.5) {
        ActionSpace::Discrete(rng.random_range(2..6))
    } else {
        ActionSpace::Continuous {
            dim: rng.random_range(1..4),
            low: -1.0,
            high: 1.0,
        }
    }
}

fn random_actions(rng: &mut ChaCha8Rng, space: &ActionSpace, n: usize) -> DenseArray {
    match *space {
        ActionSpace::Discrete(k) => {
            let idx: Vec<f64> = (0..n).map(|_| rng.random_range(0..k) as f64).collect();
            DenseArray::column_vector(&idx).unwrap()
        }
        ActionSpace::Continuous { dim, .. } => gaussian_matrix(rng, n, dim, 0.7),
    }
}

fn random_hidden(rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..rng.random_range(1..3)).map(|_| rng.random_range(3..12)).collect()
}

fn random_returns(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let (loc, scale) = (rng.random_range(-50.0..50.0), rng.random_range(0.5..30.0));
    (0..n).map(|_| loc + scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Relative error between the analytic and central-difference gradients of
/// one randomly drawn configuration of `kind`.
pub fn gradient_check(kind: LossKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs_dim = rng.random_range(1..6);
    let n = rng.random_range(2..12);
    let obs = gaussian_matrix(&mut rng, n, obs_dim, 1.0);
    let init = rng.random::<u64>();
    match kind {
        LossKind::Mlp => {
            let mut dims = vec![obs_dim];
            dims.extend(random_hidden(&mut rng));
            let out = rng.random_range(1..4) * 2;
            dims.push(out);
            let transform = match rng.random_range(0..3) {
                0 => OutputTransform::Identity,
                1 => OutputTransform::SigmoidScaled { c: rng.random_range(0.5..10.0) },
                _ => OutputTransform::LogStdClamp { lo: -20.0, hi: 20.0 },
            };
            let net = MlpModel::new(&dims, transform, init).unwrap();
            let w = gaussian_matrix(&mut rng, n, out, 1.0);
            let objective = |m: &MlpModel| {
                let y = m.forward(&obs).unwrap();
                y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
            };
            let cache = net.forward_cached(&obs).unwrap();
            let analytic = net.backward(&cache, &w).unwrap().into_flat();
            relative_error(&analytic, &numeric_gradient(&net, MlpModel::params_mut, objective))
        }
        LossKind::Ppo => {
            let space = random_space(&mut rng);
            let with_value = rng.random_bool(0.5);
            let policy = PolicyNet::new(obs_dim, space.clone(), &random_hidden(&mut rng), with_value, init).unwrap();
            let actions = random_actions(&mut rng, &space, n);
            let current = policy.log_probs(&obs, &actions).unwrap();
            let old_log_probs = current.iter().map(|lp| lp + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
            let mb = PpoMinibatch {
                observations: obs.clone(),
                actions,
                old_log_probs,
                advantages: (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
                value_targets: with_value.then(|| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()),
            };
            let config = PpoConfig {
                lr: 3e-4,
                clip_eps: rng.random_range(0.1..0.3),
                ppo_epochs: 1,
                entropy_coef: rng.random_range(0.0..0.1),
                value_loss_coef: with_value.then(|| rng.random_range(0.1..1.0)),
                gae_lambda: None,
                gamma: 0.99,
                minibatch_size: n,
                max_grad_norm: None,
                normalize_advantages: rng.random_bool(0.5),
            };
            let (_, analytic) = ppo_loss_and_grad(&policy, &mb, &config).unwrap();
            let objective = |p: &PolicyNet| ppo_loss_and_grad(p, &mb, &config).unwrap().0.total;
            relative_error(&analytic, &numeric_gradient(&policy, PolicyNet::params_mut, objective))
        }
        LossKind::Hindsight => {
            let space = random_space(&mut rng);
            let mut h = HindsightModel::new(obs_dim, space.clone(), &random_hidden(&mut rng), init).unwrap();
            let z = random_returns(&mut rng, n);
            h.fit_normalizer(&z).unwrap();
            let actions = random_actions(&mut rng, &space, n);
            let (_, analytic) = h.nll_and_grad(&obs, &actions, &z).unwrap();
            let objective = |m: &HindsightModel| m.nll_and_grad(&obs, &actions, &z).unwrap().0;
            relative_error(&analytic, &numeric_gradient(&h, HindsightModel::params_mut, objective))
        }
        LossKind::ReturnPredictor => {
            let mut chi = ReturnPredictor::new(obs_dim, &random_hidden(&mut rng), rng.random_bool(0.5), init).unwrap();
            let z = random_returns(&mut rng, n);
            chi.fit_normalizer(&z).unwrap();
            let (_, analytic) = chi.nll_and_grad(&obs, &z).unwrap();
            let objective = |m: &ReturnPredictor| m.nll_and_grad(&obs, &z).unwrap().0;
            relative_error(&analytic, &numeric_gradient(&chi, ReturnPredictor::params_mut, objective))
        }
        LossKind::Dice => {
            let space = random_space(&mut rng);
            let c = rng.random_range(0.5..10.0);
            let mut phi = DiceModel::new(obs_dim, space.clone(), &random_hidden(&mut rng), c, init).unwrap();
            let z = random_returns(&mut rng, n);
            phi.fit_normalizer(&z).unwrap();
            let actions = random_actions(&mut rng, &space, n);
            let samples = DiceSamples {
                h_actions: random_actions(&mut rng, &space, n),
                chi_returns: random_returns(&mut rng, n),
                psi_returns: random_returns(&mut rng, n),
            };
            let (_, analytic) = dice_loss_with_samples(&phi, &obs, &actions, &samples).unwrap();
            let objective = |m: &DiceModel| dice_loss_with_samples(m, &obs, &actions, &samples).unwrap().0;
            relative_error(&analytic, &numeric_gradient(&phi, <DiceModel as DiceFunction>::params_mut, objective))
        }
    }
}
