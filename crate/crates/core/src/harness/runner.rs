//! The outer training loop: collect, fit the auxiliary models on schedule,
//! compute the method's advantages, PPO-update, evaluate, log.

use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{make_env, Environment};
use crate::error::{Error, Result};
use crate::harness::config::{Method, RunConfig};
use crate::hdice::{
    hdice_advantage, train_dice, train_return_predictor, AuxSchedule, DiceModel, PsiSampler, ReturnPredictor,
};
use crate::hindsight::{hca_advantage, train_hindsight, HindsightModel, RatioStats};
use crate::nn::{AdamConfig, AdamState};
use crate::ppo::{gae_advantages, ppo_update, PolicyNet};
use crate::rollout::{collect, run_episode, RolloutBatch};

/// One CSV row; column order is the field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub episodes_elapsed: usize,
    pub env_steps: usize,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub policy_loss: Option<f64>,
    pub value_loss: Option<f64>,
    pub hindsight_loss: Option<f64>,
    pub return_pred_loss: Option<f64>,
    pub dice_loss: Option<f64>,
    pub ratio_mean: Option<f64>,
    pub ratio_max: Option<f64>,
    pub ratio_min: Option<f64>,
    pub wall_ms: u64,
}

pub const CSV_HEADER: [&str; 14] = [
    "iteration",
    "episodes_elapsed",
    "env_steps",
    "eval_return_mean",
    "eval_return_std",
    "policy_loss",
    "value_loss",
    "hindsight_loss",
    "return_pred_loss",
    "dice_loss",
    "ratio_mean",
    "ratio_max",
    "ratio_min",
    "wall_ms",
];

/// The models at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub config: String,
    pub iteration: usize,
    pub policy: PolicyNet,
    pub hindsight: Option<HindsightModel>,
    pub return_model: Option<ReturnPredictor>,
    pub dice: Option<DiceModel>,
    pub psi: Option<PsiSampler>,
}

impl Snapshot {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// One auxiliary training event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuxEvent {
    pub iteration: usize,
    pub batches_used: usize,
    pub rows: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<MetricsRow>,
    pub snapshot: Snapshot,
    pub aux_events: Vec<AuxEvent>,
    /// Iteration and message of the error that stopped the run.
    pub aborted: Option<(usize, String)>,
}

impl RunOutput {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        let mut text = String::from_utf8(w.into_inner().map_err(|e| Error::Format(e.to_string()))?)
            .map_err(|e| Error::Format(e.to_string()))?;
        if let Some((it, msg)) = &self.aborted {
            text.push_str(&format!("# aborted at iteration {it}: {}\n", msg.replace('\n', " ")));
        }
        Ok(text)
    }

    /// Writes `config.txt`, `metrics.csv` and `snapshot.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.txt"), &self.snapshot.config)?;
        std::fs::write(dir.join("metrics.csv"), self.to_csv()?)?;
        self.snapshot.save(&dir.join("snapshot.json"))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Independent seed per purpose, derived from the run seed.
fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

const STREAM_POLICY_INIT: u64 = 1;
const STREAM_COLLECT: u64 = 2;
const STREAM_TRAIN: u64 = 3;
const STREAM_AUX_INIT: u64 = 4;
const STREAM_EVAL: u64 = 5;

struct AuxModels {
    hindsight: HindsightModel,
    chi: Option<ReturnPredictor>,
    phi: Option<DiceModel>,
    psi: Option<PsiSampler>,
}

#[derive(Default)]
struct AuxLosses {
    hindsight: Option<f64>,
    return_pred: Option<f64>,
    dice: Option<f64>,
}

/// Mean and population std of returns of `episodes` sampled-policy episodes.
pub fn evaluate(env: &mut dyn Environment, policy: &PolicyNet, episodes: usize, base_seed: u64) -> Result<(f64, f64)> {
    let mut returns = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let tr = run_episode(env, policy, base_seed.wrapping_add(i as u64))?;
        returns.push(tr.rewards.iter().sum::<f64>());
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

pub fn run_experiment(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut env = make_env(&cfg.env_id())?;
    let mut eval_env = make_env(&cfg.env_id())?;
    let contract = env.contract().clone();
    let space = contract.action_space.clone();
    let obs_dim = contract.observation_dim;

    let mut policy = PolicyNet::new(
        obs_dim,
        space.clone(),
        &cfg.policy_hidden,
        cfg.method == Method::Ppo,
        derive_seed(cfg.seed, STREAM_POLICY_INIT),
    )?;
    let opt = AdamState::for_params(AdamConfig::with_lr(cfg.ppo.lr), &policy.params_mut());
    let mut state = LoopState {
        opt,
        policy,
        schedule: AuxSchedule::new(cfg.aux.as_ref().map_or(1, |a| a.schedule_n))?,
        aux: None,
        train_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_TRAIN)),
        aux_events: Vec::new(),
        episodes: 0,
        steps: 0,
    };
    let collect_base = derive_seed(cfg.seed, STREAM_COLLECT);
    let eval_base = derive_seed(cfg.seed, STREAM_EVAL);
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut aborted = None;

    for iteration in 1..=cfg.total_iterations {
        let seed = collect_base.wrapping_add((iteration as u64) << 32);
        let step = state
            .iterate(cfg, env.as_mut(), iteration, seed, obs_dim)
            .and_then(|partial| {
                if iteration % cfg.eval_every != 0 {
                    return Ok(None);
                }
                let eval_seed = eval_base.wrapping_add((iteration as u64) << 32);
                let (mean, std) = evaluate(eval_env.as_mut(), &state.policy, cfg.eval_episodes, eval_seed)?;
                Ok(Some((partial, mean, std)))
            });
        match step {
            Ok(Some((p, mean, std))) => {
                rows.push(MetricsRow {
                iteration,
                episodes_elapsed: state.episodes,
                env_steps: state.steps,
                eval_return_mean: mean,
                eval_return_std: std,
                policy_loss: p.policy_loss,
                value_loss: p.value_loss,
                hindsight_loss: p.losses.hindsight,
                return_pred_loss: p.losses.return_pred,
                dice_loss: p.losses.dice,
                ratio_mean: p.ratio.map(|r| r.mean),
                ratio_max: p.ratio.map(|r| r.max),
                ratio_min: p.ratio.map(|r| r.min),
                wall_ms: if cfg.record_wall_time { start.elapsed().as_millis() as u64 } else { 0 },
                });
                if cfg.stop_above.is_some_and(|t| mean > t) {
                    break;
                }
            }
            Ok(None) => {}
            Err(e) => {
                aborted = Some((iteration, e.to_string()));
                break;
            }
        }
    }

    let iteration = rows.last().map_or(0, |r| r.iteration);
    let (hindsight, return_model, dice, psi) = match state.aux {
        Some(a) => (Some(a.hindsight), a.chi, a.phi, a.psi),
        None => (None, None, None, None),
    };
    Ok(RunOutput {
        rows,
        snapshot: Snapshot {
            config: cfg.to_text(),
            iteration,
            policy: state.policy,
            hindsight,
            return_model,
            dice,
            psi,
        },
        aux_events: state.aux_events,
        aborted,
    })
}

struct LoopState {
    policy: PolicyNet,
    opt: AdamState,
    schedule: AuxSchedule,
    aux: Option<AuxModels>,
    train_rng: ChaCha8Rng,
    aux_events: Vec<AuxEvent>,
    episodes: usize,
    steps: usize,
}

struct Partial {
    policy_loss: Option<f64>,
    value_loss: Option<f64>,
    losses: AuxLosses,
    ratio: Option<RatioStats>,
}

impl LoopState {
    fn iterate(&mut self, cfg: &RunConfig, env: &mut dyn Environment, iteration: usize, seed: u64, obs_dim: usize) -> Result<Partial> {
        let batch = collect(env, &self.policy, cfg.budget, seed, cfg.ppo.gamma)?;
        self.episodes += batch.n_trajectories();
        self.steps += batch.len();

        let mut out = Partial {
            policy_loss: None,
            value_loss: None,
            losses: AuxLosses::default(),
            ratio: None,
        };
        let (advantages, targets) = match cfg.method {
            Method::Ppo => {
                let lambda = cfg.ppo.gae_lambda.ok_or_else(|| Error::Config("ppo needs gae_lambda".into()))?;
                let (adv, targets) = gae_advantages(&batch, &self.policy, cfg.ppo.gamma, lambda)?;
                (adv, Some(targets))
            }
            _ => {
                let aux_cfg = cfg.aux.as_ref().ok_or_else(|| Error::Config("method needs aux settings".into()))?;
                let decision = self.schedule.schedule_aux_update(iteration, batch.clone())?;
                if let Some(data) = decision.training_data {
                    self.aux_events.push(AuxEvent {
                        iteration,
                        batches_used: decision.batches_used,
                        rows: data.len(),
                    });
                    let event = self.aux_events.len() as u64;
                    let init = derive_seed(cfg.seed, STREAM_AUX_INIT).wrapping_add(event << 8);
                    let (models, losses) = train_aux(cfg, &data, obs_dim, env, init, &mut self.train_rng)?;
                    self.aux = Some(models);
                    out.losses = losses;
                }
                let Some(aux) = &self.aux else {
                    // nothing to compute advantages with until the first event
                    return Ok(out);
                };
                let (adv, stats) = match (&aux.chi, &aux.phi, &aux.psi) {
                    (Some(chi), Some(phi), Some(psi)) => {
                        let z = aux_cfg.condition_on.returns(&batch);
                        hdice_advantage(phi, chi, &batch.observations, &batch.actions, &z, psi.kind())?
                    }
                    _ => hca_advantage(&self.policy, &aux.hindsight, &batch, aux_cfg.condition_on, cfg.method == Method::PpoHcaClip)?,
                };
                out.ratio = Some(stats);
                (adv, None)
            }
        };
        let stats = ppo_update(
            &mut self.policy,
            &mut self.opt,
            &batch,
            &advantages,
            targets.as_deref(),
            &cfg.ppo,
            &mut self.train_rng,
        )?;
        if !stats.policy_loss.is_finite() {
            return Err(Error::Numeric(format!("policy loss is {}", stats.policy_loss)));
        }
        out.policy_loss = Some(stats.policy_loss);
        out.value_loss = stats.value_loss;
        Ok(out)
    }
}

fn last(losses: &[f64]) -> Option<f64> {
    losses.last().copied()
}

/// Fresh auxiliary models fitted on `data`.
fn train_aux(
    cfg: &RunConfig,
    data: &RolloutBatch,
    obs_dim: usize,
    env: &dyn Environment,
    init_seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<(AuxModels, AuxLosses)> {
    let aux = cfg.aux.as_ref().expect("checked by caller");
    let space = env.contract().action_space.clone();
    let z = aux.condition_on.returns(data);
    let mut losses = AuxLosses::default();

    let mut hindsight = HindsightModel::new(obs_dim, space.clone(), &aux.hidden, init_seed)?;
    losses.hindsight = last(&train_hindsight(
        &mut hindsight,
        &data.observations,
        &data.actions,
        &z,
        &aux.train_config(aux.hindsight_epochs),
        rng,
    )?);

    let Some(d) = &aux.dice else {
        return Ok((
            AuxModels {
                hindsight,
                chi: None,
                phi: None,
                psi: None,
            },
            losses,
        ));
    };
    let mut chi = ReturnPredictor::new(obs_dim, &aux.hidden, d.normalize_targets, init_seed.wrapping_add(1))?;
    losses.return_pred = last(&train_return_predictor(&mut chi, &data.observations, &z, &aux.train_config(d.return_epochs), rng)?);

    let psi = PsiSampler::resolve(d.psi, env.contract().declared_return_range, &z)?;
    let mut phi = DiceModel::new(obs_dim, space, &aux.hidden, d.c, init_seed.wrapping_add(2))?;
    phi.fit_normalizer(&z)?;
    losses.dice = last(&train_dice(
        &mut phi,
        &chi,
        &hindsight,
        &data.observations,
        &data.actions,
        &psi,
        &aux.train_config(d.dice_epochs),
        rng,
    )?);
    if let Some(l) = losses.dice {
        if !l.is_finite() {
            return Err(Error::Numeric(format!("dice loss is {l}")));
        }
    }
    Ok((
        AuxModels {
            hindsight,
            chi: Some(chi),
            phi: Some(phi),
            psi: Some(psi),
        },
        losses,
    ))
}
