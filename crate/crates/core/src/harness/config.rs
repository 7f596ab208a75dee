//! Flat `key = value` run configuration.
//!
//! Keys that do not apply to the chosen method are rejected rather than
//! ignored, and [`RunConfig::to_text`] writes every resolved key in a fixed
//! order so that parsing the echo gives back an identical config.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::hdice::PsiKind;
use crate::hindsight::{AuxTrainConfig, ConditionOn};
use crate::ppo::PpoConfig;
use crate::rollout::Budget;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ppo,
    PpoHca,
    PpoHcaClip,
    Hdice,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ppo, Method::PpoHca, Method::PpoHcaClip, Method::Hdice];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ppo => "ppo",
            Method::PpoHca => "ppo-hca",
            Method::PpoHcaClip => "ppo-hca-clip",
            Method::Hdice => "hdice",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiceSettings {
    pub c: f64,
    pub psi: PsiKind,
    pub return_epochs: usize,
    pub dice_epochs: usize,
    pub normalize_targets: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxSettings {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    pub max_grad_norm: Option<f64>,
    pub hindsight_epochs: usize,
    pub schedule_n: usize,
    pub condition_on: ConditionOn,
    /// Present for hdice only.
    pub dice: Option<DiceSettings>,
}

impl AuxSettings {
    pub fn train_config(&self, epochs: usize) -> AuxTrainConfig {
        AuxTrainConfig {
            epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            max_grad_norm: self.max_grad_norm,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Environment id without the `+delayed` suffix.
    pub env: String,
    pub delayed: bool,
    pub method: Method,
    pub seed: u64,
    pub total_iterations: usize,
    pub budget: Budget,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub record_wall_time: bool,
    /// End the run after the first evaluation whose mean return exceeds this.
    pub stop_above: Option<f64>,
    pub policy_hidden: Vec<usize>,
    pub ppo: PpoConfig,
    /// Absent for vanilla PPO.
    pub aux: Option<AuxSettings>,
}

fn is_pointmass(env: &str) -> bool {
    env == "pointmass"
}

impl RunConfig {
    /// Per-environment defaults. Continuous control follows the step-budgeted
    /// table; every other environment follows the GridWorld table.
    pub fn defaults(env: &str, method: Method) -> Result<Self> {
        let (env, delayed) = match env.strip_suffix("+delayed") {
            Some(base) => (base, true),
            None => (env, true),
        };
        if env.is_empty() {
            return Err(Error::Config("empty env id".into()));
        }
        let pm = is_pointmass(env);
        let is_ppo = method == Method::Ppo;
        let ppo = PpoConfig {
            lr: if pm && method == Method::PpoHca { 3e-5 } else { 3e-4 },
            clip_eps: 0.2,
            ppo_epochs: if pm { 80 } else { 30 },
            entropy_coef: if pm { 0.01 } else { 0.1 },
            value_loss_coef: is_ppo.then_some(if pm { 0.5 } else { 1e-4 }),
            gae_lambda: is_ppo.then_some(0.95),
            gamma: 0.99,
            minibatch_size: 256,
            max_grad_norm: pm.then_some(0.5),
            normalize_advantages: is_ppo,
        };
        let aux = (!is_ppo).then(|| AuxSettings {
            hidden: vec![128, 128],
            lr: 3e-4,
            batch_size: 256,
            max_grad_norm: Some(10.0),
            hindsight_epochs: 10,
            schedule_n: 1,
            condition_on: ConditionOn::ReturnToGo,
            dice: (method == Method::Hdice).then_some(DiceSettings {
                c: 1.0,
                psi: PsiKind::Uniform,
                return_epochs: 10,
                dice_epochs: 10,
                normalize_targets: true,
            }),
        });
        Ok(Self {
            env: env.to_string(),
            delayed,
            method,
            seed: 0,
            total_iterations: 100,
            budget: if pm { Budget::Steps(6144) } else { Budget::Episodes(50) },
            eval_every: 1,
            eval_episodes: 10,
            record_wall_time: false,
            stop_above: None,
            policy_hidden: if pm { vec![128, 128, 128] } else { vec![64, 64] },
            ppo,
            aux,
        })
    }

    pub fn env_id(&self) -> String {
        if self.delayed {
            format!("{}+delayed", self.env)
        } else {
            self.env.clone()
        }
    }

    /// Parses a config file body, then applies `--key=value` overrides.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut pairs = parse_pairs(text)?;
        for o in overrides {
            let (k, v) = parse_override(o)?;
            pairs.insert(k, v);
        }
        Self::from_pairs(&pairs)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let env = pairs.get("env").ok_or_else(|| Error::Config("missing key 'env'".into()))?;
        let method = Method::parse(pairs.get("method").ok_or_else(|| Error::Config("missing key 'method'".into()))?)?;
        let mut cfg = Self::defaults(env, method)?;
        for (k, v) in pairs {
            if k != "env" && k != "method" {
                cfg.apply(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let method = self.method;
        let absent = || Error::Config(format!("key '{key}' does not apply to method {}", method.name()));
        match key {
            "delayed" => self.delayed = parse_bool(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "total_iterations" => self.total_iterations = parse_num(key, value)?,
            "episodes_per_update" => self.budget = Budget::Episodes(parse_num(key, value)?),
            "steps_per_update" => self.budget = Budget::Steps(parse_num(key, value)?),
            "eval_every" => self.eval_every = parse_num(key, value)?,
            "eval_episodes" => self.eval_episodes = parse_num(key, value)?,
            "record_wall_time" => self.record_wall_time = parse_bool(key, value)?,
            "stop_above" => self.stop_above = parse_opt(key, value)?,
            "policy_hidden" => self.policy_hidden = parse_list(key, value)?,
            "lr" => self.ppo.lr = parse_num(key, value)?,
            "clip_eps" => self.ppo.clip_eps = parse_num(key, value)?,
            "ppo_epochs" => self.ppo.ppo_epochs = parse_num(key, value)?,
            "entropy_coef" => self.ppo.entropy_coef = parse_num(key, value)?,
            "gamma" => self.ppo.gamma = parse_num(key, value)?,
            "minibatch_size" => self.ppo.minibatch_size = parse_num(key, value)?,
            "max_grad_norm" => self.ppo.max_grad_norm = parse_opt(key, value)?,
            "normalize_advantages" => self.ppo.normalize_advantages = parse_bool(key, value)?,
            "value_loss_coef" => *self.ppo.value_loss_coef.as_mut().ok_or_else(absent)? = parse_num(key, value)?,
            "gae_lambda" => *self.ppo.gae_lambda.as_mut().ok_or_else(absent)? = parse_num(key, value)?,
            _ => {
                let aux = self.aux.as_mut().ok_or_else(absent)?;
                match key {
                    "aux_hidden" => aux.hidden = parse_list(key, value)?,
                    "aux_lr" => aux.lr = parse_num(key, value)?,
                    "aux_batch_size" => aux.batch_size = parse_num(key, value)?,
                    "aux_max_grad_norm" => aux.max_grad_norm = parse_opt(key, value)?,
                    "hindsight_epochs" => aux.hindsight_epochs = parse_num(key, value)?,
                    "schedule_n" => aux.schedule_n = parse_num(key, value)?,
                    "condition_on" => aux.condition_on = ConditionOn::parse(value)?,
                    _ => {
                        let dice = aux.dice.as_mut().ok_or_else(absent)?;
                        match key {
                            "dice_c" => dice.c = parse_num(key, value)?,
                            "psi" => dice.psi = PsiKind::parse(value)?,
                            "return_epochs" => dice.return_epochs = parse_num(key, value)?,
                            "dice_epochs" => dice.dice_epochs = parse_num(key, value)?,
                            "normalize_targets" => dice.normalize_targets = parse_bool(key, value)?,
                            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.ppo.validate()?;
        if self.total_iterations == 0 || self.eval_every == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("total_iterations, eval_every and eval_episodes must be positive".into()));
        }
        if self.stop_above.is_some_and(f64::is_nan) {
            return Err(Error::Config("stop_above must be a number".into()));
        }
        match self.budget {
            Budget::Episodes(0) | Budget::Steps(0) => return Err(Error::Config("empty collection budget".into())),
            _ => {}
        }
        if self.policy_hidden.is_empty() || self.policy_hidden.contains(&0) {
            return Err(Error::Config("policy_hidden needs positive widths".into()));
        }
        if let Some(aux) = &self.aux {
            if !(aux.lr > 0.0) || aux.batch_size == 0 || aux.schedule_n == 0 || aux.hidden.contains(&0) {
                return Err(Error::Config("aux_lr, aux_batch_size, schedule_n and aux_hidden must be positive".into()));
            }
            if let Some(d) = &aux.dice {
                if !(d.c > 0.0 && d.c.is_finite()) {
                    return Err(Error::Config(format!("dice_c must be positive, got {}", d.c)));
                }
            }
        }
        Ok(())
    }

    /// Canonical echo: every resolved key, fixed order, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("env", self.env.clone());
        put("delayed", self.delayed.to_string());
        put("method", self.method.name().into());
        put("seed", self.seed.to_string());
        put("total_iterations", self.total_iterations.to_string());
        match self.budget {
            Budget::Episodes(n) => put("episodes_per_update", n.to_string()),
            Budget::Steps(n) => put("steps_per_update", n.to_string()),
        }
        put("eval_every", self.eval_every.to_string());
        put("eval_episodes", self.eval_episodes.to_string());
        put("record_wall_time", self.record_wall_time.to_string());
        if let Some(t) = self.stop_above {
            put("stop_above", t.to_string());
        }
        put("policy_hidden", join(&self.policy_hidden));
        put("lr", self.ppo.lr.to_string());
        put("clip_eps", self.ppo.clip_eps.to_string());
        put("ppo_epochs", self.ppo.ppo_epochs.to_string());
        put("entropy_coef", self.ppo.entropy_coef.to_string());
        put("gamma", self.ppo.gamma.to_string());
        put("minibatch_size", self.ppo.minibatch_size.to_string());
        if let Some(g) = self.ppo.max_grad_norm {
            put("max_grad_norm", g.to_string());
        }
        put("normalize_advantages", self.ppo.normalize_advantages.to_string());
        if let Some(v) = self.ppo.value_loss_coef {
            put("value_loss_coef", v.to_string());
        }
        if let Some(l) = self.ppo.gae_lambda {
            put("gae_lambda", l.to_string());
        }
        if let Some(aux) = &self.aux {
            put("aux_hidden", join(&aux.hidden));
            put("aux_lr", aux.lr.to_string());
            put("aux_batch_size", aux.batch_size.to_string());
            if let Some(g) = aux.max_grad_norm {
                put("aux_max_grad_norm", g.to_string());
            }
            put("hindsight_epochs", aux.hindsight_epochs.to_string());
            put("schedule_n", aux.schedule_n.to_string());
            put("condition_on", aux.condition_on.name().into());
            if let Some(d) = &aux.dice {
                put("dice_c", d.c.to_string());
                put("psi", d.psi.name().into());
                put("return_epochs", d.return_epochs.to_string());
                put("dice_epochs", d.dice_epochs.to_string());
                put("normalize_targets", d.normalize_targets.to_string());
            }
        }
        out
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

/// `key = value` lines; `#` starts a comment; duplicate keys are errors.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            column: 1,
            message: "expected 'key = value'".into(),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Parse {
                line: i + 1,
                column: 1,
                message: "empty key".into(),
            });
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Parse {
                line: i + 1,
                column: 1,
                message: format!("duplicate key '{k}'"),
            });
        }
    }
    Ok(out)
}

pub fn parse_override(arg: &str) -> Result<(String, String)> {
    let body = arg
        .strip_prefix("--")
        .ok_or_else(|| Error::Config(format!("override '{arg}' must look like --key=value")))?;
    let (k, v) = body
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{arg}' must look like --key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    parse_num(key, value)
}

fn parse_opt(key: &str, value: &str) -> Result<Option<f64>> {
    if value == "none" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|p| parse_num(key, p.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gridworld_defaults() {
        let c = RunConfig::parse("env = gridworld-v1\nmethod = ppo\n").unwrap();
        assert_eq!(c.ppo.entropy_coef, 0.1);
        assert_eq!(c.ppo.value_loss_coef, Some(1e-4));
        assert_eq!(c.ppo.gae_lambda, Some(0.95));
        assert_eq!(c.ppo.ppo_epochs, 30);
        assert_eq!(c.ppo.max_grad_norm, None);
        assert_eq!(c.budget, Budget::Episodes(50));
        assert!(c.aux.is_none());
        let h = RunConfig::parse("env = gridworld-v1\nmethod = hdice\n").unwrap();
        assert_eq!(h.ppo.value_loss_coef, None);
        let aux = h.aux.unwrap();
        assert_eq!((aux.lr, aux.batch_size, aux.max_grad_norm), (3e-4, 256, Some(10.0)));
        assert!(aux.dice.unwrap().normalize_targets);
    }

    #[test]
    fn pointmass_defaults() {
        let c = RunConfig::parse("env = pointmass\nmethod = ppo-hca\n").unwrap();
        assert_eq!(c.ppo.lr, 3e-5);
        assert_eq!(c.budget, Budget::Steps(6144));
        assert_eq!(c.ppo.max_grad_norm, Some(0.5));
        let c = RunConfig::parse("env = pointmass\nmethod = ppo-hca-clip\n").unwrap();
        assert_eq!(c.ppo.lr, 3e-4);
    }

    #[test]
    fn method_specific_keys_rejected() {
        assert!(RunConfig::parse("env = gridworld-v1\nmethod = hdice\nvalue_loss_coef = 0.5\n").is_err());
        assert!(RunConfig::parse("env = gridworld-v1\nmethod = ppo\ndice_c = 2\n").is_err());
        assert!(RunConfig::parse("env = gridworld-v1\nmethod = ppo-hca\npsi = uniform\n").is_err());
        assert!(RunConfig::parse("env = gridworld-v1\nmethod = ppo\nbogus = 1\n").is_err());
        assert!(RunConfig::parse("env = gridworld-v1\nmethod = ppo\nseed = 1\nseed = 2\n").is_err());
    }

    #[test]
    fn echo_round_trips() {
        for m in Method::ALL {
            let text = format!("env = gridworld-v2\nmethod = {}\nseed = 7\n", m.name());
            let c = RunConfig::parse_with_overrides(&text, &["--lr=0.001".into(), "--total_iterations=3".into()]).unwrap();
            assert_eq!(c.ppo.lr, 0.001);
            let echo = c.to_text();
            let back = RunConfig::parse(&echo).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_text(), echo);
        }
    }

    #[test]
    fn parse_errors_carry_lines() {
        match parse_pairs("env = x\nnot a pair\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_override("lr=1").is_err());
    }

    #[test]
    fn delayed_suffix() {
        let c = RunConfig::parse("env = gridworld-v1+delayed\nmethod = ppo\ndelayed = false\n").unwrap();
        assert_eq!(c.env_id(), "gridworld-v1");
        let c = RunConfig::parse("env = gridworld-v1\nmethod = ppo\n").unwrap();
        assert_eq!(c.env_id(), "gridworld-v1+delayed");
    }
}
