//! Flat `key = value` experiment configuration.
//!
//! Grammar: one `key = value` pair per line; `#` starts a comment; blank
//! lines are ignored. Lists are comma separated (`seeds = 0,1,2`,
//! `hidden_dims = 32,32`). Optional values accept `none`. Later assignments
//! win, so command-line overrides are applied as extra lines.

use std::fmt::Write as _;
use std::path::Path;

use crate::algos::{AgentConfig, Algorithm, EntropyMode};
use crate::envs::{NavConfig, PenaltyPreset, PendulumConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    NavMixed,
    Pendulum,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::NavMixed => "nav_mixed",
            EnvKind::Pendulum => "pendulum",
        }
    }
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nav_mixed" => Ok(EnvKind::NavMixed),
            "pendulum" => Ok(EnvKind::Pendulum),
            other => Err(Error::Config(format!("unknown environment {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub env: EnvKind,
    /// Per-step cost weight folded into the reward of unconstrained runs.
    pub penalty_weight: f64,
    pub total_env_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    /// Checkpoint compared with the first one by the cost-adjustment ratio.
    pub early_step: u64,
    pub nav: NavConfig,
    pub pendulum: PendulumConfig,
    pub agent: AgentConfig,
}

impl Default for ExperimentConfig {
    /// Desk-scale protocol.
    fn default() -> Self {
        let agent = AgentConfig {
            batch_size: 64,
            hidden_dims: vec![32, 32],
            initial_exploration_steps: 1_000,
            replay_capacity: 150_000,
            learning_rate: 3e-4,
            beta_learning_rate: 5e-5,
            epoch_len: 5_000,
            ..AgentConfig::default()
        };
        Self {
            algorithm: Algorithm::Opac2,
            env: EnvKind::NavMixed,
            penalty_weight: PenaltyPreset::Small.weight(),
            total_env_steps: 150_000,
            eval_interval: 5_000,
            eval_episodes: 5,
            seeds: vec![0, 1, 2, 3, 4],
            early_step: 30_000,
            nav: NavConfig::default(),
            pendulum: PendulumConfig::default(),
            agent,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|v| parse(key, v.trim()))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad value {value:?} for {key}"))),
    }
}

fn opt_text<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let a = &mut self.agent;
        let n = &mut self.nav;
        match key {
            "algorithm" => self.algorithm = parse(key, value)?,
            "env" => self.env = parse(key, value)?,
            "penalty" | "penalty_weight" => {
                self.penalty_weight = match value.parse::<PenaltyPreset>() {
                    Ok(p) => p.weight(),
                    Err(_) => parse(key, value)?,
                }
            }
            "cost_limit" => a.cost_limit = parse_optional(key, value)?,
            "total_env_steps" => self.total_env_steps = parse(key, value)?,
            "eval_interval" => self.eval_interval = parse(key, value)?,
            "eval_episodes" => self.eval_episodes = parse(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "early_step" => self.early_step = parse(key, value)?,
            "gamma" => a.gamma = parse(key, value)?,
            "rho" => a.rho = parse(key, value)?,
            "batch_size" => a.batch_size = parse(key, value)?,
            "target_update_interval" => a.target_update_interval = parse(key, value)?,
            "initial_exploration_steps" => a.initial_exploration_steps = parse(key, value)?,
            "learning_rate" => a.learning_rate = parse(key, value)?,
            "alpha_learning_rate" => a.alpha_learning_rate = parse(key, value)?,
            "beta_learning_rate" => a.beta_learning_rate = parse(key, value)?,
            "entropy_mode" => a.entropy_mode = parse::<EntropyMode>(key, value)?,
            "reset_interval" => a.reset_interval = parse_optional(key, value)?,
            "n_cost_critics" => a.n_cost_critics = parse(key, value)?,
            "independent_batches" => a.independent_batches = parse_bool(key, value)?,
            "gradient_steps" => a.gradient_steps = parse(key, value)?,
            "replay_capacity" => a.replay_capacity = parse(key, value)?,
            "hidden_dims" => a.hidden_dims = parse_list(key, value)?,
            "activation" => a.activation = parse_optional(key, value)?,
            "std_mode" => a.std_mode = parse_optional(key, value)?,
            "initial_alpha" => a.initial_alpha = parse(key, value)?,
            "target_entropy" => a.target_entropy = parse_optional(key, value)?,
            "initial_beta" => a.initial_beta = parse(key, value)?,
            "freeze_beta" => a.freeze_beta = parse_bool(key, value)?,
            "epoch_len" => a.epoch_len = parse(key, value)?,
            "policy_delay" => a.policy_delay = parse(key, value)?,
            "target_noise" => a.target_noise = parse(key, value)?,
            "noise_clip" => a.noise_clip = parse(key, value)?,
            "exploration_noise" => a.exploration_noise = parse(key, value)?,
            "n_hazards" => n.n_hazards = parse(key, value)?,
            "hazard_radius" => n.hazard_radius = parse(key, value)?,
            "arena_half_width" => n.arena_half_width = parse(key, value)?,
            "goal_radius" => n.goal_radius = parse(key, value)?,
            "episode_len" => {
                n.episode_len = parse(key, value)?;
                self.pendulum.episode_len = n.episode_len;
            }
            "k_nearest" => n.k_nearest = parse(key, value)?,
            "dense_weight" => n.dense_weight = parse(key, value)?,
            "goal_bonus" => n.goal_bonus = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        self.nav.validate()?;
        if self.eval_interval == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("eval_interval and eval_episodes must be positive".into()));
        }
        if self.algorithm.is_constrained() {
            if self.agent.cost_limit.is_none() {
                return Err(Error::Config(format!(
                    "{} requires cost_limit (M > 0)",
                    self.algorithm
                )));
            }
        } else if !(self.penalty_weight >= 0.0) {
            return Err(Error::Config("penalty_weight must be nonnegative".into()));
        }
        Ok(())
    }

    /// Navigation settings with the penalty and reward mode of this run.
    pub fn nav_config(&self) -> NavConfig {
        NavConfig {
            penalty_weight: self.penalty_weight,
            constrained: self.algorithm.is_constrained(),
            ..self.nav.clone()
        }
    }

    /// Serializes every key in the same grammar `from_text` accepts.
    pub fn to_text(&self) -> String {
        let a = &self.agent;
        let n = &self.nav;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("algorithm", self.algorithm.to_string());
        kv("env", self.env.name().to_string());
        kv("penalty_weight", format!("{:?}", self.penalty_weight));
        kv("cost_limit", opt_text(&a.cost_limit));
        kv("total_env_steps", self.total_env_steps.to_string());
        kv("eval_interval", self.eval_interval.to_string());
        kv("eval_episodes", self.eval_episodes.to_string());
        kv("seeds", join(&self.seeds));
        kv("early_step", self.early_step.to_string());
        kv("gamma", a.gamma.to_string());
        kv("rho", a.rho.to_string());
        kv("batch_size", a.batch_size.to_string());
        kv("target_update_interval", a.target_update_interval.to_string());
        kv("initial_exploration_steps", a.initial_exploration_steps.to_string());
        kv("learning_rate", a.learning_rate.to_string());
        kv("alpha_learning_rate", a.alpha_learning_rate.to_string());
        kv("beta_learning_rate", a.beta_learning_rate.to_string());
        kv(
            "entropy_mode",
            match a.entropy_mode {
                EntropyMode::Bonus => "bonus",
                EntropyMode::MaxEntropy => "max_entropy",
                EntropyMode::None => "none",
            }
            .to_string(),
        );
        kv("reset_interval", opt_text(&a.reset_interval));
        kv("n_cost_critics", a.n_cost_critics.to_string());
        kv("independent_batches", a.independent_batches.to_string());
        kv("gradient_steps", a.gradient_steps.to_string());
        kv("replay_capacity", a.replay_capacity.to_string());
        kv("hidden_dims", join(&a.hidden_dims));
        kv("activation", opt_text(&a.activation));
        kv("std_mode", opt_text(&a.std_mode));
        kv("initial_alpha", a.initial_alpha.to_string());
        kv("target_entropy", opt_text(&a.target_entropy));
        kv("initial_beta", a.initial_beta.to_string());
        kv("freeze_beta", a.freeze_beta.to_string());
        kv("epoch_len", a.epoch_len.to_string());
        kv("policy_delay", a.policy_delay.to_string());
        kv("target_noise", a.target_noise.to_string());
        kv("noise_clip", a.noise_clip.to_string());
        kv("exploration_noise", a.exploration_noise.to_string());
        kv("n_hazards", n.n_hazards.to_string());
        kv("hazard_radius", n.hazard_radius.to_string());
        kv("arena_half_width", n.arena_half_width.to_string());
        kv("goal_radius", n.goal_radius.to_string());
        kv("episode_len", n.episode_len.to_string());
        kv("k_nearest", n.k_nearest.to_string());
        kv("dense_weight", n.dense_weight.to_string());
        kv("goal_bonus", n.goal_bonus.to_string());
        s
    }
}
