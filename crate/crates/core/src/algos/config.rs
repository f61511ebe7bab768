use serde::{Deserialize, Serialize};

use crate::diffcore::Activation;
use crate::policy::StdMode;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Opac2,
    Copac2,
    Sac,
    Td3,
    SacConstrained,
    Td3Constrained,
}

impl Algorithm {
    pub fn is_constrained(self) -> bool {
        matches!(self, Algorithm::Copac2 | Algorithm::SacConstrained | Algorithm::Td3Constrained)
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Opac2 => "opac2",
            Algorithm::Copac2 => "copac2",
            Algorithm::Sac => "sac",
            Algorithm::Td3 => "td3",
            Algorithm::SacConstrained => "sac_constrained",
            Algorithm::Td3Constrained => "td3_constrained",
        }
    }

    /// tanh for the actor-critic family, relu for SAC/TD3.
    pub fn default_activation(self) -> Activation {
        match self {
            Algorithm::Opac2 | Algorithm::Copac2 => Activation::Tanh,
            _ => Activation::Relu,
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Algorithm::Opac2,
            Algorithm::Copac2,
            Algorithm::Sac,
            Algorithm::Td3,
            Algorithm::SacConstrained,
            Algorithm::Td3Constrained,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown algorithm {s:?}")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How policy entropy enters the actor-critic updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMode {
    /// `alpha * log pi(a_rp|s)` added to the policy loss.
    Bonus,
    /// `-alpha * log pi` folded into the value regression target.
    MaxEntropy,
    None,
}

impl std::str::FromStr for EntropyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bonus" => Ok(EntropyMode::Bonus),
            "max_entropy" => Ok(EntropyMode::MaxEntropy),
            "none" => Ok(EntropyMode::None),
            other => Err(Error::Config(format!("unknown entropy mode {other:?}"))),
        }
    }
}

/// Hyperparameters shared by every agent. Algorithm-specific fields are
/// ignored by the agents that do not use them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    /// Polyak coefficient: `target <- rho * target + (1 - rho) * main`.
    pub rho: f64,
    pub batch_size: usize,
    pub target_update_interval: u64,
    pub initial_exploration_steps: u64,
    /// Shared by policy, Q and V optimizers.
    pub learning_rate: f64,
    pub alpha_learning_rate: f64,
    pub beta_learning_rate: f64,
    pub entropy_mode: EntropyMode,
    pub reset_interval: Option<u64>,
    pub n_cost_critics: usize,
    pub independent_batches: bool,
    pub gradient_steps: usize,
    pub replay_capacity: usize,
    pub hidden_dims: Vec<usize>,
    /// `None` picks the algorithm default.
    pub activation: Option<Activation>,
    /// `None` picks state-independent for the actor-critic family.
    pub std_mode: Option<StdMode>,
    pub initial_alpha: f64,
    /// `None` means `-(action dimension)`.
    pub target_entropy: Option<f64>,
    pub initial_beta: f64,
    pub freeze_beta: bool,
    /// Cost limit `M` for constrained agents.
    pub cost_limit: Option<f64>,
    /// Environment steps per cost-accounting epoch.
    pub epoch_len: u64,
    pub policy_delay: u64,
    pub target_noise: f64,
    pub noise_clip: f64,
    pub exploration_noise: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            rho: 0.995,
            batch_size: 256,
            target_update_interval: 1,
            initial_exploration_steps: 10_000,
            learning_rate: 1e-4,
            alpha_learning_rate: 5e-4,
            beta_learning_rate: 5e-6,
            entropy_mode: EntropyMode::Bonus,
            reset_interval: None,
            n_cost_critics: 1,
            independent_batches: false,
            gradient_steps: 1,
            replay_capacity: 1_000_000,
            hidden_dims: vec![256, 256],
            activation: None,
            std_mode: None,
            initial_alpha: 1.0,
            target_entropy: None,
            initial_beta: 0.0,
            freeze_beta: false,
            cost_limit: None,
            epoch_len: 10_000,
            policy_delay: 2,
            target_noise: 0.2,
            noise_clip: 0.5,
            exploration_noise: 0.1,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.alpha_learning_rate > 0.0 && self.beta_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.target_update_interval == 0 || self.policy_delay == 0 || self.epoch_len == 0 {
            return bad("batch size, target interval, policy delay and epoch length must be positive");
        }
        if !(1..=2).contains(&self.n_cost_critics) {
            return bad("n_cost_critics must be 1 or 2");
        }
        if self.reset_interval == Some(0) {
            return bad("reset interval must be positive");
        }
        if !(self.initial_alpha > 0.0) || self.initial_beta < 0.0 {
            return bad("initial alpha must be positive and initial beta nonnegative");
        }
        if let Some(m) = self.cost_limit {
            if !(m > 0.0) {
                return bad("cost limit M must be positive");
            }
        }
        Ok(())
    }

    pub fn activation_for(&self, algo: Algorithm) -> Activation {
        self.activation.unwrap_or_else(|| algo.default_activation())
    }

    pub fn std_mode_for(&self, algo: Algorithm) -> StdMode {
        self.std_mode.unwrap_or(match algo {
            Algorithm::Opac2 | Algorithm::Copac2 => StdMode::StateIndependent,
            _ => StdMode::StateDependent,
        })
    }
}
