//! Agents: the single-critic actor-critic (with its constrained extension),
//! SAC and TD3, plus resetting and the environment-interaction loop.

mod agent;
pub mod config;
pub mod losses;
pub mod opac2;
pub mod sac;
pub mod td3;
mod trainer;

pub use agent::{Agent, AgentKind};
pub use config::{AgentConfig, Algorithm, EntropyMode};
pub use opac2::{CostCritics, Opac2Agent};
pub use sac::SacAgent;
pub use td3::Td3Agent;
pub use trainer::{EpisodeTotals, EpochCostLog, Trainer};

use crate::replay::TransitionBatch;
use crate::{Error, Result};

/// Lagrangian penalty state of a constrained agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Lagrange {
    pub beta: f64,
    pub cost_limit: f64,
    pub learning_rate: f64,
    pub frozen: bool,
}

impl Lagrange {
    /// `Some` for constrained algorithms, which must have a cost limit.
    pub fn from_config(algorithm: Algorithm, cfg: &AgentConfig) -> Result<Option<Self>> {
        if !algorithm.is_constrained() {
            return Ok(None);
        }
        let cost_limit = cfg.cost_limit.ok_or_else(|| {
            Error::Config(format!("{algorithm} needs a cost limit (cost_limit)"))
        })?;
        Ok(Some(Self {
            beta: cfg.initial_beta,
            cost_limit,
            learning_rate: cfg.beta_learning_rate,
            frozen: cfg.freeze_beta,
        }))
    }

    pub fn update(&mut self, episode_cost: Option<f64>) {
        if !self.frozen {
            self.beta = losses::update_beta(self.beta, self.cost_limit, self.learning_rate, episode_cost);
        }
    }
}

/// Minibatches for one gradient step: either one batch shared by every
/// loss, or separate batches for the Q, V and policy losses.
#[derive(Debug, Clone)]
pub struct Batches {
    parts: Vec<TransitionBatch>,
}

impl Batches {
    pub fn shared(batch: TransitionBatch) -> Self {
        Self { parts: vec![batch] }
    }

    pub fn independent(q: TransitionBatch, v: TransitionBatch, policy: TransitionBatch) -> Self {
        Self {
            parts: vec![q, v, policy],
        }
    }

    pub fn q(&self) -> &TransitionBatch {
        &self.parts[0]
    }

    pub fn v(&self) -> &TransitionBatch {
        &self.parts[1 % self.parts.len()]
    }

    pub fn policy(&self) -> &TransitionBatch {
        &self.parts[2 % self.parts.len()]
    }

    pub fn is_shared(&self) -> bool {
        self.parts.len() == 1
    }
}
