//! Desk-scale environments.
//!
//! [`nav`] is a randomized point-mass navigation task whose reward mixes a
//! positive incentive (goal progress plus a goal bonus) with a hazard cost;
//! [`pendulum`] is a plain-reward swing-up task with no cost signal.

pub mod nav;
pub mod pendulum;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use nav::{
    nav_observe, nav_reset, nav_step, NavConfig, NavEnv, NavLayout, NavState, PenaltyPreset,
};
pub use pendulum::{pendulum_reset, pendulum_step, PendulumConfig, PendulumEnv, PendulumState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub episode_len: usize,
}

/// Output of one environment step.
///
/// `reward` is what the learner optimizes: in unconstrained navigation it is
/// `incentive - penalty_weight * cost`, in constrained mode it equals
/// `incentive`. `done` marks the end of the episode (step limit);
/// `terminal` marks a true terminal state and is what gets stored as the
/// transition's termination flag.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    pub incentive: f64,
    pub done: bool,
    pub terminal: bool,
}

pub trait Environment {
    fn spec(&self) -> EnvSpec;
    fn reset(&mut self) -> Result<Vec<f64>>;
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

pub(crate) fn check_action(action: &[f64], act_dim: usize) -> Result<()> {
    if action.len() != act_dim {
        return Err(Error::Dimension {
            context: "action",
            expected: act_dim,
            got: action.len(),
        });
    }
    if let Some(a) = action.iter().find(|a| !(a.abs() <= 1.0)) {
        return Err(Error::State(format!(
            "action component {a} outside [-1, 1]"
        )));
    }
    Ok(())
}
