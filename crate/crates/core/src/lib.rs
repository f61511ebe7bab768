//! Off-policy actor-critic laboratory for continuous control with mixed-sign
//! rewards.
//!
//! The crate bundles everything needed to train and compare four agents on
//! small in-repo environments:
//!
//! * [`diffcore`]: a small reverse-mode MLP core with Adam, Polyak averaging
//!   and parameter resets.
//! * [`policy`]: tanh-squashed diagonal Gaussian policies and the learned
//!   entropy temperature.
//! * [`replay`]: ring-buffer replay plus held-out validation episodes.
//! * [`envs`]: a hazard-laden point-navigation task and a pendulum swing-up.
//! * [`algos`]: OPAC², C-OPAC², SAC and TD3 (with constrained variants) and the
//!   shared training step.
//! * [`diagnostics`]: validation TD error, Q-estimation error, the
//!   cost-adjustment ratio, IQM and performance profiles.
//! * [`harness`]: experiment configuration, the train/evaluate loop, metrics
//!   files and multi-seed aggregation.

pub mod algos;
pub mod diagnostics;
pub mod diffcore;
pub mod envs;
mod error;
pub mod harness;
pub mod policy;
pub mod replay;
pub mod seeding;

pub use error::{Error, Result};
