//! Measurement battery: validation TD error, Q-estimation error against
//! discounted Monte Carlo returns, the early-training cost-adjustment ratio,
//! interquartile means and performance profiles.

use serde::{Deserialize, Serialize};

use crate::algos::Agent;
use crate::diffcore::Matrix;
use crate::replay::{TransitionBatch, ValidationEpisode, ValidationSet};
use crate::seeding::Rng;
use crate::{Error, Result};

/// Reward, cost and incentive traces of one evaluation episode.
pub type EvalEpisode = ValidationEpisode;

/// Root mean square, summed left to right.
pub fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for v in values {
        s += v * v;
    }
    (s / values.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdErrors {
    pub reward: f64,
    pub cost: Option<f64>,
}

/// RMS of the agent's own Bellman residuals over every validation
/// transition. Twin-critic agents pool the residuals of both critics.
pub fn validation_td_error(agent: &Agent, val: &ValidationSet, rng: &mut Rng) -> Result<TdErrors> {
    if val.is_empty() {
        return Err(Error::State("validation set is empty".into()));
    }
    let batch = TransitionBatch::from_transitions(val.transitions())?;
    let (reward, cost) = agent.td_residuals(&batch, rng)?;
    Ok(TdErrors {
        reward: rms(&reward),
        cost: cost.map(|c| rms(&c)),
    })
}

/// `sum_t gamma^t r_t`
pub fn mc_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut g = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        g += discount * r;
        discount *= gamma;
    }
    g
}

/// Mean of `Q(s_t, a_t) - G_t` over all validation steps, where `G_t` is the
/// discounted return from `t` to the end of the episode. Negative means
/// underestimation.
pub fn q_estimation_error(agent: &Agent, val: &ValidationSet, gamma: f64) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::State("validation set is empty".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for ep in &val.episodes {
        if ep.transitions.is_empty() {
            continue;
        }
        let dim_s = ep.transitions[0].obs.len();
        let dim_a = ep.transitions[0].action.len();
        let obs = Matrix::from_rows(dim_s, ep.transitions.iter().map(|t| t.obs.as_slice()))?;
        let act = Matrix::from_rows(dim_a, ep.transitions.iter().map(|t| t.action.as_slice()))?;
        let q = agent.q_values(&obs, &act)?;
        for (t, qt) in q.iter().enumerate() {
            total += qt - mc_return(&ep.rewards[t..], gamma);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Cost-adjustment ratio, or `None` when the incentive barely moved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostAdjustment {
    pub ratio: Option<f64>,
    pub cost_start: f64,
    pub cost_early: f64,
    pub incentive_start: f64,
    pub incentive_early: f64,
}

pub const RATIO_DENOMINATOR_FLOOR: f64 = 1e-9;

/// `(cost_start - cost_early) / (incentive_start - incentive_early)`.
pub fn cost_adjustment_ratio_from(
    cost_start: f64,
    cost_early: f64,
    incentive_start: f64,
    incentive_early: f64,
) -> CostAdjustment {
    let denom = incentive_start - incentive_early;
    CostAdjustment {
        ratio: (denom.abs() >= RATIO_DENOMINATOR_FLOOR).then(|| (cost_start - cost_early) / denom),
        cost_start,
        cost_early,
        incentive_start,
        incentive_early,
    }
}

/// One evaluation checkpoint of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub env_step: u64,
    pub reward: f64,
    pub incentive: f64,
    pub cost: f64,
    pub td_error: f64,
    pub td_error_cost: Option<f64>,
    pub q_error: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub resets: u64,
}

/// Final-window means of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalWindow {
    pub reward: f64,
    pub incentive: f64,
    pub cost: f64,
    pub checkpoints: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub records: Vec<MetricsRecord>,
}

impl RunSummary {
    pub fn new(records: Vec<MetricsRecord>) -> Result<Self> {
        if records.windows(2).any(|w| w[0].env_step >= w[1].env_step) {
            return Err(Error::Alignment("checkpoints must be strictly increasing".into()));
        }
        Ok(Self { records })
    }

    /// Means over the last `fraction` of checkpoints (at least one).
    pub fn final_window(&self, fraction: f64) -> Option<FinalWindow> {
        let n = self.records.len();
        if n == 0 {
            return None;
        }
        let k = ((n as f64 * fraction).ceil() as usize).clamp(1, n);
        let tail = &self.records[n - k..];
        let mean = |f: fn(&MetricsRecord) -> f64| tail.iter().map(f).sum::<f64>() / k as f64;
        Some(FinalWindow {
            reward: mean(|r| r.reward),
            incentive: mean(|r| r.incentive),
            cost: mean(|r| r.cost),
            checkpoints: k,
        })
    }

    /// Compares the first checkpoint with the latest one at or before
    /// `early_step`.
    pub fn cost_adjustment_ratio(&self, early_step: u64) -> Result<CostAdjustment> {
        let start = self
            .records
            .first()
            .ok_or_else(|| Error::State("run has no checkpoints".into()))?;
        let early = self
            .records
            .iter()
            .rev()
            .find(|r| r.env_step <= early_step)
            .filter(|r| r.env_step > start.env_step)
            .ok_or_else(|| {
                Error::State(format!("no checkpoint after the first one by step {early_step}"))
            })?;
        Ok(cost_adjustment_ratio_from(start.cost, early.cost, start.incentive, early.incentive))
    }
}

/// Interquartile mean with fractional trimming: each sorted score covers an
/// equal slice of the unit interval and is weighted by its overlap with
/// `[0.25, 0.75]`.
pub fn iqm(scores: &[f64]) -> f64 {
    assert!(!scores.is_empty(), "iqm of an empty list");
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut acc = 0.0;
    for (i, x) in s.iter().enumerate() {
        let lo = (i as f64 / n).max(0.25);
        let hi = ((i + 1) as f64 / n).min(0.75);
        if hi > lo {
            acc += x * (hi - lo);
        }
    }
    acc / 0.5
}

/// Fraction of scores strictly above each threshold.
pub fn performance_profile(scores: &[f64], thresholds: &[f64]) -> Vec<f64> {
    let n = scores.len() as f64;
    thresholds
        .iter()
        .map(|t| scores.iter().filter(|s| *s > t).count() as f64 / n)
        .collect()
}
