use crate::envs::Environment;
use crate::replay::{ReplayBuffer, Source, Transition};
use crate::seeding::{Rng, SeedFan, Stream};
use crate::Result;

use super::Agent;

/// Per-episode totals of a finished training episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeTotals {
    pub start_step: u64,
    pub end_step: u64,
    pub reward: f64,
    pub cost: f64,
    pub incentive: f64,
}

/// Episode costs grouped into fixed windows of environment steps.
///
/// An episode counts toward the window that fully contains it. When a
/// window closes, the mean over its episodes becomes the current `J_C`
/// estimate; a window without any complete episode keeps the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochCostLog {
    epoch_len: u64,
    current: u64,
    pending: Vec<f64>,
    last: Option<f64>,
}

impl EpochCostLog {
    pub fn new(epoch_len: u64) -> Self {
        assert!(epoch_len > 0, "epoch length must be positive");
        Self {
            epoch_len,
            current: 0,
            pending: Vec::new(),
            last: None,
        }
    }

    /// Records an episode that covered steps `[start, end)`.
    pub fn record_episode(&mut self, start: u64, end: u64, cost: f64) {
        if end == 0 {
            return;
        }
        let epoch = (end - 1) / self.epoch_len;
        if epoch == self.current && start >= epoch * self.epoch_len {
            self.pending.push(cost);
        }
    }

    /// Closes every window that ends at or before `steps_done`.
    pub fn advance(&mut self, steps_done: u64) {
        let epoch = steps_done / self.epoch_len;
        if epoch > self.current {
            if !self.pending.is_empty() {
                self.last = Some(self.pending.iter().sum::<f64>() / self.pending.len() as f64);
            }
            self.pending.clear();
            self.current = epoch;
        }
    }

    /// Mean episode cost over the most recent closed window.
    pub fn episode_cost(&self) -> Option<f64> {
        self.last
    }
}

/// The environment-interaction loop around one agent.
pub struct Trainer<E: Environment> {
    pub agent: Agent,
    pub env: E,
    pub buffer: ReplayBuffer,
    buffer_rng: Rng,
    obs: Vec<f64>,
    pub env_steps: u64,
    episode_start: u64,
    running: EpisodeTotals,
    pub cost_log: EpochCostLog,
}

impl<E: Environment> Trainer<E> {
    pub fn new(agent: Agent, mut env: E, fan: &SeedFan) -> Result<Self> {
        let buffer = ReplayBuffer::new(agent.cfg.replay_capacity)?;
        let cost_log = EpochCostLog::new(agent.cfg.epoch_len);
        let obs = env.reset()?;
        Ok(Self {
            agent,
            env,
            buffer,
            buffer_rng: fan.stream(Stream::Buffer),
            obs,
            env_steps: 0,
            episode_start: 0,
            running: EpisodeTotals {
                start_step: 0,
                end_step: 0,
                reward: 0.0,
                cost: 0.0,
                incentive: 0.0,
            },
            cost_log,
        })
    }

    /// One environment step and `gradient_steps` updates. A scheduled reset
    /// happens before acting, so evaluation at a reset step still sees the
    /// trained networks. Returns the episode totals when an episode ended.
    pub fn train_step(&mut self) -> Result<Option<EpisodeTotals>> {
        self.agent.maybe_reset(self.env_steps)?;
        let action = self.agent.act_for_training(&self.obs, self.env_steps)?;
        let res = self.env.step(&action)?;
        self.buffer.push(Transition {
            obs: std::mem::take(&mut self.obs),
            action,
            reward: res.reward,
            cost: res.cost,
            incentive: res.incentive,
            next_obs: res.obs.clone(),
            terminal: res.terminal,
            source: Source::Training,
        });
        self.env_steps += 1;
        self.running.reward += res.reward;
        self.running.cost += res.cost;
        self.running.incentive += res.incentive;

        let mut finished = None;
        if res.done || res.terminal {
            let totals = EpisodeTotals {
                start_step: self.episode_start,
                end_step: self.env_steps,
                ..self.running
            };
            self.cost_log
                .record_episode(totals.start_step, totals.end_step, totals.cost);
            self.running = EpisodeTotals {
                start_step: self.env_steps,
                end_step: self.env_steps,
                reward: 0.0,
                cost: 0.0,
                incentive: 0.0,
            };
            self.episode_start = self.env_steps;
            self.obs = self.env.reset()?;
            finished = Some(totals);
        } else {
            self.obs = res.obs;
        }
        self.cost_log.advance(self.env_steps);

        if self.buffer.len() >= self.agent.cfg.batch_size {
            for _ in 0..self.agent.cfg.gradient_steps {
                self.agent
                    .update(&self.buffer, &mut self.buffer_rng, self.cost_log.episode_cost())?;
            }
        }
        Ok(finished)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_log_uses_only_complete_windows() {
        let mut log = EpochCostLog::new(10);
        log.record_episode(0, 5, 2.0);
        log.advance(5);
        assert_eq!(log.episode_cost(), None);
        log.record_episode(5, 10, 4.0);
        log.advance(10);
        assert_eq!(log.episode_cost(), Some(3.0));
        // straddles the boundary of window [10, 20): excluded
        log.record_episode(8, 14, 100.0);
        log.record_episode(14, 20, 6.0);
        log.advance(20);
        assert_eq!(log.episode_cost(), Some(6.0));
        log.advance(30);
        assert_eq!(log.episode_cost(), Some(6.0));
    }
}
