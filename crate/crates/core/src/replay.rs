//! Fixed-capacity replay ring buffer and held-out validation episodes.

use std::io::Write;

use rand::Rng as _;

use crate::diffcore::Matrix;
use crate::envs::Environment;
use crate::seeding::Rng;
use crate::{Error, Result};

/// Where a transition was collected. Validation data never enters replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Training,
    Validation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub cost: f64,
    /// Reward net of any penalty term; kept for diagnostics.
    pub incentive: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
    pub source: Source,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    write_head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            storage: Vec::new(),
            write_head: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.write_head] = t;
        }
        self.write_head = (self.write_head + 1) % self.capacity;
    }

    /// Live entries from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity {
            0
        } else {
            self.write_head
        };
        self.storage[split..]
            .iter()
            .chain(self.storage[..split].iter())
    }

    /// `n` draws, uniform with replacement over live entries.
    pub fn sample_indices(&self, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
        if self.storage.is_empty() {
            return Err(Error::State(
                "cannot sample from an empty replay buffer".into(),
            ));
        }
        Ok((0..n)
            .map(|_| rng.random_range(0..self.storage.len()))
            .collect())
    }

    pub fn sample_batch(&self, n: usize, rng: &mut Rng) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Result<TransitionBatch> {
        TransitionBatch::from_transitions(self.sample_batch(n, rng)?)
    }

    /// CSV dump with one row per live transition, oldest first.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        let Some(first) = self.storage.first() else {
            writeln!(out, "reward,cost,incentive,terminal")?;
            return Ok(());
        };
        let obs_cols = (0..first.obs.len()).map(|i| format!("obs{i}"));
        let act_cols = (0..first.action.len()).map(|i| format!("act{i}"));
        let next_cols = (0..first.next_obs.len()).map(|i| format!("next_obs{i}"));
        let header: Vec<String> = obs_cols
            .chain(act_cols)
            .chain(["reward".into(), "cost".into(), "incentive".into()])
            .chain(next_cols)
            .chain(["terminal".into()])
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for t in self.iter_oldest_first() {
            let fields: Vec<String> = t
                .obs
                .iter()
                .chain(&t.action)
                .chain([&t.reward, &t.cost, &t.incentive])
                .chain(&t.next_obs)
                .map(|v| format!("{v:?}"))
                .chain(std::iter::once(u8::from(t.terminal).to_string()))
                .collect();
            writeln!(out, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

/// Column-stacked view of a set of transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBatch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    pub next_obs: Matrix,
    /// 1.0 for true terminal states, else 0.0.
    pub terminals: Vec<f64>,
}

impl TransitionBatch {
    pub fn from_transitions<'a, I>(transitions: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        let ts: Vec<&Transition> = transitions.into_iter().collect();
        let first = ts
            .first()
            .ok_or_else(|| Error::State("empty transition batch".into()))?;
        let obs_dim = first.obs.len();
        let act_dim = first.action.len();
        Ok(Self {
            obs: Matrix::from_rows(obs_dim, ts.iter().map(|t| t.obs.as_slice()))?,
            actions: Matrix::from_rows(act_dim, ts.iter().map(|t| t.action.as_slice()))?,
            rewards: ts.iter().map(|t| t.reward).collect(),
            costs: ts.iter().map(|t| t.cost).collect(),
            next_obs: Matrix::from_rows(obs_dim, ts.iter().map(|t| t.next_obs.as_slice()))?,
            terminals: ts
                .iter()
                .map(|t| if t.terminal { 1.0 } else { 0.0 })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// One complete held-out episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationEpisode {
    pub transitions: Vec<Transition>,
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    pub incentives: Vec<f64>,
    /// Ended by the step limit rather than a terminal state.
    pub truncated: bool,
}

impl ValidationEpisode {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    pub fn total_incentive(&self) -> f64 {
        self.incentives.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationSet {
    pub episodes: Vec<ValidationEpisode>,
}

impl ValidationSet {
    pub fn len(&self) -> usize {
        self.episodes.iter().map(|e| e.transitions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flat_map(|e| e.transitions.iter())
    }
}

/// Anything that can choose rollout actions.
pub trait RolloutPolicy {
    /// Stochastic action used for data collection and validation.
    fn rollout_action(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
}

impl<F> RolloutPolicy for F
where
    F: Fn(&[f64], &mut Rng) -> Result<Vec<f64>>,
{
    fn rollout_action(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self(obs, rng)
    }
}

/// Runs `episodes` full episodes with the policy's stochastic actions. The
/// transitions are returned, never pushed into any replay buffer.
pub fn collect_validation<E, P>(
    env: &mut E,
    policy: &P,
    episodes: usize,
    rng: &mut Rng,
) -> Result<ValidationSet>
where
    E: Environment + ?Sized,
    P: RolloutPolicy + ?Sized,
{
    let mut set = ValidationSet::default();
    for _ in 0..episodes {
        let mut obs = env.reset()?;
        let mut ep = ValidationEpisode {
            transitions: Vec::new(),
            rewards: Vec::new(),
            costs: Vec::new(),
            incentives: Vec::new(),
            truncated: false,
        };
        loop {
            let action = policy.rollout_action(&obs, rng)?;
            let step = env.step(&action)?;
            ep.rewards.push(step.reward);
            ep.costs.push(step.cost);
            ep.incentives.push(step.incentive);
            ep.transitions.push(Transition {
                obs: std::mem::take(&mut obs),
                action,
                reward: step.reward,
                cost: step.cost,
                incentive: step.incentive,
                next_obs: step.obs.clone(),
                terminal: step.terminal,
                source: Source::Validation,
            });
            obs = step.obs;
            if step.terminal || step.done {
                ep.truncated = !step.terminal;
                break;
            }
        }
        set.episodes.push(ep);
    }
    Ok(set)
}
