use std::io::{BufRead, Write};

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::diffcore::{Matrix, ParamStore};
use crate::policy::{deterministic_action, sample_action};
use crate::replay::{ReplayBuffer, RolloutPolicy, TransitionBatch};
use crate::seeding::{Rng, SeedFan, Stream};
use crate::{Error, Result};

use super::config::{AgentConfig, Algorithm};
use super::{Batches, Lagrange, Opac2Agent, SacAgent, Td3Agent};

#[derive(Debug, Clone, PartialEq)]
pub enum AgentKind {
    Opac2(Opac2Agent),
    Sac(SacAgent),
    Td3(Td3Agent),
}

/// An agent together with its private random streams and reset counter.
#[derive(Debug, Clone)]
pub struct Agent {
    pub algorithm: Algorithm,
    pub cfg: AgentConfig,
    pub kind: AgentKind,
    fan: SeedFan,
    update_rng: Rng,
    acting_rng: Rng,
    pub resets: u64,
}

impl Agent {
    /// Builds the networks from the `Init` stream of `fan`.
    pub fn new(
        algorithm: Algorithm,
        cfg: &AgentConfig,
        obs_dim: usize,
        act_dim: usize,
        fan: SeedFan,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut rng = fan.stream(Stream::Init);
        let kind = match algorithm {
            Algorithm::Opac2 | Algorithm::Copac2 => {
                AgentKind::Opac2(Opac2Agent::new(algorithm, cfg, obs_dim, act_dim, &mut rng)?)
            }
            Algorithm::Sac | Algorithm::SacConstrained => {
                AgentKind::Sac(SacAgent::new(algorithm, cfg, obs_dim, act_dim, &mut rng)?)
            }
            Algorithm::Td3 | Algorithm::Td3Constrained => {
                AgentKind::Td3(Td3Agent::new(algorithm, cfg, obs_dim, act_dim, &mut rng)?)
            }
        };
        Ok(Self {
            algorithm,
            cfg: cfg.clone(),
            kind,
            fan,
            update_rng: fan.stream(Stream::Update),
            acting_rng: fan.stream(Stream::Acting),
            resets: 0,
        })
    }

    pub fn act_dim(&self) -> usize {
        match &self.kind {
            AgentKind::Opac2(a) => a.policy.act_dim(),
            AgentKind::Sac(a) => a.policy.act_dim(),
            AgentKind::Td3(a) => a.actor.act_dim(),
        }
    }

    /// Uniform actions during initial exploration, then the behaviour policy.
    pub fn act_for_training(&mut self, obs: &[f64], env_step: u64) -> Result<Vec<f64>> {
        let mut rng = self.acting_rng.clone();
        let out = if env_step < self.cfg.initial_exploration_steps {
            Ok((0..self.act_dim()).map(|_| rng.random_range(-1.0..=1.0)).collect())
        } else {
            self.rollout_action(obs, &mut rng)
        };
        self.acting_rng = rng;
        out
    }

    /// Noise-free action: `tanh(mean)` or the TD3 actor output.
    pub fn deterministic_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        match &self.kind {
            AgentKind::Opac2(a) => Ok(deterministic_action(&a.policy.head(obs)?)),
            AgentKind::Sac(a) => Ok(deterministic_action(&a.policy.head(obs)?)),
            AgentKind::Td3(a) => a.actor.act(obs),
        }
    }

    fn sample_batches(&self, buffer: &ReplayBuffer, rng: &mut Rng) -> Result<Batches> {
        let n = self.cfg.batch_size;
        if !self.cfg.independent_batches {
            return Ok(Batches::shared(buffer.sample(n, rng)?));
        }
        let q = buffer.sample(n, rng)?;
        let v = match self.kind {
            AgentKind::Opac2(_) => buffer.sample(n, rng)?,
            _ => q.clone(),
        };
        let p = buffer.sample(n, rng)?;
        Ok(Batches::independent(q, v, p))
    }

    /// One gradient step on batches drawn from `buffer` with `buffer_rng`.
    /// `episode_cost` is the most recent epoch's mean episode cost.
    pub fn update(
        &mut self,
        buffer: &ReplayBuffer,
        buffer_rng: &mut Rng,
        episode_cost: Option<f64>,
    ) -> Result<()> {
        let batches = self.sample_batches(buffer, buffer_rng)?;
        let rng = &mut self.update_rng;
        match &mut self.kind {
            AgentKind::Opac2(a) => a.update(&batches, rng, episode_cost),
            AgentKind::Sac(a) => a.update(&batches, rng, episode_cost),
            AgentKind::Td3(a) => a.update(&batches, rng, episode_cost),
        }
    }

    /// Re-initializes every network at positive multiples of the reset
    /// interval. Returns whether a reset happened.
    pub fn maybe_reset(&mut self, env_step: u64) -> Result<bool> {
        match self.cfg.reset_interval {
            Some(k) if env_step > 0 && env_step % k == 0 => {
                self.reset()?;
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    /// Unconditional reset from the `Reset` stream indexed by the reset count.
    pub fn reset(&mut self) -> Result<()> {
        let mut rng = self.fan.indexed(Stream::Reset, self.resets);
        match &mut self.kind {
            AgentKind::Opac2(a) => a.reset(&mut rng)?,
            AgentKind::Sac(a) => a.reset(&mut rng)?,
            AgentKind::Td3(a) => a.reset(&mut rng)?,
        }
        self.resets += 1;
        Ok(())
    }

    pub fn alpha(&self) -> Option<f64> {
        match &self.kind {
            AgentKind::Opac2(a) => Some(a.temperature.alpha()),
            AgentKind::Sac(a) => Some(a.temperature.alpha()),
            AgentKind::Td3(_) => None,
        }
    }

    pub fn lagrange(&self) -> Option<&Lagrange> {
        match &self.kind {
            AgentKind::Opac2(a) => a.lagrange.as_ref(),
            AgentKind::Sac(a) => a.lagrange.as_ref(),
            AgentKind::Td3(a) => a.lagrange.as_ref(),
        }
    }

    pub fn beta(&self) -> Option<f64> {
        self.lagrange().map(|l| l.beta)
    }

    /// Bellman residuals of the agent's own critics against its own targets
    /// (reward, and cost for constrained agents). SAC draws its next-state
    /// actions from `rng`.
    pub fn td_residuals(
        &self,
        batch: &TransitionBatch,
        rng: &mut Rng,
    ) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        match &self.kind {
            AgentKind::Opac2(a) => a.td_residuals(batch),
            AgentKind::Sac(a) => a.td_residuals(batch, rng),
            AgentKind::Td3(a) => a.td_residuals(batch),
        }
    }

    /// Reward critic used for estimation-error reporting: the single Q, or
    /// the minimum of the twins.
    pub fn q_values(&self, obs: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        match &self.kind {
            AgentKind::Opac2(a) => a.q_values(obs, actions),
            AgentKind::Sac(a) => a.q_values(obs, actions),
            AgentKind::Td3(a) => a.q_values(obs, actions),
        }
    }

    fn stores(&self) -> Vec<(String, &ParamStore)> {
        let mut out: Vec<(String, &ParamStore)> = Vec::new();
        match &self.kind {
            AgentKind::Opac2(a) => {
                out.push(("policy".into(), &a.policy.store));
                out.push(("q".into(), &a.q.store));
                out.push(("v".into(), &a.v.store));
                out.push(("v_target".into(), &a.v_target.store));
                if let Some(c) = &a.cost {
                    out.push(("q_c".into(), &c.q.store));
                    out.push(("v_c".into(), &c.v.store));
                    out.push(("v_c_target".into(), &c.v_target.store));
                }
                out.push(("temperature".into(), &a.temperature.store));
            }
            AgentKind::Sac(a) => {
                out.push(("policy".into(), &a.policy.store));
                push_list(&mut out, "q", &a.q);
                push_list(&mut out, "q_target", &a.q_target);
                push_list(&mut out, "q_c", &a.cost_q);
                push_list(&mut out, "q_c_target", &a.cost_q_target);
                out.push(("temperature".into(), &a.temperature.store));
            }
            AgentKind::Td3(a) => {
                out.push(("actor".into(), &a.actor.net.store));
                out.push(("actor_target".into(), &a.actor_target.net.store));
                push_list(&mut out, "q", &a.q);
                push_list(&mut out, "q_target", &a.q_target);
                push_list(&mut out, "q_c", &a.cost_q);
                push_list(&mut out, "q_c_target", &a.cost_q_target);
            }
        }
        out
    }

    fn stores_mut(&mut self) -> Vec<(String, &mut ParamStore)> {
        let mut out: Vec<(String, &mut ParamStore)> = Vec::new();
        match &mut self.kind {
            AgentKind::Opac2(a) => {
                out.push(("policy".into(), &mut a.policy.store));
                out.push(("q".into(), &mut a.q.store));
                out.push(("v".into(), &mut a.v.store));
                out.push(("v_target".into(), &mut a.v_target.store));
                if let Some(c) = &mut a.cost {
                    out.push(("q_c".into(), &mut c.q.store));
                    out.push(("v_c".into(), &mut c.v.store));
                    out.push(("v_c_target".into(), &mut c.v_target.store));
                }
                out.push(("temperature".into(), &mut a.temperature.store));
            }
            AgentKind::Sac(a) => {
                out.push(("policy".into(), &mut a.policy.store));
                push_list_mut(&mut out, "q", &mut a.q);
                push_list_mut(&mut out, "q_target", &mut a.q_target);
                push_list_mut(&mut out, "q_c", &mut a.cost_q);
                push_list_mut(&mut out, "q_c_target", &mut a.cost_q_target);
                out.push(("temperature".into(), &mut a.temperature.store));
            }
            AgentKind::Td3(a) => {
                out.push(("actor".into(), &mut a.actor.net.store));
                out.push(("actor_target".into(), &mut a.actor_target.net.store));
                push_list_mut(&mut out, "q", &mut a.q);
                push_list_mut(&mut out, "q_target", &mut a.q_target);
                push_list_mut(&mut out, "q_c", &mut a.cost_q);
                push_list_mut(&mut out, "q_c_target", &mut a.cost_q_target);
            }
        }
        out
    }

    fn counters(&self) -> Vec<(&'static str, u64)> {
        let mut c = vec![("resets", self.resets)];
        match &self.kind {
            AgentKind::Opac2(a) => c.push(("gradient_steps", a.gradient_steps)),
            AgentKind::Sac(a) => c.push(("gradient_steps", a.gradient_steps)),
            AgentKind::Td3(a) => {
                c.push(("critic_steps", a.critic_steps));
                c.push(("actor_steps", a.actor_steps));
            }
        }
        c
    }

    fn set_counter(&mut self, name: &str, value: u64) -> Result<()> {
        match (name, &mut self.kind) {
            ("resets", _) => self.resets = value,
            ("gradient_steps", AgentKind::Opac2(a)) => a.gradient_steps = value,
            ("gradient_steps", AgentKind::Sac(a)) => a.gradient_steps = value,
            ("critic_steps", AgentKind::Td3(a)) => a.critic_steps = value,
            ("actor_steps", AgentKind::Td3(a)) => a.actor_steps = value,
            _ => return Err(Error::Parse(format!("unexpected counter {name}"))),
        }
        Ok(())
    }

    /// Text checkpoint: a header, counters, the penalty, then every
    /// parameter store in the [`ParamStore::write_text`] format.
    pub fn save_checkpoint<W: Write>(&self, out: &mut W) -> Result<()> {
        let stores = self.stores();
        writeln!(out, "agent {} {}", self.algorithm, stores.len())?;
        for (name, v) in self.counters() {
            writeln!(out, "counter {name} {v}")?;
        }
        if let Some(b) = self.beta() {
            writeln!(out, "beta {b:?}")?;
        }
        for (label, store) in stores {
            store.write_text(&label, out)?;
        }
        Ok(())
    }

    /// Restores a checkpoint written by [`Agent::save_checkpoint`] into an
    /// agent built with the same algorithm and configuration.
    pub fn load_checkpoint<R: BufRead>(&mut self, input: &mut R) -> Result<()> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let head: Vec<&str> = line.split_whitespace().collect();
        let count: usize = match head.as_slice() {
            ["agent", algo, n] if *algo == self.algorithm.name() => n
                .parse()
                .map_err(|_| Error::Parse(format!("bad store count {n:?}")))?,
            _ => {
                return Err(Error::Parse(format!(
                    "checkpoint header {:?} does not match agent {}",
                    line.trim(),
                    self.algorithm
                )))
            }
        };
        let mut loaded = Vec::with_capacity(count);
        loop {
            // peek the next line kind without consuming store records
            let buf = input.fill_buf()?;
            if buf.starts_with(b"store") || buf.is_empty() {
                break;
            }
            line.clear();
            input.read_line(&mut line)?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            match parts.as_slice() {
                ["counter", name, v] => {
                    let v = v
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad counter value {v:?}")))?;
                    self.set_counter(name, v)?;
                }
                ["beta", v] => {
                    let v: f64 = v
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad beta {v:?}")))?;
                    match &mut self.kind {
                        AgentKind::Opac2(a) => a.lagrange.as_mut(),
                        AgentKind::Sac(a) => a.lagrange.as_mut(),
                        AgentKind::Td3(a) => a.lagrange.as_mut(),
                    }
                    .ok_or_else(|| Error::Parse("beta given for an unconstrained agent".into()))?
                    .beta = v;
                }
                _ => return Err(Error::Parse(format!("unexpected checkpoint line {:?}", line.trim()))),
            }
        }
        for _ in 0..count {
            loaded.push(ParamStore::read_text(input)?);
        }
        let mut targets = self.stores_mut();
        if targets.len() != loaded.len() {
            return Err(Error::Parse(format!(
                "checkpoint has {} stores, agent has {}",
                loaded.len(),
                targets.len()
            )));
        }
        for ((label, dst), (got_label, src)) in targets.iter_mut().zip(loaded) {
            if *label != got_label || !dst.same_layout(&src) {
                return Err(Error::Parse(format!(
                    "checkpoint store {got_label:?} does not fit {label:?}"
                )));
            }
            **dst = src;
        }
        Ok(())
    }

    /// Every parameter value of every store, in checkpoint order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.stores().into_iter().flat_map(|(_, s)| s.flat_values()).collect()
    }
}

fn push_list<'a>(out: &mut Vec<(String, &'a ParamStore)>, prefix: &str, nets: &'a [crate::diffcore::Mlp]) {
    for (i, n) in nets.iter().enumerate() {
        out.push((format!("{prefix}{}", i + 1), &n.store));
    }
}

fn push_list_mut<'a>(
    out: &mut Vec<(String, &'a mut ParamStore)>,
    prefix: &str,
    nets: &'a mut [crate::diffcore::Mlp],
) {
    for (i, n) in nets.iter_mut().enumerate() {
        out.push((format!("{prefix}{}", i + 1), &mut n.store));
    }
}

impl RolloutPolicy for Agent {
    /// Policy sample for SAC and the actor-critics; actor output plus
    /// Gaussian exploration noise, clamped to the bounds, for TD3.
    fn rollout_action(&self, obs: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        match &self.kind {
            AgentKind::Opac2(a) => Ok(sample_action(&a.policy.head(obs)?, rng, false).action),
            AgentKind::Sac(a) => Ok(sample_action(&a.policy.head(obs)?, rng, false).action),
            AgentKind::Td3(a) => {
                let sigma = a.cfg.exploration_noise;
                let mut act = a.actor.act(obs)?;
                for x in &mut act {
                    let e: f64 = StandardNormal.sample(rng);
                    *x = (*x + sigma * e).clamp(-1.0, 1.0);
                }
                Ok(act)
            }
        }
    }
}
