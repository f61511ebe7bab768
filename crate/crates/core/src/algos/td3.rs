//! Twin delayed deterministic policy gradient, optionally with Lagrangian
//! cost critics.

use crate::diffcore::{optimizer_step, polyak_update, Matrix, Mlp, MlpSpec, OptimizerConfig};
use crate::policy::{standard_normal, DeterministicPolicy};
use crate::replay::TransitionBatch;
use crate::seeding::Rng;
use crate::Result;

use super::config::{Algorithm, AgentConfig};
use super::losses::{q_target_single, regression_loss, td3_actor_loss, td3_target_actions};
use super::sac::min_q;
use super::{Batches, Lagrange};

#[derive(Debug, Clone, PartialEq)]
pub struct Td3Agent {
    pub cfg: AgentConfig,
    pub actor: DeterministicPolicy,
    pub actor_target: DeterministicPolicy,
    pub q: Vec<Mlp>,
    pub q_target: Vec<Mlp>,
    pub cost_q: Vec<Mlp>,
    pub cost_q_target: Vec<Mlp>,
    pub lagrange: Option<Lagrange>,
    pub critic_steps: u64,
    pub actor_steps: u64,
}

impl Td3Agent {
    pub fn new(
        algorithm: Algorithm,
        cfg: &AgentConfig,
        obs_dim: usize,
        act_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let act = cfg.activation_for(algorithm);
        let actor = DeterministicPolicy::new(obs_dim, act_dim, cfg.hidden_dims.clone(), act, rng)?;
        let q_spec = MlpSpec::new(obs_dim + act_dim, cfg.hidden_dims.clone(), 1, act);
        let q = (0..2)
            .map(|_| Mlp::new(q_spec.clone(), rng))
            .collect::<Result<Vec<_>>>()?;
        let n_cost = if algorithm.is_constrained() { cfg.n_cost_critics } else { 0 };
        let cost_q = (0..n_cost)
            .map(|_| Mlp::new(q_spec.clone(), rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            actor_target: actor.clone(),
            actor,
            q_target: q.clone(),
            q,
            cost_q_target: cost_q.clone(),
            cost_q,
            lagrange: Lagrange::from_config(algorithm, cfg)?,
            critic_steps: 0,
            actor_steps: 0,
        })
    }

    /// Clipped double-Q targets at the given next-state actions, for reward
    /// and (when present) cost critics.
    fn targets(&self, b: &TransitionBatch, a_next: &Matrix) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let sa_next = b.next_obs.hcat(a_next)?;
        let q = min_q(&self.q_target, &sa_next)?;
        let y = (0..b.len())
            .map(|i| q_target_single(b.rewards[i], b.terminals[i], q[i], self.cfg.gamma))
            .collect();
        let yc = if self.cost_q.is_empty() {
            None
        } else {
            let qc = min_q(&self.cost_q_target, &sa_next)?;
            Some(
                (0..b.len())
                    .map(|i| q_target_single(b.costs[i], b.terminals[i], qc[i], self.cfg.gamma))
                    .collect(),
            )
        };
        Ok((y, yc))
    }

    pub fn update(&mut self, batches: &Batches, rng: &mut Rng, episode_cost: Option<f64>) -> Result<()> {
        let opt = OptimizerConfig::adam(self.cfg.learning_rate);
        if let Some(l) = &mut self.lagrange {
            l.update(episode_cost);
        }
        let b = batches.q();
        let d = self.actor.act_dim();
        let noise = Matrix::from_vec(b.len(), d, standard_normal(rng, b.len() * d))?;
        let a_next = td3_target_actions(
            &self.actor_target,
            &b.next_obs,
            &noise,
            self.cfg.target_noise,
            self.cfg.noise_clip,
        )?;
        let (y, yc) = self.targets(b, &a_next)?;
        let sa = b.obs.hcat(&b.actions)?;
        for (k, q) in self.q.iter_mut().enumerate() {
            regression_loss(q, &sa, &y, if k == 0 { "q1" } else { "q2" })?;
            optimizer_step(&mut q.store, &opt)?;
        }
        if let Some(yc) = yc {
            for q in &mut self.cost_q {
                regression_loss(q, &sa, &yc, "q_c")?;
                optimizer_step(&mut q.store, &opt)?;
            }
        }
        self.critic_steps += 1;

        if self.critic_steps % self.cfg.policy_delay == 0 {
            let cost = self
                .lagrange
                .as_ref()
                .zip(self.cost_q.first())
                .map(|(l, q)| (q, l.beta));
            td3_actor_loss(&mut self.actor, &self.q[0], cost, &batches.policy().obs)?;
            optimizer_step(&mut self.actor.net.store, &opt)?;
            self.actor_steps += 1;
            let rho = self.cfg.rho;
            polyak_update(&mut self.actor_target.net.store, &self.actor.net.store, rho)?;
            for (t, m) in self.q_target.iter_mut().zip(&self.q) {
                polyak_update(&mut t.store, &m.store, rho)?;
            }
            for (t, m) in self.cost_q_target.iter_mut().zip(&self.cost_q) {
                polyak_update(&mut t.store, &m.store, rho)?;
            }
        }
        Ok(())
    }

    pub fn reset(&mut self, rng: &mut Rng) -> Result<()> {
        self.actor.net.reset(rng)?;
        for q in self.q.iter_mut().chain(self.cost_q.iter_mut()) {
            q.reset(rng)?;
        }
        self.actor_target = self.actor.clone();
        self.q_target = self.q.clone();
        self.cost_q_target = self.cost_q.clone();
        Ok(())
    }

    /// Residuals of both critics against the noise-free clipped target, Q1
    /// rows first.
    pub fn td_residuals(&self, b: &TransitionBatch) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let a_next = self.actor_target.actions(&b.next_obs)?;
        let (y, yc) = self.targets(b, &a_next)?;
        let sa = b.obs.hcat(&b.actions)?;
        let stack = |critics: &[Mlp], y: &[f64]| -> Result<Vec<f64>> {
            let mut res = Vec::with_capacity(critics.len() * y.len());
            for q in critics {
                let pred = q.forward_batch(&sa)?;
                res.extend(y.iter().enumerate().map(|(i, y)| pred.get(i, 0) - y));
            }
            Ok(res)
        };
        let reward = stack(&self.q, &y)?;
        let cost = match yc {
            Some(yc) => Some(stack(&self.cost_q, &yc)?),
            None => None,
        };
        Ok((reward, cost))
    }

    pub fn q_values(&self, obs: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        min_q(&self.q, &obs.hcat(actions)?)
    }
}
