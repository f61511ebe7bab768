//! Soft actor-critic with clipped double Q, optionally with Lagrangian cost
//! critics.

use crate::diffcore::{optimizer_step, polyak_update, Matrix, Mlp, MlpSpec, OptimizerConfig};
use crate::policy::{
    default_target_entropy, squash_with_noise, standard_normal, update_temperature,
    GaussianPolicy, Temperature,
};
use crate::replay::TransitionBatch;
use crate::seeding::Rng;
use crate::Result;

use super::config::{Algorithm, AgentConfig};
use super::losses::{
    clipped_double_q_target, min_over_critics, q_target_single, regression_loss, sac_policy_loss,
    CostPenalty,
};
use super::{Batches, Lagrange};

#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    pub cfg: AgentConfig,
    pub policy: GaussianPolicy,
    pub q: Vec<Mlp>,
    pub q_target: Vec<Mlp>,
    pub cost_q: Vec<Mlp>,
    pub cost_q_target: Vec<Mlp>,
    pub temperature: Temperature,
    pub lagrange: Option<Lagrange>,
    pub gradient_steps: u64,
}

/// Evaluates each critic on `input` and returns the rowwise minimum.
pub(crate) fn min_q(critics: &[Mlp], input: &Matrix) -> Result<Vec<f64>> {
    let outs = critics
        .iter()
        .map(|c| c.forward_batch(input))
        .collect::<Result<Vec<_>>>()?;
    Ok(min_over_critics(&outs).0)
}

impl SacAgent {
    pub fn new(
        algorithm: Algorithm,
        cfg: &AgentConfig,
        obs_dim: usize,
        act_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let act = cfg.activation_for(algorithm);
        let policy = GaussianPolicy::new(
            obs_dim,
            act_dim,
            cfg.hidden_dims.clone(),
            act,
            cfg.std_mode_for(algorithm),
            rng,
        )?;
        let q_spec = MlpSpec::new(obs_dim + act_dim, cfg.hidden_dims.clone(), 1, act);
        let q = (0..2)
            .map(|_| Mlp::new(q_spec.clone(), rng))
            .collect::<Result<Vec<_>>>()?;
        let n_cost = if algorithm.is_constrained() { cfg.n_cost_critics } else { 0 };
        let cost_q = (0..n_cost)
            .map(|_| Mlp::new(q_spec.clone(), rng))
            .collect::<Result<Vec<_>>>()?;
        let temperature = Temperature::new(
            cfg.initial_alpha,
            cfg.target_entropy.unwrap_or_else(|| default_target_entropy(act_dim)),
            OptimizerConfig::adam(cfg.alpha_learning_rate),
        )?;
        Ok(Self {
            cfg: cfg.clone(),
            policy,
            q_target: q.clone(),
            q,
            cost_q_target: cost_q.clone(),
            cost_q,
            temperature,
            lagrange: Lagrange::from_config(algorithm, cfg)?,
            gradient_steps: 0,
        })
    }

    fn next_actions(&self, next_obs: &Matrix, rng: &mut Rng) -> Result<(Matrix, Vec<f64>)> {
        let (heads, _) = self.policy.heads(next_obs)?;
        let samples: Vec<_> = heads
            .iter()
            .map(|h| squash_with_noise(h, &standard_normal(rng, h.dim()), false))
            .collect();
        let a = Matrix::from_rows(self.policy.act_dim(), samples.iter().map(|s| s.action.as_slice()))?;
        Ok((a, samples.iter().map(|s| s.log_prob).collect()))
    }

    fn reward_targets(&self, b: &TransitionBatch, rng: &mut Rng) -> Result<(Vec<f64>, Matrix)> {
        let (a_next, lp_next) = self.next_actions(&b.next_obs, rng)?;
        let sa_next = b.next_obs.hcat(&a_next)?;
        let q1 = self.q_target[0].forward_batch(&sa_next)?;
        let q2 = self.q_target[1].forward_batch(&sa_next)?;
        let alpha = self.temperature.alpha();
        let y = (0..b.len())
            .map(|i| {
                clipped_double_q_target(
                    b.rewards[i],
                    b.terminals[i],
                    q1.get(i, 0),
                    q2.get(i, 0),
                    alpha * lp_next[i],
                    self.cfg.gamma,
                )
            })
            .collect();
        Ok((y, sa_next))
    }

    fn cost_targets(&self, b: &TransitionBatch, sa_next: &Matrix) -> Result<Vec<f64>> {
        let qc = min_q(&self.cost_q_target, sa_next)?;
        Ok((0..b.len())
            .map(|i| q_target_single(b.costs[i], b.terminals[i], qc[i], self.cfg.gamma))
            .collect())
    }

    pub fn update(&mut self, batches: &Batches, rng: &mut Rng, episode_cost: Option<f64>) -> Result<()> {
        let opt = OptimizerConfig::adam(self.cfg.learning_rate);
        if let Some(l) = &mut self.lagrange {
            l.update(episode_cost);
        }

        let b = batches.q();
        let (y, sa_next) = self.reward_targets(b, rng)?;
        let sa = b.obs.hcat(&b.actions)?;
        for (k, q) in self.q.iter_mut().enumerate() {
            regression_loss(q, &sa, &y, if k == 0 { "q1" } else { "q2" })?;
            optimizer_step(&mut q.store, &opt)?;
        }
        if !self.cost_q.is_empty() {
            let yc = self.cost_targets(b, &sa_next)?;
            for q in &mut self.cost_q {
                regression_loss(q, &sa, &yc, "q_c")?;
                optimizer_step(&mut q.store, &opt)?;
            }
        }

        let b = batches.policy();
        let noise: Vec<Vec<f64>> = (0..b.len())
            .map(|_| standard_normal(rng, self.policy.act_dim()))
            .collect();
        let penalty = self.lagrange.as_ref().map(|l| CostPenalty {
            critics: &self.cost_q,
            beta: l.beta,
        });
        let alpha = self.temperature.alpha();
        let pl = sac_policy_loss(&mut self.policy, &self.q, penalty, &b.obs, &noise, alpha)?;
        self.policy.step(&opt)?;
        update_temperature(&mut self.temperature, &pl.log_probs)?;

        self.gradient_steps += 1;
        if self.gradient_steps % self.cfg.target_update_interval == 0 {
            for (t, m) in self.q_target.iter_mut().zip(&self.q) {
                polyak_update(&mut t.store, &m.store, self.cfg.rho)?;
            }
            for (t, m) in self.cost_q_target.iter_mut().zip(&self.cost_q) {
                polyak_update(&mut t.store, &m.store, self.cfg.rho)?;
            }
        }
        Ok(())
    }

    pub fn reset(&mut self, rng: &mut Rng) -> Result<()> {
        self.policy.reset(rng)?;
        for q in self.q.iter_mut().chain(self.cost_q.iter_mut()) {
            q.reset(rng)?;
        }
        self.q_target = self.q.clone();
        self.cost_q_target = self.cost_q.clone();
        Ok(())
    }

    /// Residuals of both reward critics against the entropy-augmented
    /// clipped target, Q1 rows first. `rng` draws the next-state actions.
    pub fn td_residuals(&self, b: &TransitionBatch, rng: &mut Rng) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let (y, sa_next) = self.reward_targets(b, rng)?;
        let sa = b.obs.hcat(&b.actions)?;
        let mut reward = Vec::with_capacity(2 * b.len());
        for q in &self.q {
            let pred = q.forward_batch(&sa)?;
            reward.extend((0..b.len()).map(|i| pred.get(i, 0) - y[i]));
        }
        let cost = if self.cost_q.is_empty() {
            None
        } else {
            let yc = self.cost_targets(b, &sa_next)?;
            let mut res = Vec::with_capacity(self.cost_q.len() * b.len());
            for q in &self.cost_q {
                let pred = q.forward_batch(&sa)?;
                res.extend((0..b.len()).map(|i| pred.get(i, 0) - yc[i]));
            }
            Some(res)
        };
        Ok((reward, cost))
    }

    pub fn q_values(&self, obs: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        min_q(&self.q, &obs.hcat(actions)?)
    }
}
