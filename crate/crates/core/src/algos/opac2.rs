//! The single-critic actor-critic and its constrained extension.
//!
//! With cost critics attached the agent runs the constrained update: a
//! Lagrangian penalty `beta` trades the cost advantage against the reward
//! advantage. Without them it is the unconstrained algorithm. Both share
//! one code path so the constrained agent with `beta = 0` and zero costs
//! reproduces the unconstrained one exactly.

use crate::diffcore::{optimizer_step, polyak_update, Matrix, Mlp, MlpSpec, OptimizerConfig};
use crate::policy::{
    default_target_entropy, squash_with_noise, standard_normal, update_temperature,
    GaussianPolicy, SquashedSample, Temperature,
};
use crate::replay::TransitionBatch;
use crate::seeding::Rng;
use crate::Result;

use super::config::{Algorithm, AgentConfig, EntropyMode};
use super::losses::{
    copac2_advantage, normalize_advantages, opac2_policy_loss, q_target_single, regression_loss,
};
use super::{Batches, Lagrange};

/// Cost-side critics `Q_c`, `V_c` and the `V_c` target.
#[derive(Debug, Clone, PartialEq)]
pub struct CostCritics {
    pub q: Mlp,
    pub v: Mlp,
    pub v_target: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Opac2Agent {
    pub cfg: AgentConfig,
    pub policy: GaussianPolicy,
    pub q: Mlp,
    pub v: Mlp,
    pub v_target: Mlp,
    pub cost: Option<CostCritics>,
    pub temperature: Temperature,
    pub lagrange: Option<Lagrange>,
    pub gradient_steps: u64,
}

struct PolicySamples {
    samples: Vec<SquashedSample>,
    actions: Matrix,
}

fn sample_batch_actions(policy: &GaussianPolicy, obs: &Matrix, rng: &mut Rng) -> Result<PolicySamples> {
    let (heads, _) = policy.heads(obs)?;
    let samples: Vec<_> = heads
        .iter()
        .map(|h| squash_with_noise(h, &standard_normal(rng, h.dim()), false))
        .collect();
    let actions = Matrix::from_rows(policy.act_dim(), samples.iter().map(|s| s.action.as_slice()))?;
    Ok(PolicySamples { samples, actions })
}

impl Opac2Agent {
    pub fn new(
        algorithm: Algorithm,
        cfg: &AgentConfig,
        obs_dim: usize,
        act_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let act = cfg.activation_for(algorithm);
        let hidden = cfg.hidden_dims.clone();
        let policy = GaussianPolicy::new(
            obs_dim,
            act_dim,
            hidden.clone(),
            act,
            cfg.std_mode_for(algorithm),
            rng,
        )?;
        let q_spec = MlpSpec::new(obs_dim + act_dim, hidden.clone(), 1, act);
        let v_spec = MlpSpec::new(obs_dim, hidden, 1, act);
        let q = Mlp::new(q_spec.clone(), rng)?;
        let v = Mlp::new(v_spec.clone(), rng)?;
        let v_target = v.clone();
        let cost = if algorithm.is_constrained() {
            let q_c = Mlp::new(q_spec, rng)?;
            let v_c = Mlp::new(v_spec, rng)?;
            Some(CostCritics {
                v_target: v_c.clone(),
                q: q_c,
                v: v_c,
            })
        } else {
            None
        };
        let temperature = Temperature::new(
            cfg.initial_alpha,
            cfg.target_entropy.unwrap_or_else(|| default_target_entropy(act_dim)),
            OptimizerConfig::adam(cfg.alpha_learning_rate),
        )?;
        Ok(Self {
            cfg: cfg.clone(),
            policy,
            q,
            v,
            v_target,
            cost,
            temperature,
            lagrange: Lagrange::from_config(algorithm, cfg)?,
            gradient_steps: 0,
        })
    }

    fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig::adam(self.cfg.learning_rate)
    }

    /// One gradient step in the order: penalty, Q, V, advantage, policy,
    /// temperature, targets.
    pub fn update(&mut self, batches: &Batches, rng: &mut Rng, episode_cost: Option<f64>) -> Result<()> {
        let opt = self.optimizer();
        let gamma = self.cfg.gamma;
        if let Some(l) = &mut self.lagrange {
            l.update(episode_cost);
        }
        let beta = self.lagrange.as_ref().map_or(0.0, |l| l.beta);

        // Q regression toward r + gamma (1 - d) V_targ(s')
        let b = batches.q();
        let sa = b.obs.hcat(&b.actions)?;
        let v_next = self.v_target.forward_batch(&b.next_obs)?;
        let y: Vec<f64> = (0..b.len())
            .map(|i| q_target_single(b.rewards[i], b.terminals[i], v_next.get(i, 0), gamma))
            .collect();
        regression_loss(&mut self.q, &sa, &y, "q")?;
        optimizer_step(&mut self.q.store, &opt)?;
        if let Some(c) = &mut self.cost {
            let vc_next = c.v_target.forward_batch(&b.next_obs)?;
            let yc: Vec<f64> = (0..b.len())
                .map(|i| q_target_single(b.costs[i], b.terminals[i], vc_next.get(i, 0), gamma))
                .collect();
            regression_loss(&mut c.q, &sa, &yc, "q_c")?;
            optimizer_step(&mut c.q.store, &opt)?;
        }

        // V regression toward Q(s, a_pi)
        let alpha = self.temperature.alpha();
        let b = batches.v();
        let pi = sample_batch_actions(&self.policy, &b.obs, rng)?;
        let s_api = b.obs.hcat(&pi.actions)?;
        let q_pi = self.q.forward_batch(&s_api)?.column(0);
        let v_targets: Vec<f64> = match self.cfg.entropy_mode {
            EntropyMode::MaxEntropy => q_pi
                .iter()
                .zip(&pi.samples)
                .map(|(q, s)| q - alpha * s.log_prob)
                .collect(),
            _ => q_pi.clone(),
        };
        regression_loss(&mut self.v, &b.obs, &v_targets, "v")?;
        optimizer_step(&mut self.v.store, &opt)?;
        let mut qc_pi = None;
        if let Some(c) = &mut self.cost {
            let qc = c.q.forward_batch(&s_api)?.column(0);
            regression_loss(&mut c.v, &b.obs, &qc, "v_c")?;
            optimizer_step(&mut c.v.store, &opt)?;
            qc_pi = Some(qc);
        }

        // advantages on the policy batch
        let (b, pi, q_pi, qc_pi) = if batches.is_shared() {
            (batches.v(), pi, q_pi, qc_pi)
        } else {
            let b = batches.policy();
            let pi = sample_batch_actions(&self.policy, &b.obs, rng)?;
            let s_api = b.obs.hcat(&pi.actions)?;
            let q_pi = self.q.forward_batch(&s_api)?.column(0);
            let qc_pi = match &self.cost {
                Some(c) => Some(c.q.forward_batch(&s_api)?.column(0)),
                None => None,
            };
            (b, pi, q_pi, qc_pi)
        };
        let v_now = self.v.forward_batch(&b.obs)?.column(0);
        let raw: Vec<f64> = match (&self.cost, &qc_pi) {
            (Some(c), Some(qc)) => {
                let vc_now = c.v.forward_batch(&b.obs)?.column(0);
                (0..b.len())
                    .map(|i| copac2_advantage(q_pi[i], v_now[i], qc[i], vc_now[i], beta))
                    .collect()
            }
            _ => q_pi.iter().zip(&v_now).map(|(q, v)| q - v).collect(),
        };
        let adv = normalize_advantages(&raw);

        let bonus = self.cfg.entropy_mode == EntropyMode::Bonus;
        let rp_noise: Vec<Vec<f64>> = if bonus {
            (0..b.len()).map(|_| standard_normal(rng, self.policy.act_dim())).collect()
        } else {
            vec![Vec::new(); b.len()]
        };
        let pre: Vec<Vec<f64>> = pi.samples.iter().map(|s| s.pre_squash.clone()).collect();
        let pl = opac2_policy_loss(&mut self.policy, &b.obs, &pre, &rp_noise, &adv, alpha, bonus)?;
        self.policy.step(&opt)?;
        if self.cfg.entropy_mode != EntropyMode::None {
            update_temperature(&mut self.temperature, &pl.log_probs)?;
        }

        self.gradient_steps += 1;
        if self.gradient_steps % self.cfg.target_update_interval == 0 {
            polyak_update(&mut self.v_target.store, &self.v.store, self.cfg.rho)?;
            if let Some(c) = &mut self.cost {
                polyak_update(&mut c.v_target.store, &c.v.store, self.cfg.rho)?;
            }
        }
        Ok(())
    }

    /// Re-draws every network and re-syncs the targets. Temperature and
    /// penalty are kept.
    pub fn reset(&mut self, rng: &mut Rng) -> Result<()> {
        self.policy.reset(rng)?;
        self.q.reset(rng)?;
        self.v.reset(rng)?;
        self.v_target = self.v.clone();
        if let Some(c) = &mut self.cost {
            c.q.reset(rng)?;
            c.v.reset(rng)?;
            c.v_target = c.v.clone();
        }
        Ok(())
    }

    /// Bellman residuals `Q(s,a) - (r + gamma (1-d) V_targ(s'))`, and the
    /// cost counterparts when cost critics exist.
    pub fn td_residuals(&self, b: &TransitionBatch) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let gamma = self.cfg.gamma;
        let sa = b.obs.hcat(&b.actions)?;
        let q = self.q.forward_batch(&sa)?;
        let v_next = self.v_target.forward_batch(&b.next_obs)?;
        let reward = (0..b.len())
            .map(|i| q.get(i, 0) - q_target_single(b.rewards[i], b.terminals[i], v_next.get(i, 0), gamma))
            .collect();
        let cost = match &self.cost {
            Some(c) => {
                let qc = c.q.forward_batch(&sa)?;
                let vc_next = c.v_target.forward_batch(&b.next_obs)?;
                Some(
                    (0..b.len())
                        .map(|i| {
                            qc.get(i, 0)
                                - q_target_single(b.costs[i], b.terminals[i], vc_next.get(i, 0), gamma)
                        })
                        .collect(),
                )
            }
            None => None,
        };
        Ok((reward, cost))
    }

    pub fn q_values(&self, obs: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        Ok(self.q.forward_batch(&obs.hcat(actions)?)?.column(0))
    }
}
