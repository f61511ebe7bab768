//! Scalar targets and differentiable losses shared by the agents.
//!
//! Every loss takes its random draws as arguments so that the value is a
//! deterministic function of the parameters, which is what the
//! finite-difference checks need. Losses accumulate gradients into the
//! stores they differentiate; callers own the optimizer step.

use crate::diffcore::{Matrix, Mlp};
use crate::policy::{
    action_vjp_reparam, log_prob, log_prob_grad_fixed, log_prob_grad_reparam, squash_with_noise,
    DeterministicPolicy, GaussianPolicy, HeadGrad,
};
use crate::{Error, Result};

pub const ADVANTAGE_EPS: f64 = 1e-8;

/// `r + gamma * (1 - d) * v_next` where `v_next` is the target value at `s'`.
pub fn q_target_single(reward: f64, terminal: f64, v_next: f64, gamma: f64) -> f64 {
    reward + gamma * (1.0 - terminal) * v_next
}

/// Clipped double-Q target with the max-entropy correction.
pub fn clipped_double_q_target(
    reward: f64,
    terminal: f64,
    q1_next: f64,
    q2_next: f64,
    alpha_log_prob_next: f64,
    gamma: f64,
) -> f64 {
    reward + gamma * (1.0 - terminal) * (q1_next.min(q2_next) - alpha_log_prob_next)
}

/// Mean squared residual; gradients (in [`regression_loss`]) reach the
/// prediction only.
pub fn v_loss(v_pred: &[f64], q_at_policy_action: &[f64]) -> f64 {
    assert_eq!(v_pred.len(), q_at_policy_action.len());
    v_pred
        .iter()
        .zip(q_at_policy_action)
        .map(|(v, q)| (v - q) * (v - q))
        .sum::<f64>()
        / v_pred.len() as f64
}

pub fn advantage(q: f64, v: f64) -> f64 {
    q - v
}

/// `(q_r - v_r) - beta * (q_c - v_c)`
pub fn copac2_advantage(q_r: f64, v_r: f64, q_c: f64, v_c: f64, beta: f64) -> f64 {
    (q_r - v_r) - beta * (q_c - v_c)
}

/// Standardizes with the population std plus [`ADVANTAGE_EPS`]. A batch of
/// one has no spread and maps to zero.
pub fn normalize_advantages(a: &[f64]) -> Vec<f64> {
    let n = a.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mean = a.iter().sum::<f64>() / n as f64;
    let var = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let denom = var.sqrt() + ADVANTAGE_EPS;
    a.iter().map(|x| (x - mean) / denom).collect()
}

/// `beta * (M - J_C)`, the objective whose gradient drives the penalty.
pub fn beta_objective(beta: f64, cost_limit: f64, episode_cost: f64) -> f64 {
    beta * (cost_limit - episode_cost)
}

pub fn beta_objective_grad(cost_limit: f64, episode_cost: f64) -> f64 {
    cost_limit - episode_cost
}

/// One projected descent step on [`beta_objective`]. Without an epoch
/// estimate of `J_C` the penalty is left alone.
pub fn update_beta(beta: f64, cost_limit: f64, learning_rate: f64, episode_cost: Option<f64>) -> f64 {
    match episode_cost {
        Some(j) => (beta - learning_rate * beta_objective_grad(cost_limit, j)).max(0.0),
        None => beta,
    }
}

/// Smoothed target action `clamp(mu(s') + clip(sigma * eps, +-c), -1, 1)`.
pub fn td3_target_actions(
    actor_target: &DeterministicPolicy,
    next_obs: &Matrix,
    noise: &Matrix,
    sigma: f64,
    clip: f64,
) -> Result<Matrix> {
    let mut a = actor_target.actions(next_obs)?;
    if noise.rows() != a.rows() || noise.cols() != a.cols() {
        return Err(Error::Shape("smoothing noise does not match action batch".into()));
    }
    for (ai, &e) in a.as_mut_slice().iter_mut().zip(noise.as_slice()) {
        *ai = (*ai + (sigma * e).clamp(-clip, clip)).clamp(-1.0, 1.0);
    }
    Ok(a)
}

/// Elementwise minimum of single-column outputs from several critics,
/// together with the index of the critic that attained it (first on ties).
pub fn min_over_critics(outputs: &[Matrix]) -> (Vec<f64>, Vec<usize>) {
    let n = outputs[0].rows();
    let mut vals = outputs[0].column(0);
    let mut arg = vec![0; n];
    for (k, m) in outputs.iter().enumerate().skip(1) {
        for r in 0..n {
            let v = m.get(r, 0);
            if v < vals[r] {
                vals[r] = v;
                arg[r] = k;
            }
        }
    }
    (vals, arg)
}

/// Mean squared error of a single-output network against fixed targets.
/// Gradients are accumulated into `net`.
pub fn regression_loss(net: &mut Mlp, input: &Matrix, targets: &[f64], name: &str) -> Result<f64> {
    if input.rows() != targets.len() {
        return Err(Error::Dimension {
            context: "regression targets",
            expected: input.rows(),
            got: targets.len(),
        });
    }
    let (pred, cache) = net.forward_cached(input)?;
    let n = targets.len() as f64;
    let mut d = Matrix::zeros(pred.rows(), 1);
    let mut loss = 0.0;
    for (r, &y) in targets.iter().enumerate() {
        let e = pred.get(r, 0) - y;
        loss += e * e;
        d.set(r, 0, 2.0 * e / n);
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::NonFinite(name.to_string()));
    }
    net.backward(&cache, &d, false)?;
    Ok(loss)
}

/// Value, log-probabilities and sample details of a policy loss.
#[derive(Debug, Clone)]
pub struct PolicyLoss {
    pub loss: f64,
    /// Log-probabilities of the samples the temperature loss should use.
    pub log_probs: Vec<f64>,
}

/// Score-function policy loss with an optional reparameterized entropy bonus:
/// `mean[alpha * log pi(a_rp|s) - A_hat * log pi(a_pi|s)]`.
///
/// `pi_pre_squash` holds the pre-squash values of the non-reparameterized
/// actions; `rp_noise` the standard-normal draws for the bonus sample.
/// Returned log-probabilities are those of `a_pi`.
pub fn opac2_policy_loss(
    policy: &mut GaussianPolicy,
    obs: &Matrix,
    pi_pre_squash: &[Vec<f64>],
    rp_noise: &[Vec<f64>],
    advantages: &[f64],
    alpha: f64,
    entropy_bonus: bool,
) -> Result<PolicyLoss> {
    let n = obs.rows();
    for (context, got) in [
        ("policy-loss actions", pi_pre_squash.len()),
        ("policy-loss noise", rp_noise.len()),
        ("policy-loss advantages", advantages.len()),
    ] {
        if got != n {
            return Err(Error::Dimension { context, expected: n, got });
        }
    }
    let (heads, cache) = policy.heads(obs)?;
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut log_probs = Vec::with_capacity(n);
    let mut grads = Vec::with_capacity(n);
    for i in 0..n {
        let head = &heads[i];
        let lp_pi = log_prob(head, &pi_pre_squash[i]);
        log_probs.push(lp_pi);
        let mut g = HeadGrad::zeros(head.dim());
        g.add_scaled(-advantages[i] * inv_n, &log_prob_grad_fixed(head, &pi_pre_squash[i]));
        loss -= advantages[i] * lp_pi;
        if entropy_bonus {
            let rp = squash_with_noise(head, &rp_noise[i], true);
            loss += alpha * rp.log_prob;
            g.add_scaled(alpha * inv_n, &log_prob_grad_reparam(head, &rp));
        }
        grads.push(g);
    }
    loss *= inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("policy".into()));
    }
    policy.backward(&cache, &grads)?;
    Ok(PolicyLoss { loss, log_probs })
}

/// Cost term `beta * min_j Q_c,j(s, a)` subtracted from the reward critics.
pub struct CostPenalty<'a> {
    pub critics: &'a [Mlp],
    pub beta: f64,
}

/// `sum_rows weight_r * min_k critic_k(s_r, a_r)` and its action gradient.
fn min_critic_action_grad(
    critics: &[Mlp],
    input: &Matrix,
    obs_dim: usize,
    weight: f64,
) -> Result<(Vec<f64>, Matrix)> {
    let mut outs = Vec::with_capacity(critics.len());
    let mut caches = Vec::with_capacity(critics.len());
    for c in critics {
        let (o, cache) = c.forward_cached(input)?;
        outs.push(o);
        caches.push(cache);
    }
    let (vals, arg) = min_over_critics(&outs);
    let n = input.rows();
    let mut d_input = Matrix::zeros(n, input.cols());
    for (k, c) in critics.iter().enumerate() {
        let mut d = Matrix::zeros(n, 1);
        let mut any = false;
        for r in 0..n {
            if arg[r] == k {
                d.set(r, 0, weight);
                any = true;
            }
        }
        if any {
            let g = c.input_grad(&caches[k], &d)?;
            for (acc, v) in d_input.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *acc += v;
            }
        }
    }
    Ok((vals, d_input.columns(obs_dim, input.cols())))
}

/// Reparameterized soft policy loss
/// `mean[alpha * log pi(a|s) - min_i Q_i(s, a) + beta * min_j Q_c,j(s, a)]`.
/// Only the policy receives gradients.
pub fn sac_policy_loss(
    policy: &mut GaussianPolicy,
    critics: &[Mlp],
    cost: Option<CostPenalty<'_>>,
    obs: &Matrix,
    noise: &[Vec<f64>],
    alpha: f64,
) -> Result<PolicyLoss> {
    let n = obs.rows();
    if noise.len() != n {
        return Err(Error::Dimension {
            context: "policy-loss noise",
            expected: n,
            got: noise.len(),
        });
    }
    let (heads, cache) = policy.heads(obs)?;
    let samples: Vec<_> = heads
        .iter()
        .zip(noise)
        .map(|(h, xi)| squash_with_noise(h, xi, true))
        .collect();
    let actions = Matrix::from_rows(policy.act_dim(), samples.iter().map(|s| s.action.as_slice()))?;
    let input = obs.hcat(&actions)?;
    let inv_n = 1.0 / n as f64;
    let (q, mut d_action) = min_critic_action_grad(critics, &input, obs.cols(), -inv_n)?;
    let mut loss: f64 = samples
        .iter()
        .zip(&q)
        .map(|(s, q)| alpha * s.log_prob - q)
        .sum();
    if let Some(pen) = cost {
        let (qc, dc) = min_critic_action_grad(pen.critics, &input, obs.cols(), pen.beta * inv_n)?;
        loss += pen.beta * qc.iter().sum::<f64>();
        for (a, b) in d_action.as_mut_slice().iter_mut().zip(dc.as_slice()) {
            *a += b;
        }
    }
    loss *= inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("policy".into()));
    }
    let grads: Vec<HeadGrad> = heads
        .iter()
        .zip(&samples)
        .enumerate()
        .map(|(r, (h, s))| {
            let mut g = action_vjp_reparam(h, s, d_action.row(r));
            g.add_scaled(alpha * inv_n, &log_prob_grad_reparam(h, s));
            g
        })
        .collect();
    policy.backward(&cache, &grads)?;
    Ok(PolicyLoss {
        loss,
        log_probs: samples.iter().map(|s| s.log_prob).collect(),
    })
}

/// Deterministic actor loss `-mean[Q_1(s, mu(s)) - beta * Q_c,1(s, mu(s))]`.
pub fn td3_actor_loss(
    actor: &mut DeterministicPolicy,
    q1: &Mlp,
    cost: Option<(&Mlp, f64)>,
    obs: &Matrix,
) -> Result<f64> {
    let n = obs.rows();
    let inv_n = 1.0 / n as f64;
    let (actions, cache) = actor.actions_cached(obs)?;
    let input = obs.hcat(&actions)?;
    let (q, d_q) = min_critic_action_grad(std::slice::from_ref(q1), &input, obs.cols(), -inv_n)?;
    let mut loss = -q.iter().sum::<f64>();
    let mut d_action = d_q;
    if let Some((qc, beta)) = cost {
        let (c, dc) = min_critic_action_grad(std::slice::from_ref(qc), &input, obs.cols(), beta * inv_n)?;
        loss += beta * c.iter().sum::<f64>();
        for (a, b) in d_action.as_mut_slice().iter_mut().zip(dc.as_slice()) {
            *a += b;
        }
    }
    loss *= inv_n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("actor".into()));
    }
    actor.backward(&cache, &actions, &d_action)?;
    Ok(loss)
}
