//! A hand-built three-episode validation set and single-pass loop versions of
//! the two critic diagnostics.

use opac_core::algos::{Agent, AgentConfig, AgentKind, Algorithm};
use opac_core::diffcore::Mlp;
use opac_core::policy::{squash_with_noise, standard_normal};
use opac_core::replay::{ReplayBuffer, Source, Transition, ValidationEpisode, ValidationSet};
use opac_core::seeding::{Rng, SeedFan, Stream};
use rand::Rng as _;

pub const OBS: usize = 4;
pub const ACT: usize = 2;

/// Episodes of lengths 5, 8 and 3; the last one ends in a terminal state.
pub fn fixture(seed: u64) -> ValidationSet {
    let mut rng = SeedFan::new(seed).stream(Stream::EvalEnv);
    let mut set = ValidationSet::default();
    for (len, terminal_end) in [(5, false), (8, false), (3, true)] {
        let mut obs: Vec<f64> = (0..OBS).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut ep = ValidationEpisode {
            transitions: Vec::new(),
            rewards: Vec::new(),
            costs: Vec::new(),
            incentives: Vec::new(),
            truncated: !terminal_end,
        };
        for t in 0..len {
            let next: Vec<f64> = (0..OBS).map(|_| rng.random_range(-1.0..1.0)).collect();
            let incentive = rng.random_range(-1.0..2.0);
            let cost = if rng.random_bool(0.4) { 1.0 } else { 0.0 };
            let reward = incentive;
            ep.transitions.push(Transition {
                obs: obs.clone(),
                action: (0..ACT).map(|_| rng.random_range(-1.0..1.0)).collect(),
                reward,
                cost,
                incentive,
                next_obs: next.clone(),
                terminal: terminal_end && t + 1 == len,
                source: Source::Validation,
            });
            ep.rewards.push(reward);
            ep.costs.push(cost);
            ep.incentives.push(incentive);
            obs = next;
        }
        set.episodes.push(ep);
    }
    set
}

/// A small constrained agent whose targets have drifted from its critics.
pub fn trained_agent(algorithm: Algorithm, val: &ValidationSet, seed: u64) -> Agent {
    let cfg = AgentConfig {
        batch_size: 8,
        hidden_dims: vec![16, 16],
        initial_exploration_steps: 0,
        learning_rate: 1e-3,
        cost_limit: Some(1.0),
        rho: 0.9,
        ..AgentConfig::default()
    };
    let mut agent = Agent::new(algorithm, &cfg, OBS, ACT, SeedFan::new(seed)).unwrap();
    let mut buffer = ReplayBuffer::new(64).unwrap();
    for t in val.transitions() {
        buffer.push(t.clone());
    }
    let mut rng = SeedFan::new(seed).stream(Stream::Buffer);
    for _ in 0..25 {
        agent.update(&buffer, &mut rng, Some(2.0)).unwrap();
    }
    agent
}

fn q1(net: &Mlp, t: &Transition) -> f64 {
    let mut x = t.obs.clone();
    x.extend_from_slice(&t.action);
    net.forward(&x).unwrap()[0]
}

fn q_at(net: &Mlp, obs: &[f64], action: &[f64]) -> f64 {
    let mut x = obs.to_vec();
    x.extend_from_slice(action);
    net.forward(&x).unwrap()[0]
}

fn rms_loop(residuals: &[f64]) -> f64 {
    let mut s = 0.0;
    for r in residuals {
        s += r * r;
    }
    (s / residuals.len() as f64).sqrt()
}

fn done(t: &Transition) -> f64 {
    if t.terminal {
        1.0
    } else {
        0.0
    }
}

/// Loop recomputation of the validation TD errors (reward, cost). `rng` must
/// be a clone of the one handed to the batched version.
pub fn td_error_loop(agent: &Agent, val: &ValidationSet, rng: &mut Rng) -> (f64, Option<f64>) {
    let gamma = agent.cfg.gamma;
    let ts: Vec<&Transition> = val.transitions().collect();
    match &agent.kind {
        AgentKind::Opac2(a) => {
            let mut res = Vec::new();
            let mut res_c = Vec::new();
            for t in &ts {
                let d = done(t);
                let v = a.v_target.forward(&t.next_obs).unwrap()[0];
                res.push(q1(&a.q, t) - (t.reward + gamma * (1.0 - d) * v));
                if let Some(c) = &a.cost {
                    let vc = c.v_target.forward(&t.next_obs).unwrap()[0];
                    res_c.push(q1(&c.q, t) - (t.cost + gamma * (1.0 - d) * vc));
                }
            }
            (rms_loop(&res), a.cost.as_ref().map(|_| rms_loop(&res_c)))
        }
        AgentKind::Sac(a) => {
            let alpha = a.temperature.alpha();
            let mut next = Vec::new();
            for t in &ts {
                let head = a.policy.head(&t.next_obs).unwrap();
                next.push(squash_with_noise(&head, &standard_normal(rng, ACT), false));
            }
            let mut y = Vec::new();
            let mut yc = Vec::new();
            for (t, s) in ts.iter().zip(&next) {
                let d = done(t);
                let m = q_at(&a.q_target[0], &t.next_obs, &s.action)
                    .min(q_at(&a.q_target[1], &t.next_obs, &s.action));
                y.push(t.reward + gamma * (1.0 - d) * (m - alpha * s.log_prob));
                let mc = a
                    .cost_q_target
                    .iter()
                    .map(|n| q_at(n, &t.next_obs, &s.action))
                    .fold(f64::INFINITY, f64::min);
                yc.push(t.cost + gamma * (1.0 - d) * mc);
            }
            let pooled = |nets: &[Mlp], y: &[f64]| {
                let mut res = Vec::new();
                for n in nets {
                    for (t, y) in ts.iter().zip(y) {
                        res.push(q1(n, t) - y);
                    }
                }
                rms_loop(&res)
            };
            let cost = (!a.cost_q.is_empty()).then(|| pooled(&a.cost_q, &yc));
            (pooled(&a.q, &y), cost)
        }
        AgentKind::Td3(a) => {
            let mut y = Vec::new();
            let mut yc = Vec::new();
            for t in &ts {
                let d = done(t);
                let an = a.actor_target.act(&t.next_obs).unwrap();
                let m = q_at(&a.q_target[0], &t.next_obs, &an).min(q_at(&a.q_target[1], &t.next_obs, &an));
                y.push(t.reward + gamma * (1.0 - d) * m);
                let mc = a
                    .cost_q_target
                    .iter()
                    .map(|n| q_at(n, &t.next_obs, &an))
                    .fold(f64::INFINITY, f64::min);
                yc.push(t.cost + gamma * (1.0 - d) * mc);
            }
            let pooled = |nets: &[Mlp], y: &[f64]| {
                let mut res = Vec::new();
                for n in nets {
                    for (t, y) in ts.iter().zip(y) {
                        res.push(q1(n, t) - y);
                    }
                }
                rms_loop(&res)
            };
            let cost = (!a.cost_q.is_empty()).then(|| pooled(&a.cost_q, &yc));
            (pooled(&a.q, &y), cost)
        }
    }
}

/// Loop recomputation of the mean `Q(s_t, a_t) - G_t`.
pub fn q_error_loop(agent: &Agent, val: &ValidationSet) -> f64 {
    let gamma = agent.cfg.gamma;
    let mut total = 0.0;
    let mut count = 0usize;
    for ep in &val.episodes {
        for (t, tr) in ep.transitions.iter().enumerate() {
            let mut g = 0.0;
            let mut disc = 1.0;
            for r in &ep.rewards[t..] {
                g += disc * r;
                disc *= gamma;
            }
            let q = match &agent.kind {
                AgentKind::Opac2(a) => q1(&a.q, tr),
                AgentKind::Sac(a) => q1(&a.q[0], tr).min(q1(&a.q[1], tr)),
                AgentKind::Td3(a) => q1(&a.q[0], tr).min(q1(&a.q[1], tr)),
            };
            total += q - g;
            count += 1;
        }
    }
    total / count as f64
}
