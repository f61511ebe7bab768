use opac_core::algos::losses::{
    normalize_advantages, opac2_policy_loss, sac_policy_loss, td3_actor_loss, update_beta,
    CostPenalty,
};
use opac_core::algos::{Agent, AgentConfig, AgentKind, Algorithm, Trainer};
use opac_core::diffcore::{Activation, Matrix, Mlp, MlpSpec, OptimizerConfig};
use opac_core::envs::{NavConfig, NavEnv};
use opac_core::policy::{log_prob, standard_normal, DeterministicPolicy, GaussianPolicy, StdMode};
use opac_core::replay::Transition;
use opac_core::seeding::{SeedFan, Stream};
use proptest::prelude::*;

fn small_cfg() -> AgentConfig {
    AgentConfig {
        batch_size: 16,
        hidden_dims: vec![16, 16],
        initial_exploration_steps: 100,
        replay_capacity: 10_000,
        learning_rate: 1e-3,
        cost_limit: Some(2.0),
        epoch_len: 100,
        beta_learning_rate: 1e-3,
        ..AgentConfig::default()
    }
}

fn trainer(algorithm: Algorithm, cfg: &AgentConfig, seed: u64) -> Trainer<NavEnv> {
    let fan = SeedFan::new(seed);
    let nav = NavConfig {
        constrained: algorithm.is_constrained(),
        episode_len: 50,
        ..NavConfig::default()
    };
    let env = NavEnv::new(nav.clone(), fan.stream(Stream::Env)).unwrap();
    let agent = Agent::new(algorithm, cfg, nav.obs_dim(), 2, fan).unwrap();
    Trainer::new(agent, env, &fan).unwrap()
}

fn nav_obs_dim() -> usize {
    NavConfig::default().obs_dim()
}

fn buffer_contents(t: &Trainer<NavEnv>) -> Vec<Transition> {
    t.buffer.iter_oldest_first().cloned().collect()
}

/// `(main, target)` pairs that must coincide right after a reset.
fn target_pairs(agent: &Agent) -> Vec<(Vec<f64>, Vec<f64>)> {
    match &agent.kind {
        AgentKind::Opac2(a) => {
            let mut v = vec![(a.v.store.flat_values(), a.v_target.store.flat_values())];
            if let Some(c) = &a.cost {
                v.push((c.v.store.flat_values(), c.v_target.store.flat_values()));
            }
            v
        }
        AgentKind::Sac(a) => a
            .q
            .iter()
            .zip(&a.q_target)
            .chain(a.cost_q.iter().zip(&a.cost_q_target))
            .map(|(m, t)| (m.store.flat_values(), t.store.flat_values()))
            .collect(),
        AgentKind::Td3(a) => a
            .q
            .iter()
            .zip(&a.q_target)
            .chain(a.cost_q.iter().zip(&a.cost_q_target))
            .map(|(m, t)| (m.store.flat_values(), t.store.flat_values()))
            .chain(std::iter::once((a.actor.net.store.flat_values(), a.actor_target.net.store.flat_values())))
            .collect(),
    }
}

#[test]
fn reset_keeps_replay_temperature_and_penalty() {
    for algorithm in [Algorithm::Copac2, Algorithm::SacConstrained, Algorithm::Td3Constrained] {
        let cfg = AgentConfig {
            reset_interval: Some(300),
            initial_beta: 0.5,
            ..small_cfg()
        };
        let mut t = trainer(algorithm, &cfg, 1);
        for _ in 0..300 {
            t.train_step().unwrap();
        }
        assert!(target_pairs(&t.agent).iter().any(|(m, tg)| m != tg), "{algorithm}: targets lag before reset");

        let before_buffer = buffer_contents(&t);
        let before_params = t.agent.flat_parameters();
        let alpha = t.agent.alpha();
        let beta = t.agent.beta();
        assert!(beta.unwrap() > 0.0);

        assert!(!t.agent.maybe_reset(299).unwrap());
        assert_eq!(t.agent.flat_parameters(), before_params);

        assert!(t.agent.maybe_reset(300).unwrap());
        assert_eq!(t.agent.resets, 1);
        assert_ne!(t.agent.flat_parameters(), before_params);
        for (m, tg) in target_pairs(&t.agent) {
            assert_eq!(m, tg, "{algorithm}: targets re-synced");
        }
        assert_eq!(t.agent.alpha(), alpha);
        assert_eq!(t.agent.beta(), beta);
        assert_eq!(buffer_contents(&t), before_buffer);
    }
}

#[test]
fn scheduled_reset_fires_inside_train_step_without_touching_old_data() {
    let cfg = AgentConfig {
        reset_interval: Some(200),
        ..small_cfg()
    };
    let mut t = trainer(Algorithm::Sac, &cfg, 2);
    for _ in 0..200 {
        t.train_step().unwrap();
    }
    let before = buffer_contents(&t);
    assert_eq!(t.agent.resets, 0);
    t.train_step().unwrap();
    assert_eq!(t.agent.resets, 1);
    let after = buffer_contents(&t);
    assert_eq!(after.len(), before.len() + 1);
    assert_eq!(&after[..before.len()], &before[..]);
}

#[test]
fn resets_are_reproducible_and_distinct() {
    let run = || {
        let mut t = trainer(Algorithm::Opac2, &small_cfg(), 3);
        t.agent.reset().unwrap();
        let first = t.agent.flat_parameters();
        t.agent.reset().unwrap();
        (first, t.agent.flat_parameters())
    };
    let (a1, a2) = run();
    let (b1, b2) = run();
    assert_eq!(a1, b1);
    assert_eq!(a2, b2);
    assert_ne!(a1, a2);
}

#[test]
fn exploration_phase_is_uniform() {
    let cfg = AgentConfig {
        initial_exploration_steps: 10_000,
        ..small_cfg()
    };
    let mut agent = Agent::new(Algorithm::Sac, &cfg, 3, 2, SeedFan::new(4)).unwrap();
    let obs = [0.1, -0.2, 0.3];
    let mut sums = [0.0; 2];
    let n = 10_000;
    for step in 0..n {
        let a = agent.act_for_training(&obs, step).unwrap();
        assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
        for (s, x) in sums.iter_mut().zip(&a) {
            *s += x;
        }
    }
    for s in sums {
        assert!((s / n as f64).abs() < 0.03, "mean {}", s / n as f64);
    }
}

#[test]
fn td3_without_exploration_noise_acts_deterministically() {
    let cfg = AgentConfig {
        exploration_noise: 0.0,
        ..small_cfg()
    };
    let mut agent = Agent::new(Algorithm::Td3, &cfg, 3, 2, SeedFan::new(5)).unwrap();
    let obs = [0.4, 0.0, -0.7];
    let step = cfg.initial_exploration_steps;
    assert_eq!(agent.act_for_training(&obs, step).unwrap(), agent.deterministic_action(&obs).unwrap());
    assert_ne!(agent.act_for_training(&obs, 0).unwrap(), agent.deterministic_action(&obs).unwrap());
}

#[test]
fn td3_actor_runs_every_other_critic_step() {
    let mut t = trainer(Algorithm::Td3, &small_cfg(), 6);
    for _ in 0..121 {
        t.train_step().unwrap();
    }
    let AgentKind::Td3(a) = &t.agent.kind else { unreachable!() };
    // updates start once the buffer holds a batch
    assert_eq!(a.critic_steps, 121 - 15);
    assert_eq!(a.actor_steps, a.critic_steps / 2);
}

#[test]
fn zero_gradient_steps_only_fill_the_buffer() {
    let cfg = AgentConfig {
        gradient_steps: 0,
        ..small_cfg()
    };
    let mut t = trainer(Algorithm::Copac2, &cfg, 7);
    let params = t.agent.flat_parameters();
    for k in 1..=150 {
        t.train_step().unwrap();
        assert_eq!(t.buffer.len(), k);
    }
    assert_eq!(t.agent.flat_parameters(), params);
}

#[test]
fn checkpoint_roundtrip() {
    for algorithm in [Algorithm::Copac2, Algorithm::SacConstrained, Algorithm::Td3] {
        let mut t = trainer(algorithm, &small_cfg(), 8);
        for _ in 0..250 {
            t.train_step().unwrap();
        }
        let mut text = Vec::new();
        t.agent.save_checkpoint(&mut text).unwrap();
        let obs_dim = nav_obs_dim();
        let mut fresh = Agent::new(algorithm, &small_cfg(), obs_dim, 2, SeedFan::new(99)).unwrap();
        assert_ne!(fresh.flat_parameters(), t.agent.flat_parameters());
        fresh.load_checkpoint(&mut text.as_slice()).unwrap();
        assert_eq!(fresh.flat_parameters(), t.agent.flat_parameters());
        assert_eq!(fresh.alpha(), t.agent.alpha());
        assert_eq!(fresh.beta(), t.agent.beta());
        let obs = vec![0.05; obs_dim];
        assert_eq!(fresh.deterministic_action(&obs).unwrap(), t.agent.deterministic_action(&obs).unwrap());

        let mut other = Agent::new(Algorithm::Opac2, &small_cfg(), obs_dim, 2, SeedFan::new(1)).unwrap();
        if algorithm != Algorithm::Opac2 {
            assert!(other.load_checkpoint(&mut text.as_slice()).is_err());
        }
    }
}

#[test]
fn positive_advantage_action_gains_probability() {
    let mut rng = SeedFan::new(9).stream(Stream::Init);
    let mut policy = GaussianPolicy::new(2, 1, vec![8], Activation::Tanh, StdMode::StateDependent, &mut rng).unwrap();
    let obs = Matrix::from_vec(2, 2, vec![0.3, -0.1, 0.3, -0.1]).unwrap();
    let good = vec![0.4];
    let bad = vec![-0.6];
    let gap = |p: &GaussianPolicy| {
        let head = p.head(&[0.3, -0.1]).unwrap();
        log_prob(&head, &good) - log_prob(&head, &bad)
    };
    let before = gap(&policy);
    let adv = normalize_advantages(&[1.0, -1.0]);
    opac2_policy_loss(&mut policy, &obs, &[good.clone(), bad.clone()], &[vec![], vec![]], &adv, 0.0, false).unwrap();
    policy.step(&OptimizerConfig::adam(1e-3)).unwrap();
    assert!(gap(&policy) > before);
}

#[test]
fn zero_penalty_matches_unconstrained_policy_gradient() {
    let mut rng = SeedFan::new(10).stream(Stream::Init);
    let spec = MlpSpec::new(5, vec![8], 1, Activation::Relu);
    let critics = [Mlp::new(spec.clone(), &mut rng).unwrap(), Mlp::new(spec.clone(), &mut rng).unwrap()];
    let costs = [Mlp::new(spec.clone(), &mut rng).unwrap()];
    let policy = GaussianPolicy::new(3, 2, vec![8], Activation::Relu, StdMode::StateDependent, &mut rng).unwrap();
    let obs = Matrix::from_vec(4, 3, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let noise: Vec<_> = (0..4).map(|_| standard_normal(&mut rng, 2)).collect();

    let mut plain = policy.clone();
    sac_policy_loss(&mut plain, &critics, None, &obs, &noise, 0.2).unwrap();
    let mut penalized = policy.clone();
    let pen = CostPenalty { critics: &costs, beta: 0.0 };
    sac_policy_loss(&mut penalized, &critics, Some(pen), &obs, &noise, 0.2).unwrap();
    assert_eq!(plain.store.flat_grads(), penalized.store.flat_grads());

    let actor = DeterministicPolicy::new(3, 2, vec![8], Activation::Relu, &mut rng).unwrap();
    let mut a = actor.clone();
    td3_actor_loss(&mut a, &critics[0], None, &obs).unwrap();
    let mut b = actor.clone();
    td3_actor_loss(&mut b, &critics[0], Some((&costs[0], 0.0)), &obs).unwrap();
    assert_eq!(a.net.store.flat_grads(), b.net.store.flat_grads());
}

#[test]
fn buffer_grows_by_one_per_step() {
    let mut t = trainer(Algorithm::Opac2, &small_cfg(), 11);
    for k in 1..=60 {
        t.train_step().unwrap();
        assert_eq!(t.buffer.len(), k);
        assert_eq!(t.env_steps, k as u64);
    }
}

proptest! {
    #[test]
    fn beta_rises_with_episode_cost(beta in 0.0f64..5.0, m in 0.5f64..50.0, lr in 1e-4f64..0.5, j in 0.0f64..100.0, dj in 1e-3f64..10.0) {
        let lo = update_beta(beta, m, lr, Some(j));
        let hi = update_beta(beta, m, lr, Some(j + dj));
        prop_assert!(hi >= lo);
        if lo > 0.0 {
            prop_assert!(hi > lo);
            prop_assert!(((hi - lo) - lr * dj).abs() <= 1e-9 * (1.0 + hi.abs()));
        }
    }

    #[test]
    fn normalization_keeps_ranking(xs in prop::collection::vec(-100f64..100.0, 2..40)) {
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        prop_assume!(xs.iter().any(|x| (x - mean).abs() > 1e-6));
        let z = normalize_advantages(&xs);
        let order = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
            idx
        };
        prop_assert_eq!(order(&xs), order(&z));
    }
}
