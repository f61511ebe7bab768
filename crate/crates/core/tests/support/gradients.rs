//! Central finite-difference checks for every differentiable loss.

use opac_core::algos::losses::{
    beta_objective, beta_objective_grad, clipped_double_q_target, copac2_advantage,
    normalize_advantages, opac2_policy_loss, q_target_single, regression_loss, sac_policy_loss,
    td3_actor_loss, td3_target_actions, v_loss, CostPenalty,
};
use opac_core::diffcore::{Activation, Matrix, Mlp, MlpSpec, OptimizerConfig, ParamStore};
use opac_core::policy::{
    sample_action, standard_normal, DeterministicPolicy, GaussianPolicy, StdMode, Temperature,
};
use opac_core::seeding::{Rng, SeedFan, Stream};
use rand::Rng as _;

use super::{uniform_matrix, uniform_vec};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Gradient magnitudes below this are compared on an absolute scale.
pub const GRAD_FLOOR: f64 = 1e-5;

const OBS: usize = 3;
const ACT: usize = 2;
const BATCH: usize = 6;
const HIDDEN: [usize; 2] = [8, 8];
const GAMMA: f64 = 0.99;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

pub trait HasStore: Clone {
    fn store_mut(&mut self) -> &mut ParamStore;
}

impl HasStore for Mlp {
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

impl HasStore for GaussianPolicy {
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }
}

impl HasStore for DeterministicPolicy {
    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.net.store
    }
}

/// Worst relative error between the accumulated gradient of `loss` and its
/// central difference, over every scalar in the model.
pub fn fd_check<M: HasStore>(model: &M, loss: impl Fn(&mut M) -> f64) -> f64 {
    let mut m = model.clone();
    m.store_mut().zero_grads();
    loss(&mut m);
    let analytic = m.store_mut().flat_grads();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let mut plus = model.clone();
        *plus.store_mut().scalar_mut(i) += STEP;
        let mut minus = model.clone();
        *minus.store_mut().scalar_mut(i) -= STEP;
        let numeric = (loss(&mut plus) - loss(&mut minus)) / (2.0 * STEP);
        worst = worst.max(rel_err(a, numeric));
    }
    worst
}

fn scalar_fd(f: impl Fn(f64) -> f64, x: f64, analytic: f64) -> f64 {
    rel_err(analytic, (f(x + STEP) - f(x - STEP)) / (2.0 * STEP))
}

fn net(rng: &mut Rng, input: usize) -> Mlp {
    Mlp::new(MlpSpec::new(input, HIDDEN.to_vec(), 1, Activation::Tanh), rng).unwrap()
}

fn column(m: &Matrix) -> Vec<f64> {
    m.column(0)
}

/// Random networks and a random minibatch shared by the checks of one seed.
struct Scene {
    rng: Rng,
    obs: Matrix,
    act: Matrix,
    next_obs: Matrix,
    reward: Vec<f64>,
    terminal: Vec<f64>,
}

impl Scene {
    fn new(seed: u64) -> Self {
        let mut rng = SeedFan::new(seed).stream(Stream::Init);
        let obs = uniform_matrix(&mut rng, BATCH, OBS, -1.0, 1.0);
        let act = uniform_matrix(&mut rng, BATCH, ACT, -0.9, 0.9);
        let next_obs = uniform_matrix(&mut rng, BATCH, OBS, -1.0, 1.0);
        let reward = uniform_vec(&mut rng, BATCH, -2.0, 2.0);
        let terminal = (0..BATCH)
            .map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 })
            .collect();
        Self {
            rng,
            obs,
            act,
            next_obs,
            reward,
            terminal,
        }
    }

    fn sa(&self) -> Matrix {
        self.obs.hcat(&self.act).unwrap()
    }

    fn policy(&mut self, mode: StdMode) -> GaussianPolicy {
        GaussianPolicy::new(OBS, ACT, HIDDEN.to_vec(), Activation::Tanh, mode, &mut self.rng).unwrap()
    }

    fn noise(&mut self) -> Vec<Vec<f64>> {
        (0..BATCH).map(|_| standard_normal(&mut self.rng, ACT)).collect()
    }

    /// Pre-squash values and squashed actions of fresh policy samples.
    fn policy_samples(&mut self, policy: &GaussianPolicy, obs: &Matrix) -> (Vec<Vec<f64>>, Matrix, Vec<f64>) {
        let (heads, _) = policy.heads(obs).unwrap();
        let samples: Vec<_> = heads.iter().map(|h| sample_action(h, &mut self.rng, false)).collect();
        let actions = Matrix::from_rows(ACT, samples.iter().map(|s| s.action.as_slice())).unwrap();
        (
            samples.iter().map(|s| s.pre_squash.clone()).collect(),
            actions,
            samples.iter().map(|s| s.log_prob).collect(),
        )
    }
}

fn q_single(seed: u64) -> f64 {
    let mut s = Scene::new(seed);
    let q = net(&mut s.rng, OBS + ACT);
    let v_targ = net(&mut s.rng, OBS);
    let v_next = column(&v_targ.forward_batch(&s.next_obs).unwrap());
    let y: Vec<f64> = (0..BATCH)
        .map(|i| q_target_single(s.reward[i], s.terminal[i], v_next[i], GAMMA))
        .collect();
    let input = s.sa();
    fd_check(&q, |m| regression_loss(m, &input, &y, "q").unwrap())
}

fn v_regression(seed: u64) -> f64 {
    let mut s = Scene::new(seed);
    let v = net(&mut s.rng, OBS);
    let q = net(&mut s.rng, OBS + ACT);
    let policy = s.policy(StdMode::StateDependent);
    let obs = s.obs.clone();
    let (_, a_pi, log_probs) = s.policy_samples(&policy, &obs);
    let q_pi = column(&q.forward_batch(&obs.hcat(&a_pi).unwrap()).unwrap());
    let alpha = 0.2;
    // max-entropy variant of the target
    let y: Vec<f64> = q_pi.iter().zip(&log_probs).map(|(q, lp)| q - alpha * lp).collect();
    let pred = column(&v.forward_batch(&obs).unwrap());
    let mut probe = v.clone();
    let reported = regression_loss(&mut probe, &obs, &y, "v").unwrap();
    assert!((reported - v_loss(&pred, &y)).abs() < 1e-12);
    fd_check(&v, |m| regression_loss(m, &obs, &y, "v").unwrap())
}

fn actor_critic_policy(seed: u64, mode: StdMode, constrained: bool) -> f64 {
    let mut s = Scene::new(seed);
    let policy = s.policy(mode);
    let q = net(&mut s.rng, OBS + ACT);
    let v = net(&mut s.rng, OBS);
    let qc = net(&mut s.rng, OBS + ACT);
    let vc = net(&mut s.rng, OBS);
    let obs = s.obs.clone();
    let (pre, a_pi, _) = s.policy_samples(&policy, &obs);
    let input = obs.hcat(&a_pi).unwrap();
    let qv = column(&q.forward_batch(&input).unwrap());
    let vv = column(&v.forward_batch(&obs).unwrap());
    let beta = if constrained { 0.7 } else { 0.0 };
    let qcv = column(&qc.forward_batch(&input).unwrap());
    let vcv = column(&vc.forward_batch(&obs).unwrap());
    let raw: Vec<f64> = (0..BATCH)
        .map(|i| copac2_advantage(qv[i], vv[i], qcv[i], vcv[i], beta))
        .collect();
    let adv = normalize_advantages(&raw);
    let noise = s.noise();
    fd_check(&policy, |p| {
        opac2_policy_loss(p, &obs, &pre, &noise, &adv, 0.3, true).unwrap().loss
    })
}

fn sac_critic(seed: u64) -> f64 {
    let mut s = Scene::new(seed);
    let policy = s.policy(StdMode::StateDependent);
    let q1 = net(&mut s.rng, OBS + ACT);
    let q2 = net(&mut s.rng, OBS + ACT);
    let t1 = net(&mut s.rng, OBS + ACT);
    let t2 = net(&mut s.rng, OBS + ACT);
    let next = s.next_obs.clone();
    let (_, a_next, lp_next) = s.policy_samples(&policy, &next);
    let next_in = next.hcat(&a_next).unwrap();
    let n1 = column(&t1.forward_batch(&next_in).unwrap());
    let n2 = column(&t2.forward_batch(&next_in).unwrap());
    let alpha = 0.15;
    let y: Vec<f64> = (0..BATCH)
        .map(|i| clipped_double_q_target(s.reward[i], s.terminal[i], n1[i], n2[i], alpha * lp_next[i], GAMMA))
        .collect();
    let input = s.sa();
    let e1 = fd_check(&q1, |m| regression_loss(m, &input, &y, "q1").unwrap());
    let e2 = fd_check(&q2, |m| regression_loss(m, &input, &y, "q2").unwrap());
    e1.max(e2)
}

fn sac_policy(seed: u64, constrained: bool) -> f64 {
    let mut s = Scene::new(seed);
    let policy = s.policy(StdMode::StateDependent);
    let critics = [net(&mut s.rng, OBS + ACT), net(&mut s.rng, OBS + ACT)];
    let costs = [net(&mut s.rng, OBS + ACT), net(&mut s.rng, OBS + ACT)];
    let obs = s.obs.clone();
    let noise = s.noise();
    fd_check(&policy, |p| {
        let pen = constrained.then(|| CostPenalty {
            critics: &costs,
            beta: 0.8,
        });
        sac_policy_loss(p, &critics, pen, &obs, &noise, 0.25).unwrap().loss
    })
}

fn td3_critic(seed: u64) -> f64 {
    let mut s = Scene::new(seed);
    let actor_target =
        DeterministicPolicy::new(OBS, ACT, HIDDEN.to_vec(), Activation::Tanh, &mut s.rng).unwrap();
    let q = net(&mut s.rng, OBS + ACT);
    let t1 = net(&mut s.rng, OBS + ACT);
    let t2 = net(&mut s.rng, OBS + ACT);
    let eps = Matrix::from_rows(ACT, s.noise().iter().map(|v| v.as_slice())).unwrap();
    let a_next = td3_target_actions(&actor_target, &s.next_obs, &eps, 0.2, 0.5).unwrap();
    let next_in = s.next_obs.hcat(&a_next).unwrap();
    let n1 = column(&t1.forward_batch(&next_in).unwrap());
    let n2 = column(&t2.forward_batch(&next_in).unwrap());
    let y: Vec<f64> = (0..BATCH)
        .map(|i| clipped_double_q_target(s.reward[i], s.terminal[i], n1[i], n2[i], 0.0, GAMMA))
        .collect();
    let input = s.sa();
    fd_check(&q, |m| regression_loss(m, &input, &y, "q").unwrap())
}

fn td3_actor(seed: u64, constrained: bool) -> f64 {
    let mut s = Scene::new(seed);
    let actor = DeterministicPolicy::new(OBS, ACT, HIDDEN.to_vec(), Activation::Tanh, &mut s.rng).unwrap();
    let q1 = net(&mut s.rng, OBS + ACT);
    let qc = net(&mut s.rng, OBS + ACT);
    let obs = s.obs.clone();
    fd_check(&actor, |a| {
        td3_actor_loss(a, &q1, constrained.then_some((&qc, 0.6)), &obs).unwrap()
    })
}

fn alpha_loss(seed: u64) -> f64 {
    let mut s = Scene::new(seed);
    let lps = uniform_vec(&mut s.rng, BATCH, -4.0, 2.0);
    let alpha0: f64 = s.rng.random_range(0.01..2.0);
    let target = -(ACT as f64);
    let temp = |log_alpha: f64| {
        Temperature::new(log_alpha.exp(), target, OptimizerConfig::adam(1e-3)).unwrap()
    };
    let t = temp(alpha0.ln());
    scalar_fd(|la| temp(la).loss(&lps), t.log_alpha(), t.loss_grad(&lps))
}

fn beta_loss(seed: u64) -> f64 {
    let mut s = Scene::new(seed);
    let m = s.rng.random_range(1.0..30.0);
    let j = s.rng.random_range(0.0..60.0);
    let beta = s.rng.random_range(0.0..5.0);
    scalar_fd(|b| beta_objective(b, m, j), beta, beta_objective_grad(m, j))
}

/// Every loss under its own name, as `(name, check for one seed)`.
pub fn suite() -> Vec<(&'static str, fn(u64) -> f64)> {
    vec![
        ("q_single", q_single),
        ("v", v_regression),
        ("opac2_policy", |s| actor_critic_policy(s, StdMode::StateDependent, false)),
        ("opac2_policy_free_std", |s| actor_critic_policy(s, StdMode::StateIndependent, false)),
        ("copac2_policy", |s| actor_critic_policy(s, StdMode::StateDependent, true)),
        ("sac_q", sac_critic),
        ("sac_policy", |s| sac_policy(s, false)),
        ("sac_policy_cost", |s| sac_policy(s, true)),
        ("td3_critic", td3_critic),
        ("td3_actor", |s| td3_actor(s, false)),
        ("td3_actor_cost", |s| td3_actor(s, true)),
        ("alpha", alpha_loss),
        ("beta", beta_loss),
    ]
}

pub const SEEDS: u64 = 20;

/// Worst error per loss over [`SEEDS`] seeds.
pub fn run_suite() -> Vec<(&'static str, f64)> {
    suite()
        .into_iter()
        .map(|(name, check)| {
            let worst = (0..SEEDS).map(check).fold(0.0, f64::max);
            (name, worst)
        })
        .collect()
}
