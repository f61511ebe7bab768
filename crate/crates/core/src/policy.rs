//! Tanh-squashed diagonal Gaussian policies, the deterministic TD3 actor and
//! the learned entropy temperature.
//!
//! A squashed sample is `a = tanh(u)` with `u = mean + exp(log_std) * xi`,
//! `xi ~ N(0, I)`. Its log-density follows from the change of variables:
//! `log pi(a) = sum_i [log N(u_i; mean_i, std_i) - log(1 - tanh(u_i)^2)]`.
//!
//! Gradients of the head quantities (log-density, squashed action) with
//! respect to the mean and log-std outputs are written out analytically here
//! and pushed through the network by [`GaussianPolicy::backward`].

use std::f64::consts::LN_2;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{
    backward, forward_cached, init_params, optimizer_step, Activation, ForwardCache, Matrix, Mlp,
    MlpSpec, OptimizerConfig, Param, ParamStore,
};
use crate::seeding::Rng;
use crate::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Initial value of free (state-independent) log standard deviations.
pub const INITIAL_FREE_LOG_STD: f64 = -0.5;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(1 - tanh(u)^2)` in the overflow-free form `2 (ln 2 - u - softplus(-2u))`.
#[inline]
pub fn tanh_log_jacobian(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

/// Mean and (clamped) log standard deviation for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyHead {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl PolicyHead {
    /// Builds a head, clamping `log_std` into `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Self {
        let log_std = log_std
            .into_iter()
            .map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Self { mean, log_std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample {
    pub noise: Vec<f64>,
    pub pre_squash: Vec<f64>,
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub reparameterized: bool,
}

/// Gradient of a scalar with respect to one head's mean and log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrad {
    pub d_mean: Vec<f64>,
    pub d_log_std: Vec<f64>,
}

impl HeadGrad {
    pub fn zeros(dim: usize) -> Self {
        Self {
            d_mean: vec![0.0; dim],
            d_log_std: vec![0.0; dim],
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, scale: f64, other: &HeadGrad) {
        for (a, b) in self.d_mean.iter_mut().zip(&other.d_mean) {
            *a += scale * b;
        }
        for (a, b) in self.d_log_std.iter_mut().zip(&other.d_log_std) {
            *a += scale * b;
        }
    }
}

pub fn standard_normal(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Squashes `mean + std * noise`. The `reparameterized` flag only records
/// which gradient path callers should use; the values are identical.
pub fn squash_with_noise(
    head: &PolicyHead,
    noise: &[f64],
    reparameterized: bool,
) -> SquashedSample {
    let pre_squash: Vec<f64> = head
        .mean
        .iter()
        .zip(&head.log_std)
        .zip(noise)
        .map(|((m, l), xi)| m + l.exp() * xi)
        .collect();
    let action = pre_squash.iter().map(|u| u.tanh()).collect();
    let log_prob = log_prob(head, &pre_squash);
    SquashedSample {
        noise: noise.to_vec(),
        pre_squash,
        action,
        log_prob,
        reparameterized,
    }
}

pub fn sample_action(head: &PolicyHead, rng: &mut Rng, reparameterized: bool) -> SquashedSample {
    let noise = standard_normal(rng, head.dim());
    squash_with_noise(head, &noise, reparameterized)
}

/// Log-density of the squashed action `tanh(u)` given the pre-squash value.
pub fn log_prob(head: &PolicyHead, u: &[f64]) -> f64 {
    head.mean
        .iter()
        .zip(&head.log_std)
        .zip(u)
        .map(|((&m, &l), &ui)| {
            let z = (ui - m) * (-l).exp();
            -0.5 * z * z - l - HALF_LN_2PI - tanh_log_jacobian(ui)
        })
        .sum()
}

pub fn deterministic_action(head: &PolicyHead) -> Vec<f64> {
    head.mean.iter().map(|m| m.tanh()).collect()
}

/// d log pi(tanh(u)) / d(mean, log_std) with `u` held fixed (score function).
pub fn log_prob_grad_fixed(head: &PolicyHead, u: &[f64]) -> HeadGrad {
    let mut g = HeadGrad::zeros(head.dim());
    for i in 0..head.dim() {
        let inv_std = (-head.log_std[i]).exp();
        let z = (u[i] - head.mean[i]) * inv_std;
        g.d_mean[i] = z * inv_std;
        g.d_log_std[i] = z * z - 1.0;
    }
    g
}

/// Total derivative of `log pi(a)` for a reparameterized sample, where the
/// noise is fixed and `u = mean + std * noise` moves with the head.
pub fn log_prob_grad_reparam(head: &PolicyHead, sample: &SquashedSample) -> HeadGrad {
    let mut g = HeadGrad::zeros(head.dim());
    for i in 0..head.dim() {
        let t = 2.0 * sample.pre_squash[i].tanh();
        g.d_mean[i] = t;
        g.d_log_std[i] = -1.0 + t * head.log_std[i].exp() * sample.noise[i];
    }
    g
}

/// Vector-Jacobian product of the reparameterized action `tanh(mean + std * noise)`.
pub fn action_vjp_reparam(
    head: &PolicyHead,
    sample: &SquashedSample,
    d_action: &[f64],
) -> HeadGrad {
    let mut g = HeadGrad::zeros(head.dim());
    for i in 0..head.dim() {
        let a = sample.action[i];
        let du = d_action[i] * (1.0 - a * a);
        g.d_mean[i] = du;
        g.d_log_std[i] = du * head.log_std[i].exp() * sample.noise[i];
    }
    g
}

/// Whether the log-std is an extra network output or a free parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    StateDependent,
    StateIndependent,
}

impl std::str::FromStr for StdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "state_dependent" => Ok(StdMode::StateDependent),
            "state_independent" => Ok(StdMode::StateIndependent),
            other => Err(Error::Config(format!("unknown std mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for StdMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StdMode::StateDependent => "state_dependent",
            StdMode::StateIndependent => "state_independent",
        })
    }
}

/// Cached forward state of a batched policy evaluation.
#[derive(Debug, Clone)]
pub struct PolicyCache {
    net: ForwardCache,
    raw_log_std: Matrix,
}

/// Stochastic squashed-Gaussian policy network.
///
/// State-independent log-stds live in the same parameter store as the
/// network, under the name `log_std`, after the layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    spec: MlpSpec,
    act_dim: usize,
    std_mode: StdMode,
    pub store: ParamStore,
}

impl GaussianPolicy {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
        std_mode: StdMode,
        rng: &mut Rng,
    ) -> Result<Self> {
        let out = match std_mode {
            StdMode::StateDependent => 2 * act_dim,
            StdMode::StateIndependent => act_dim,
        };
        let spec = MlpSpec::new(obs_dim, hidden, out, activation);
        let store = Self::fresh_store(&spec, act_dim, std_mode, rng)?;
        Ok(Self {
            spec,
            act_dim,
            std_mode,
            store,
        })
    }

    fn fresh_store(
        spec: &MlpSpec,
        act_dim: usize,
        std_mode: StdMode,
        rng: &mut Rng,
    ) -> Result<ParamStore> {
        let mut store = init_params(spec, rng)?;
        if std_mode == StdMode::StateIndependent {
            store.push(Param::new(
                "log_std",
                1,
                act_dim,
                vec![INITIAL_FREE_LOG_STD; act_dim],
            )?)?;
        }
        Ok(store)
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn std_mode(&self) -> StdMode {
        self.std_mode
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn reset(&mut self, rng: &mut Rng) -> Result<()> {
        self.store = Self::fresh_store(&self.spec, self.act_dim, self.std_mode, rng)?;
        Ok(())
    }

    pub fn heads(&self, obs: &Matrix) -> Result<(Vec<PolicyHead>, PolicyCache)> {
        let (out, net) = forward_cached(&self.store, &self.spec, obs)?;
        let n = out.rows();
        let d = self.act_dim;
        let mut raw_log_std = Matrix::zeros(n, d);
        let mut heads = Vec::with_capacity(n);
        for r in 0..n {
            let row = out.row(r);
            let raw: Vec<f64> = match self.std_mode {
                StdMode::StateDependent => row[d..2 * d].to_vec(),
                StdMode::StateIndependent => self
                    .store
                    .get("log_std")
                    .expect("state-independent policy has log_std")
                    .value()
                    .to_vec(),
            };
            raw_log_std.row_mut(r).copy_from_slice(&raw);
            heads.push(PolicyHead::new(row[..d].to_vec(), raw));
        }
        Ok((heads, PolicyCache { net, raw_log_std }))
    }

    pub fn head(&self, obs: &[f64]) -> Result<PolicyHead> {
        let (mut heads, _) = self.heads(&Matrix::row_vector(obs))?;
        Ok(heads.remove(0))
    }

    /// Accumulates per-row head gradients into the parameter gradients.
    /// Log-std gradients are masked where the clamp is active.
    pub fn backward(&mut self, cache: &PolicyCache, grads: &[HeadGrad]) -> Result<()> {
        let n = cache.raw_log_std.rows();
        if grads.len() != n {
            return Err(Error::Dimension {
                context: "policy head gradients",
                expected: n,
                got: grads.len(),
            });
        }
        let d = self.act_dim;
        let mut d_out = Matrix::zeros(n, self.spec.output_dim);
        let mut d_free = vec![0.0; d];
        for (r, g) in grads.iter().enumerate() {
            let raw = cache.raw_log_std.row(r);
            let row = d_out.row_mut(r);
            row[..d].copy_from_slice(&g.d_mean);
            for i in 0..d {
                let pass = (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw[i]);
                let gl = if pass { g.d_log_std[i] } else { 0.0 };
                match self.std_mode {
                    StdMode::StateDependent => row[d + i] = gl,
                    StdMode::StateIndependent => d_free[i] += gl,
                }
            }
        }
        backward(&mut self.store, &self.spec, &cache.net, &d_out, true, false)?;
        if self.std_mode == StdMode::StateIndependent {
            let p = self.store.get_mut("log_std").expect("log_std present");
            for (g, v) in p.grad_mut().iter_mut().zip(d_free) {
                *g += v;
            }
        }
        Ok(())
    }

    pub fn step(&mut self, cfg: &OptimizerConfig) -> Result<()> {
        optimizer_step(&mut self.store, cfg)
    }
}

/// Deterministic actor `tanh(net(s))`, as used by TD3.
#[derive(Debug, Clone, PartialEq)]
pub struct DeterministicPolicy {
    pub net: Mlp,
}

impl DeterministicPolicy {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        Ok(Self {
            net: Mlp::new(MlpSpec::new(obs_dim, hidden, act_dim, activation), rng)?,
        })
    }

    pub fn act_dim(&self) -> usize {
        self.net.spec.output_dim
    }

    pub fn actions(&self, obs: &Matrix) -> Result<Matrix> {
        let mut out = self.net.forward_batch(obs)?;
        out.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
        Ok(out)
    }

    /// Actions plus the cache needed to push `dL/da` back into the network.
    pub fn actions_cached(&self, obs: &Matrix) -> Result<(Matrix, ForwardCache)> {
        let (mut out, cache) = self.net.forward_cached(obs)?;
        out.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
        Ok((out, cache))
    }

    pub fn act(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.actions(&Matrix::row_vector(obs)).map(Matrix::into_vec)
    }

    /// Accumulates gradients given `dL/d(action)` and the squashed actions.
    pub fn backward(
        &mut self,
        cache: &ForwardCache,
        actions: &Matrix,
        d_action: &Matrix,
    ) -> Result<()> {
        let mut d_pre = d_action.clone();
        for (g, &a) in d_pre.as_mut_slice().iter_mut().zip(actions.as_slice()) {
            *g *= 1.0 - a * a;
        }
        self.net.backward(cache, &d_pre, false).map(|_| ())
    }
}

/// Learned entropy weight `alpha = exp(log_alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Temperature {
    pub store: ParamStore,
    pub target_entropy: f64,
    pub optimizer: OptimizerConfig,
}

impl Temperature {
    pub fn new(
        initial_alpha: f64,
        target_entropy: f64,
        optimizer: OptimizerConfig,
    ) -> Result<Self> {
        if !(initial_alpha > 0.0) {
            return Err(Error::Config(format!(
                "initial alpha must be positive, got {initial_alpha}"
            )));
        }
        let mut store = ParamStore::new();
        store.push(Param::new("log_alpha", 1, 1, vec![initial_alpha.ln()])?)?;
        Ok(Self {
            store,
            target_entropy,
            optimizer,
        })
    }

    pub fn log_alpha(&self) -> f64 {
        self.store.params()[0].value()[0]
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha().exp()
    }

    /// `mean(-alpha * (log_prob + target_entropy))`
    pub fn loss(&self, batch_log_probs: &[f64]) -> f64 {
        let alpha = self.alpha();
        batch_log_probs
            .iter()
            .map(|lp| -alpha * (lp + self.target_entropy))
            .sum::<f64>()
            / batch_log_probs.len() as f64
    }

    /// d loss / d log_alpha; equal to the loss itself since alpha = exp(log_alpha).
    pub fn loss_grad(&self, batch_log_probs: &[f64]) -> f64 {
        self.loss(batch_log_probs)
    }
}

/// One optimizer step on `log_alpha` against `mean(-alpha * (log pi + H_target))`.
pub fn update_temperature(temp: &mut Temperature, batch_log_probs: &[f64]) -> Result<()> {
    if batch_log_probs.is_empty() {
        return Err(Error::State(
            "temperature update needs a nonempty batch".into(),
        ));
    }
    let g = temp.loss_grad(batch_log_probs);
    temp.store.params_mut()[0].grad_mut()[0] = g;
    optimizer_step(&mut temp.store, &temp.optimizer)
}

/// Default target entropy `-(action dimension)`.
pub fn default_target_entropy(act_dim: usize) -> f64 {
    -(act_dim as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::{SeedFan, Stream};

    fn rng(seed: u64) -> Rng {
        SeedFan::new(seed).stream(Stream::Acting)
    }

    #[test]
    fn jacobian_term_matches_naive_form_and_stays_finite() {
        for &u in &[-3.0, -0.5, 0.0, 0.2, 1.7] {
            let naive = (1.0 - f64::tanh(u).powi(2)).ln();
            assert!((tanh_log_jacobian(u) - naive).abs() < 1e-12);
        }
        assert!(tanh_log_jacobian(10.0).is_finite());
        assert!(tanh_log_jacobian(-400.0).is_finite());
    }

    #[test]
    fn standard_normal_at_mode() {
        let head = PolicyHead::new(vec![0.0], vec![0.0]);
        assert!((log_prob(&head, &[0.0]) + 0.918939).abs() < 1e-6);
        let head = PolicyHead::new(vec![0.3], vec![0.1]);
        assert!(log_prob(&head, &[10.0]).is_finite());
        assert!(log_prob(&head, &[-10.0]).is_finite());
    }

    #[test]
    fn clamp_applies_on_construction() {
        let head = PolicyHead::new(vec![0.0, 0.0], vec![-50.0, 7.0]);
        assert_eq!(head.log_std, vec![LOG_STD_MIN, LOG_STD_MAX]);
    }

    #[test]
    fn zero_noise_and_vanishing_std_give_tanh_mean() {
        let head = PolicyHead::new(vec![0.4, -1.1], vec![0.3, 0.3]);
        let s = squash_with_noise(&head, &[0.0, 0.0], true);
        assert_eq!(s.action, vec![0.4f64.tanh(), (-1.1f64).tanh()]);
        let tiny = PolicyHead::new(vec![0.4, -1.1], vec![-100.0, -100.0]);
        let s = sample_action(&tiny, &mut rng(1), false);
        for (a, m) in s.action.iter().zip(&tiny.mean) {
            assert!((a - m.tanh()).abs() < 1e-6);
        }
    }

    #[test]
    fn deterministic_action_examples() {
        assert_eq!(
            deterministic_action(&PolicyHead::new(vec![0.0], vec![0.0])),
            vec![0.0]
        );
        let a = deterministic_action(&PolicyHead::new(vec![1e3], vec![0.0]));
        assert!(a[0] <= 1.0 && a[0] > 0.999_999);
        assert_eq!(
            deterministic_action(&PolicyHead::new(vec![0.5, -0.5], vec![0.0, 0.0])),
            vec![0.5f64.tanh(), -(0.5f64.tanh())]
        );
    }

    #[test]
    fn monte_carlo_pre_squash_moments() {
        let head = PolicyHead::new(vec![0.0], vec![0.0]);
        let mut r = rng(11);
        let n = 100_000;
        let us: Vec<f64> = (0..n)
            .map(|_| sample_action(&head, &mut r, false).pre_squash[0])
            .collect();
        let mean = us.iter().sum::<f64>() / n as f64;
        let var = us.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn samples_stay_inside_action_bounds() {
        let head = PolicyHead::new(vec![3.0, -3.0], vec![2.0, 2.0]);
        let mut r = rng(5);
        for _ in 0..1000 {
            let s = sample_action(&head, &mut r, true);
            assert!(s.action.iter().all(|a| a.abs() <= 1.0));
            assert!(s.log_prob.is_finite());
        }
    }

    #[test]
    fn log_prob_same_with_or_without_reparameterization() {
        let head = PolicyHead::new(vec![0.2, -0.3], vec![-0.4, 0.1]);
        let noise = [0.7, -1.2];
        let a = squash_with_noise(&head, &noise, true);
        let b = squash_with_noise(&head, &noise, false);
        assert_eq!(a.log_prob, b.log_prob);
    }

    #[test]
    fn temperature_stationary_at_target() {
        let mut t = Temperature::new(0.5, -2.0, OptimizerConfig::adam(5e-4)).unwrap();
        update_temperature(&mut t, &[1.0, 3.0]).unwrap();
        assert_eq!(t.alpha(), 0.5);
    }

    #[test]
    fn temperature_rises_when_entropy_too_low() {
        let mut t = Temperature::new(1.0, -2.0, OptimizerConfig::adam(5e-4)).unwrap();
        // mean log pi = 4 > 2 = -H_target
        update_temperature(&mut t, &[3.0, 5.0]).unwrap();
        assert!(t.alpha() > 1.0);
        // Sign of the numerical derivative of the loss in log alpha agrees.
        let base = Temperature::new(1.0, -2.0, OptimizerConfig::default()).unwrap();
        let bumped =
            Temperature::new(1.0f64.exp().powf(1e-6), -2.0, OptimizerConfig::default()).unwrap();
        assert!(bumped.loss(&[3.0, 5.0]) < base.loss(&[3.0, 5.0]));
    }

    #[test]
    fn temperature_stays_positive() {
        let mut t = Temperature::new(1.0, -1.0, OptimizerConfig::adam(0.5)).unwrap();
        for _ in 0..200 {
            update_temperature(&mut t, &[-50.0]).unwrap();
        }
        assert!(t.alpha() > 0.0);
        assert!(update_temperature(&mut t, &[]).is_err());
    }
}
