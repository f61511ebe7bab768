use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::{Error, Result};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl OptimizerConfig {
    pub fn adam(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam step on every parameter in the store, then clears
/// the gradients.
///
/// Non-finite gradients abort the step before any parameter is touched.
pub fn optimizer_step(store: &mut ParamStore, cfg: &OptimizerConfig) -> Result<()> {
    if let Some(p) = store
        .iter()
        .find(|p| p.grad().iter().any(|g| !g.is_finite()))
    {
        return Err(Error::NonFinite(format!("gradient of {}", p.name())));
    }
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for p in store.params_mut() {
        for i in 0..p.value.len() {
            let g = p.grad[i];
            p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
            p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = p.m[i] / bc1;
            let v_hat = p.v[i] / bc2;
            p.value[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            p.grad[i] = 0.0;
        }
    }
    Ok(())
}

/// `target <- rho * target + (1 - rho) * main`, elementwise over values.
pub fn polyak_update(target: &mut ParamStore, main: &ParamStore, rho: f64) -> Result<()> {
    if !target.same_layout(main) {
        return Err(Error::Shape(
            "polyak update between stores of different layout".into(),
        ));
    }
    for (t, m) in target.params_mut().iter_mut().zip(main.params()) {
        for (tv, &mv) in t.value.iter_mut().zip(m.value()) {
            *tv = rho * *tv + (1.0 - rho) * mv;
        }
    }
    Ok(())
}
