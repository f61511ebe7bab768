//! Pendulum swing-up with angle measured from upright.

use std::f64::consts::PI;

use rand::Rng as _;

use super::{check_action, EnvSpec, Environment, StepResult};
use crate::seeding::Rng;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct PendulumConfig {
    pub gravity: f64,
    pub length: f64,
    pub mass: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub dt: f64,
    pub episode_len: usize,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            length: 1.0,
            mass: 1.0,
            max_torque: 2.0,
            max_speed: 8.0,
            dt: 0.05,
            episode_len: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    /// Angle from upright, radians.
    pub theta: f64,
    pub theta_dot: f64,
    pub step_count: usize,
}

/// Wraps an angle into `(-pi, pi]`.
pub fn angle_from_upright(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped == -PI {
        PI
    } else {
        wrapped
    }
}

pub fn pendulum_observe(state: &PendulumState) -> Vec<f64> {
    vec![state.theta.cos(), state.theta.sin(), state.theta_dot]
}

/// Uniform angle and angular velocity in `[-1, 1]`.
pub fn pendulum_reset(rng: &mut Rng) -> (PendulumState, Vec<f64>) {
    let state = PendulumState {
        theta: rng.random_range(-PI..PI),
        theta_dot: rng.random_range(-1.0..1.0),
        step_count: 0,
    };
    let obs = pendulum_observe(&state);
    (state, obs)
}

/// Semi-implicit Euler step of `theta'' = (g/l) sin(theta) + torque/(m l^2)`.
/// The reward is charged on the state the action is applied in.
pub fn pendulum_step(
    state: &mut PendulumState,
    cfg: &PendulumConfig,
    action: &[f64],
) -> Result<StepResult> {
    check_action(action, 1)?;
    let torque = cfg.max_torque * action[0];
    let angle = angle_from_upright(state.theta);
    let reward =
        -(angle * angle + 0.1 * state.theta_dot * state.theta_dot + 0.001 * torque * torque);
    let accel = cfg.gravity / cfg.length * state.theta.sin()
        + torque / (cfg.mass * cfg.length * cfg.length);
    state.theta_dot = (state.theta_dot + cfg.dt * accel).clamp(-cfg.max_speed, cfg.max_speed);
    state.theta = angle_from_upright(state.theta + cfg.dt * state.theta_dot);
    state.step_count += 1;
    Ok(StepResult {
        obs: pendulum_observe(state),
        reward,
        cost: 0.0,
        incentive: reward,
        done: state.step_count >= cfg.episode_len,
        terminal: false,
    })
}

#[derive(Debug, Clone)]
pub struct PendulumEnv {
    pub cfg: PendulumConfig,
    pub state: PendulumState,
    rng: Rng,
}

impl PendulumEnv {
    pub fn new(cfg: PendulumConfig, rng: Rng) -> Self {
        Self {
            cfg,
            state: PendulumState {
                theta: PI,
                theta_dot: 0.0,
                step_count: 0,
            },
            rng,
        }
    }
}

impl Environment for PendulumEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 3,
            act_dim: 1,
            episode_len: self.cfg.episode_len,
        }
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        let (state, obs) = pendulum_reset(&mut self.rng);
        self.state = state;
        Ok(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        pendulum_step(&mut self.state, &self.cfg, action)
    }
}
