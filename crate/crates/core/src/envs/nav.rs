//! Randomized point-mass navigation with circular hazards.
//!
//! A double-integrator agent moves in the square `[-W, W]^2`. Reaching the
//! goal pays a bonus and immediately re-samples the goal, so episodes always
//! run to the step limit. Every step spent inside a hazard raises the cost
//! indicator.

use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{check_action, EnvSpec, Environment, StepResult};
use crate::seeding::Rng;
use crate::{Error, Result};

/// Two-tier penalty weights for unconstrained runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyPreset {
    None,
    Small,
    Large,
}

impl PenaltyPreset {
    /// Per-step cost weight. `Small` is half of `Large`.
    pub fn weight(self) -> f64 {
        match self {
            PenaltyPreset::None => 0.0,
            PenaltyPreset::Small => 0.25,
            PenaltyPreset::Large => 0.5,
        }
    }
}

impl std::str::FromStr for PenaltyPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PenaltyPreset::None),
            "small" => Ok(PenaltyPreset::Small),
            "large" => Ok(PenaltyPreset::Large),
            other => Err(Error::Config(format!("unknown penalty preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavConfig {
    pub arena_half_width: f64,
    pub n_hazards: usize,
    pub hazard_radius: f64,
    pub goal_radius: f64,
    /// Minimum start-to-goal distance when placing a goal.
    pub min_goal_distance: f64,
    pub episode_len: usize,
    pub dt: f64,
    pub damping: f64,
    pub accel: f64,
    pub max_speed: f64,
    pub k_nearest: usize,
    pub dense_weight: f64,
    pub goal_bonus: f64,
    pub penalty_weight: f64,
    /// Return reward and cost separately instead of folding the penalty in.
    pub constrained: bool,
    pub max_placement_tries: usize,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            arena_half_width: 2.0,
            n_hazards: 6,
            hazard_radius: 0.25,
            goal_radius: 0.2,
            min_goal_distance: 1.0,
            episode_len: 200,
            dt: 0.1,
            damping: 0.95,
            accel: 0.2,
            max_speed: 1.0,
            k_nearest: 3,
            dense_weight: 1.0,
            goal_bonus: 1.0,
            penalty_weight: PenaltyPreset::Large.weight(),
            constrained: false,
            max_placement_tries: 1000,
        }
    }
}

impl NavConfig {
    pub fn obs_dim(&self) -> usize {
        5 + 2 * self.k_nearest
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.arena_half_width,
            self.goal_radius,
            self.dt,
            self.max_speed,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.episode_len == 0 {
            return Err(Error::Config(
                "navigation sizes and step must be positive".into(),
            ));
        }
        if self.hazard_radius < 0.0 || self.penalty_weight < 0.0 {
            return Err(Error::Config(
                "hazard radius and penalty weight must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hazard {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Hazard {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        dist(self.center, p) <= self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavLayout {
    pub arena_half_width: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub hazards: Vec<Hazard>,
}

impl NavLayout {
    pub fn in_hazard(&self, p: [f64; 2]) -> bool {
        self.hazards.iter().any(|h| h.contains(p))
    }

    /// Shifts every feature by `offset` (used to check translation invariance).
    pub fn translated(&self, offset: [f64; 2]) -> NavLayout {
        let mut out = self.clone();
        out.goal = add(out.goal, offset);
        for h in &mut out.hazards {
            h.center = add(h.center, offset);
        }
        out
    }

    /// `kind,x,y,radius` rows: one goal, then the hazards.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "kind,x,y,radius")?;
        writeln!(
            out,
            "goal,{},{},{}",
            self.goal[0], self.goal[1], self.goal_radius
        )?;
        for h in &self.hazards {
            writeln!(out, "hazard,{},{},{}", h.center[0], h.center[1], h.radius)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NavState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub layout: NavLayout,
    pub step_count: usize,
    pub prev_goal_dist: f64,
}

/// Reward components of the last navigation step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NavRewardParts {
    pub dense: f64,
    pub sparse: f64,
    pub cost: f64,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn add(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] + b[0], a[1] + b[1]]
}

fn uniform_point(rng: &mut Rng, half: f64) -> [f64; 2] {
    [
        rng.random_range(-half..=half),
        rng.random_range(-half..=half),
    ]
}

fn place<F>(cfg: &NavConfig, rng: &mut Rng, margin: f64, what: &str, accept: F) -> Result<[f64; 2]>
where
    F: Fn([f64; 2]) -> bool,
{
    let half = (cfg.arena_half_width - margin).max(0.0);
    for _ in 0..cfg.max_placement_tries {
        let p = uniform_point(rng, half);
        if accept(p) {
            return Ok(p);
        }
    }
    Err(Error::Config(format!(
        "could not place {what} after {} tries; arena too crowded",
        cfg.max_placement_tries
    )))
}

fn sample_goal(
    cfg: &NavConfig,
    layout: &NavLayout,
    position: [f64; 2],
    rng: &mut Rng,
) -> Result<[f64; 2]> {
    place(cfg, rng, cfg.goal_radius, "goal", |g| {
        dist(g, position) >= cfg.min_goal_distance
            && layout
                .hazards
                .iter()
                .all(|h| dist(g, h.center) > h.radius + cfg.goal_radius)
    })
}

/// Observation: velocity (2), goal displacement (2), displacements to the
/// `k` nearest hazard centres nearest-first (2k, zero-padded), goal distance.
pub fn nav_observe(state: &NavState, k_nearest: usize) -> Vec<f64> {
    let p = state.position;
    let g = state.layout.goal;
    let mut obs = Vec::with_capacity(5 + 2 * k_nearest);
    obs.extend_from_slice(&state.velocity);
    obs.push(g[0] - p[0]);
    obs.push(g[1] - p[1]);
    let mut hazards: Vec<(f64, [f64; 2])> = state
        .layout
        .hazards
        .iter()
        .map(|h| (dist(h.center, p), [h.center[0] - p[0], h.center[1] - p[1]]))
        .collect();
    hazards.sort_by(|a, b| a.0.total_cmp(&b.0));
    for i in 0..k_nearest {
        match hazards.get(i) {
            Some((_, d)) => obs.extend_from_slice(d),
            None => obs.extend_from_slice(&[0.0, 0.0]),
        }
    }
    obs.push(dist(g, p));
    obs
}

/// Samples a fresh layout and start position.
pub fn nav_reset(cfg: &NavConfig, rng: &mut Rng) -> Result<(NavState, Vec<f64>)> {
    cfg.validate()?;
    let mut hazards: Vec<Hazard> = Vec::with_capacity(cfg.n_hazards);
    for _ in 0..cfg.n_hazards {
        let c = place(cfg, rng, cfg.hazard_radius, "hazard", |c| {
            hazards
                .iter()
                .all(|h| dist(c, h.center) >= h.radius + cfg.hazard_radius)
        })?;
        hazards.push(Hazard {
            center: c,
            radius: cfg.hazard_radius,
        });
    }
    let mut layout = NavLayout {
        arena_half_width: cfg.arena_half_width,
        goal: [0.0, 0.0],
        goal_radius: cfg.goal_radius,
        hazards,
    };
    let start = place(cfg, rng, 0.0, "start", |p| !layout.in_hazard(p))?;
    layout.goal = sample_goal(cfg, &layout, start, rng)?;
    let state = NavState {
        position: start,
        velocity: [0.0, 0.0],
        prev_goal_dist: dist(start, layout.goal),
        layout,
        step_count: 0,
    };
    let obs = nav_observe(&state, cfg.k_nearest);
    Ok((state, obs))
}

/// Advances the navigation state by one step.
pub fn nav_step(
    state: &mut NavState,
    cfg: &NavConfig,
    action: &[f64],
    rng: &mut Rng,
) -> Result<(StepResult, NavRewardParts)> {
    check_action(action, 2)?;
    let mut v = [
        cfg.damping * state.velocity[0] + cfg.accel * action[0],
        cfg.damping * state.velocity[1] + cfg.accel * action[1],
    ];
    let speed = v[0].hypot(v[1]);
    if speed > cfg.max_speed {
        let s = cfg.max_speed / speed;
        v = [v[0] * s, v[1] * s];
    }
    let w = cfg.arena_half_width;
    state.velocity = v;
    state.position = [
        (state.position[0] + cfg.dt * v[0]).clamp(-w, w),
        (state.position[1] + cfg.dt * v[1]).clamp(-w, w),
    ];
    state.step_count += 1;

    let new_dist = dist(state.position, state.layout.goal);
    let dense = cfg.dense_weight * (state.prev_goal_dist - new_dist);
    let mut sparse = 0.0;
    state.prev_goal_dist = new_dist;
    if new_dist < cfg.goal_radius {
        sparse = cfg.goal_bonus;
        state.layout.goal = sample_goal(cfg, &state.layout, state.position, rng)?;
        state.prev_goal_dist = dist(state.position, state.layout.goal);
    }
    let cost = if state.layout.in_hazard(state.position) {
        1.0
    } else {
        0.0
    };
    let incentive = dense + sparse;
    let reward = if cfg.constrained {
        incentive
    } else {
        incentive - cfg.penalty_weight * cost
    };
    let result = StepResult {
        obs: nav_observe(state, cfg.k_nearest),
        reward,
        cost,
        incentive,
        done: state.step_count >= cfg.episode_len,
        terminal: false,
    };
    Ok((
        result,
        NavRewardParts {
            dense,
            sparse,
            cost,
        },
    ))
}

#[derive(Debug, Clone)]
pub struct NavEnv {
    pub cfg: NavConfig,
    state: Option<NavState>,
    last_parts: NavRewardParts,
    rng: Rng,
}

impl NavEnv {
    pub fn new(cfg: NavConfig, rng: Rng) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: None,
            last_parts: NavRewardParts::default(),
            rng,
        })
    }

    pub fn state(&self) -> Option<&NavState> {
        self.state.as_ref()
    }

    pub fn last_parts(&self) -> NavRewardParts {
        self.last_parts
    }
}

impl Environment for NavEnv {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: self.cfg.obs_dim(),
            act_dim: 2,
            episode_len: self.cfg.episode_len,
        }
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        let (state, obs) = nav_reset(&self.cfg, &mut self.rng)?;
        self.state = Some(state);
        Ok(obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::State("navigation step before reset".into()))?;
        let (result, parts) = nav_step(state, &self.cfg, action, &mut self.rng)?;
        self.last_parts = parts;
        Ok(result)
    }
}

/// Writes `step,x,y,cost,dense,sparse,incentive,reward` rows for a rollout.
pub fn write_trajectory_csv<W: Write>(
    rows: &[(NavState, StepResult, NavRewardParts)],
    out: &mut W,
) -> Result<()> {
    writeln!(out, "step,x,y,cost,dense,sparse,incentive,reward")?;
    for (state, result, parts) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            state.step_count,
            state.position[0],
            state.position[1],
            result.cost,
            parts.dense,
            parts.sparse,
            result.incentive,
            result.reward
        )?;
    }
    Ok(())
}
