use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::algos::{Agent, Algorithm, Trainer};
use crate::diagnostics::{q_estimation_error, validation_td_error, MetricsRecord, RunSummary};
use crate::envs::{EnvSpec, Environment, NavEnv, PendulumEnv, StepResult};
use crate::replay::{collect_validation, ValidationSet};
use crate::seeding::{Rng, SeedFan, Stream};
use crate::{Error, Result};

use super::config::{EnvKind, ExperimentConfig};

/// Either desk-scale environment behind one type.
#[derive(Debug, Clone)]
pub enum AnyEnv {
    Nav(NavEnv),
    Pendulum(PendulumEnv),
}

impl AnyEnv {
    pub fn build(cfg: &ExperimentConfig, rng: Rng) -> Result<Self> {
        Ok(match cfg.env {
            EnvKind::NavMixed => AnyEnv::Nav(NavEnv::new(cfg.nav_config(), rng)?),
            EnvKind::Pendulum => AnyEnv::Pendulum(PendulumEnv::new(cfg.pendulum.clone(), rng)),
        })
    }
}

impl Environment for AnyEnv {
    fn spec(&self) -> EnvSpec {
        match self {
            AnyEnv::Nav(e) => e.spec(),
            AnyEnv::Pendulum(e) => e.spec(),
        }
    }

    fn reset(&mut self) -> Result<Vec<f64>> {
        match self {
            AnyEnv::Nav(e) => e.reset(),
            AnyEnv::Pendulum(e) => e.reset(),
        }
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        match self {
            AnyEnv::Nav(e) => e.step(action),
            AnyEnv::Pendulum(e) => e.step(action),
        }
    }
}

/// Builds the agent for `cfg` with the fan of `seed`.
pub fn build_agent(cfg: &ExperimentConfig, seed: u64) -> Result<(Agent, AnyEnv, SeedFan)> {
    cfg.validate()?;
    let fan = SeedFan::new(seed);
    let env = AnyEnv::build(cfg, fan.stream(Stream::Env))?;
    let spec = env.spec();
    let agent = Agent::new(cfg.algorithm, &cfg.agent, spec.obs_dim, spec.act_dim, fan)?;
    Ok((agent, env, fan))
}

/// Evaluation-time state: a separate environment and diagnostics stream.
pub struct Evaluator {
    env: AnyEnv,
    rng: Rng,
    episodes: usize,
    gamma: f64,
}

impl Evaluator {
    pub fn new(cfg: &ExperimentConfig, fan: &SeedFan) -> Result<Self> {
        Ok(Self {
            env: AnyEnv::build(cfg, fan.stream(Stream::EvalEnv))?,
            rng: fan.stream(Stream::Diagnostics),
            episodes: cfg.eval_episodes,
            gamma: cfg.agent.gamma,
        })
    }

    /// Collects fresh validation episodes and measures the agent on them.
    pub fn checkpoint(&mut self, agent: &Agent, env_step: u64) -> Result<(MetricsRecord, ValidationSet)> {
        let val = collect_validation(&mut self.env, agent, self.episodes, &mut self.rng)?;
        let n = val.episodes.len() as f64;
        let mean = |f: fn(&crate::replay::ValidationEpisode) -> f64| val.episodes.iter().map(f).sum::<f64>() / n;
        let td = validation_td_error(agent, &val, &mut self.rng)?;
        let q_error = q_estimation_error(agent, &val, self.gamma)?;
        let record = MetricsRecord {
            env_step,
            reward: mean(|e| e.total_reward()),
            incentive: mean(|e| e.total_incentive()),
            cost: mean(|e| e.total_cost()),
            td_error: td.reward,
            td_error_cost: td.cost,
            q_error,
            alpha: agent.alpha(),
            beta: agent.beta(),
            resets: agent.resets,
        };
        Ok((record, val))
    }
}

/// Result of a finished run.
pub struct RunOutput {
    pub summary: RunSummary,
    pub agent: Agent,
}

pub fn run_dir_name(cfg: &ExperimentConfig, seed: u64) -> String {
    format!("{}_{}_seed{seed}", cfg.algorithm, cfg.env.name())
}

struct RunFiles {
    dir: PathBuf,
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
}

impl RunFiles {
    fn create(dir: &Path, cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut text = cfg.to_text();
        text.push_str(&format!("# run seed {seed}\n"));
        fs::write(dir.join("config.txt"), text)?;
        let metrics = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
        let mut timing = BufWriter::new(File::create(dir.join("timing.csv"))?);
        writeln!(timing, "env_step,seconds")?;
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics,
            timing,
        })
    }

    fn record(&mut self, rec: &MetricsRecord, seconds: f64) -> Result<()> {
        serde_json::to_writer(&mut self.metrics, rec)?;
        writeln!(self.metrics)?;
        self.metrics.flush()?;
        writeln!(self.timing, "{},{seconds:.3}", rec.env_step)?;
        self.timing.flush()?;
        Ok(())
    }
}

/// Writes `summary.csv`: one row per checkpoint plus the final-window means.
pub fn write_summary_csv<W: Write>(summary: &RunSummary, out: &mut W) -> Result<()> {
    writeln!(out, "env_step,reward,incentive,cost,td_error,td_error_cost,q_error,alpha,beta,resets")?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in &summary.records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.env_step,
            r.reward,
            r.incentive,
            r.cost,
            r.td_error,
            opt(r.td_error_cost),
            r.q_error,
            opt(r.alpha),
            opt(r.beta),
            r.resets
        )?;
    }
    if let Some(w) = summary.final_window(0.1) {
        writeln!(out, "final_window,{},{},{},,,,,,", w.reward, w.incentive, w.cost)?;
    }
    Ok(())
}

/// Trains for `total_env_steps`, evaluating every `eval_interval` steps.
///
/// With `out_dir` set, metrics are appended to `metrics.jsonl` as they are
/// produced; wall-clock goes to `timing.csv` so the metrics stay
/// reproducible. On a numeric failure the agent state is dumped to
/// `abort_checkpoint.txt` with the error in `abort.txt`.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64, out_dir: Option<&Path>) -> Result<RunOutput> {
    let (agent, env, fan) = build_agent(cfg, seed)?;
    let mut trainer = Trainer::new(agent, env, &fan)?;
    let mut evaluator = Evaluator::new(cfg, &fan)?;
    let mut files = out_dir.map(|d| RunFiles::create(d, cfg, seed)).transpose()?;
    let started = Instant::now();
    let mut records = Vec::new();

    let outcome = (|| -> Result<()> {
        while trainer.env_steps < cfg.total_env_steps {
            trainer.train_step()?;
            if trainer.env_steps % cfg.eval_interval == 0 {
                let (rec, _) = evaluator.checkpoint(&trainer.agent, trainer.env_steps)?;
                if let Some(f) = files.as_mut() {
                    f.record(&rec, started.elapsed().as_secs_f64())?;
                }
                records.push(rec);
            }
        }
        Ok(())
    })();

    if let Err(e) = outcome {
        if let Some(f) = &files {
            fs::write(f.dir.join("abort.txt"), format!("step {}: {e}\n", trainer.env_steps))?;
            let mut w = BufWriter::new(File::create(f.dir.join("abort_checkpoint.txt"))?);
            trainer.agent.save_checkpoint(&mut w)?;
        }
        return Err(e);
    }

    let summary = RunSummary::new(records)?;
    if let Some(f) = &files {
        let mut w = BufWriter::new(File::create(f.dir.join("summary.csv"))?);
        write_summary_csv(&summary, &mut w)?;
        let mut w = BufWriter::new(File::create(f.dir.join("checkpoint.txt"))?);
        trainer.agent.save_checkpoint(&mut w)?;
    }
    Ok(RunOutput {
        summary,
        agent: trainer.agent,
    })
}

/// Outcome of a cost-unaware reference run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceCost {
    pub final_cost: f64,
    pub suggested_limit: f64,
}

/// Half the final-window mean episode cost.
pub fn suggest_cost_limit(final_cost: f64) -> ReferenceCost {
    ReferenceCost {
        final_cost,
        suggested_limit: final_cost / 2.0,
    }
}

/// Trains the unconstrained actor-critic with no penalty on the navigation
/// task and suggests half of its final-window cost as the limit `M`.
pub fn reference_cost_run(cfg: &ExperimentConfig, seed: u64, out_dir: Option<&Path>) -> Result<ReferenceCost> {
    if cfg.env != EnvKind::NavMixed {
        return Err(Error::Config("reference cost runs need the nav_mixed environment".into()));
    }
    let mut reference = cfg.clone();
    reference.algorithm = Algorithm::Opac2;
    reference.penalty_weight = 0.0;
    reference.agent.cost_limit = None;
    let out = run_experiment(&reference, seed, out_dir)?;
    let w = out
        .summary
        .final_window(0.1)
        .ok_or_else(|| Error::State("reference run produced no checkpoints".into()))?;
    Ok(suggest_cost_limit(w.cost))
}

/// Reads a `metrics.jsonl` file.
pub fn read_metrics(path: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(path)?;
    let records = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<std::result::Result<Vec<MetricsRecord>, _>>()?;
    RunSummary::new(records)
}
