use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use opac_core::diagnostics::{q_estimation_error, validation_td_error};
use opac_core::harness::{
    aggregate, build_agent, read_metrics, reference_cost_run, run_dir_name, run_experiment,
    write_aggregate, Evaluator, ExperimentConfig, Metric,
};
use opac_core::replay::collect_validation;
use opac_core::seeding::{SeedFan, Stream};

#[derive(Parser)]
#[command(name = "opac-lab", about = "Off-policy actor-critic laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// `key=value` override applied after the file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)
                .with_context(|| format!("reading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        for o in &self.overrides {
            cfg.apply_override(o)?;
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one run per seed and write metrics, summary and checkpoint.
    Train(ConfigArgs),
    /// Roll out a saved checkpoint and report episode totals.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 5)]
        episodes: usize,
    },
    /// Validation TD error and Q-estimation error of a saved checkpoint.
    Diagnose {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// IQM, performance profile and cost-adjustment points across runs.
    Aggregate {
        /// Run directories or metrics.jsonl files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "reward")]
        metric: String,
        #[arg(long, default_value_t = 30_000)]
        early_step: u64,
        #[arg(long, default_value = "aggregate")]
        out: PathBuf,
    },
    /// Train a cost-unaware reference agent and suggest a cost limit.
    ReferenceCost(ConfigArgs),
}

fn load_agent(cfg: &ExperimentConfig, seed: u64, checkpoint: &Path) -> Result<opac_core::algos::Agent> {
    let (mut agent, _, _) = build_agent(cfg, seed)?;
    let mut r = BufReader::new(
        File::open(checkpoint).with_context(|| format!("opening {}", checkpoint.display()))?,
    );
    agent.load_checkpoint(&mut r)?;
    Ok(agent)
}

fn metrics_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("metrics.jsonl")
    } else {
        p.to_path_buf()
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => {
            let cfg = args.load()?;
            for &seed in &cfg.seeds {
                let dir = args.out.join(run_dir_name(&cfg, seed));
                let out = run_experiment(&cfg, seed, Some(&dir))?;
                match out.summary.final_window(0.1) {
                    Some(w) => println!(
                        "{}: final reward {:.3} incentive {:.3} cost {:.3}",
                        dir.display(),
                        w.reward,
                        w.incentive,
                        w.cost
                    ),
                    None => println!("{}: no checkpoints", dir.display()),
                }
            }
        }
        Command::Evaluate {
            cfg,
            checkpoint,
            episodes,
        } => {
            let mut exp = cfg.load()?;
            exp.eval_episodes = episodes;
            let seed = exp.seeds[0];
            let agent = load_agent(&exp, seed, &checkpoint)?;
            let fan = SeedFan::new(seed);
            let mut ev = Evaluator::new(&exp, &fan)?;
            let (rec, _) = ev.checkpoint(&agent, 0)?;
            println!(
                "reward {:.4} incentive {:.4} cost {:.4}",
                rec.reward, rec.incentive, rec.cost
            );
        }
        Command::Diagnose { cfg, checkpoint } => {
            let exp = cfg.load()?;
            let seed = exp.seeds[0];
            let agent = load_agent(&exp, seed, &checkpoint)?;
            let fan = SeedFan::new(seed);
            let mut env = opac_core::harness::AnyEnv::build(&exp, fan.stream(Stream::EvalEnv))?;
            let mut rng = fan.stream(Stream::Diagnostics);
            let val = collect_validation(&mut env, &agent, exp.eval_episodes, &mut rng)?;
            let td = validation_td_error(&agent, &val, &mut rng)?;
            let q = q_estimation_error(&agent, &val, exp.agent.gamma)?;
            println!("validation_td_error {}", td.reward);
            if let Some(c) = td.cost {
                println!("validation_td_error_cost {c}");
            }
            println!("q_estimation_error {q}");
        }
        Command::Aggregate {
            runs,
            metric,
            early_step,
            out,
        } => {
            let metric: Metric = metric.parse()?;
            let mut loaded = Vec::with_capacity(runs.len());
            for p in &runs {
                let path = metrics_path(p);
                let summary = read_metrics(&path).with_context(|| format!("reading {}", path.display()))?;
                loaded.push((p.display().to_string(), summary));
            }
            let table = aggregate(&loaded, metric, early_step)?;
            write_aggregate(&table, &out)?;
            if let Some(last) = table.rows.last() {
                println!(
                    "{} at step {}: IQM {:.4} (min {:.4}, max {:.4}) over {} runs",
                    metric.name(),
                    last.env_step,
                    last.iqm,
                    last.min,
                    last.max,
                    loaded.len()
                );
            }
        }
        Command::ReferenceCost(args) => {
            let cfg = args.load_unconstrained()?;
            let seed = cfg.seeds[0];
            let dir = args.out.join(format!("reference_seed{seed}"));
            let r = reference_cost_run(&cfg, seed, Some(&dir))?;
            fs::write(dir.join("cost_limit.txt"), format!("{}\n", r.suggested_limit))?;
            let mut w = BufWriter::new(File::create(dir.join("reference.txt"))?);
            use std::io::Write;
            writeln!(w, "final_cost {}\nsuggested_limit {}", r.final_cost, r.suggested_limit)?;
            if !(r.suggested_limit > 0.0) {
                bail!(
                    "reference run accumulated no cost (final {}); no positive limit to suggest",
                    r.final_cost
                );
            }
            println!("suggested cost_limit = {}", r.suggested_limit);
        }
    }
    Ok(())
}

impl ConfigArgs {
    /// Like [`ConfigArgs::load`] but without requiring a cost limit, since the
    /// reference run is what produces one.
    fn load_unconstrained(&self) -> Result<ExperimentConfig> {
        let mut args = self.clone();
        args.overrides.push("algorithm=opac2".into());
        args.load()
    }
}
