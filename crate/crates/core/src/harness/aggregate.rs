use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::{iqm, performance_profile, MetricsRecord, RunSummary};
use crate::{Error, Result};

/// Per-checkpoint quantity that can be aggregated across runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Reward,
    Incentive,
    Cost,
    TdError,
    TdErrorCost,
    QError,
    Alpha,
    Beta,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Reward => "reward",
            Metric::Incentive => "incentive",
            Metric::Cost => "cost",
            Metric::TdError => "td_error",
            Metric::TdErrorCost => "td_error_cost",
            Metric::QError => "q_error",
            Metric::Alpha => "alpha",
            Metric::Beta => "beta",
        }
    }

    pub fn value(self, r: &MetricsRecord) -> Option<f64> {
        match self {
            Metric::Reward => Some(r.reward),
            Metric::Incentive => Some(r.incentive),
            Metric::Cost => Some(r.cost),
            Metric::TdError => Some(r.td_error),
            Metric::TdErrorCost => r.td_error_cost,
            Metric::QError => Some(r.q_error),
            Metric::Alpha => r.alpha,
            Metric::Beta => r.beta,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Metric::Reward,
            Metric::Incentive,
            Metric::Cost,
            Metric::TdError,
            Metric::TdErrorCost,
            Metric::QError,
            Metric::Alpha,
            Metric::Beta,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub env_step: u64,
    pub iqm: f64,
    pub min: f64,
    pub max: f64,
}

/// One run's point on the cost-adjustment-ratio vs final-reward plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Fig2Point {
    pub run: String,
    pub ratio: Option<f64>,
    pub final_reward: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    pub metric: Metric,
    pub rows: Vec<AggregateRow>,
    pub thresholds: Vec<f64>,
    pub profile: Vec<f64>,
    pub fig2: Vec<Fig2Point>,
}

const PROFILE_POINTS: usize = 21;

/// IQM, min and max across runs at every checkpoint, the performance
/// profile of final-checkpoint values, and per-run cost-adjustment points.
/// All runs must share the same checkpoint steps.
pub fn aggregate(runs: &[(String, RunSummary)], metric: Metric, early_step: u64) -> Result<AggregateTable> {
    let (_, first) = runs
        .first()
        .ok_or_else(|| Error::Alignment("aggregate needs at least one run".into()))?;
    let steps: Vec<u64> = first.records.iter().map(|r| r.env_step).collect();
    for (name, run) in runs {
        if run.records.iter().map(|r| r.env_step).ne(steps.iter().copied()) {
            return Err(Error::Alignment(format!("run {name} has different checkpoints")));
        }
    }
    let mut rows = Vec::with_capacity(steps.len());
    for (i, &env_step) in steps.iter().enumerate() {
        let vals = runs
            .iter()
            .map(|(name, run)| {
                metric.value(&run.records[i]).ok_or_else(|| {
                    Error::Alignment(format!("run {name} has no {} at step {env_step}", metric.name()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(AggregateRow {
            env_step,
            iqm: iqm(&vals),
            min: vals.iter().cloned().fold(f64::INFINITY, f64::min),
            max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    let (thresholds, profile) = match rows.last() {
        Some(last) => {
            let finals: Vec<f64> = runs
                .iter()
                .map(|(_, r)| metric.value(r.records.last().expect("nonempty")).expect("checked"))
                .collect();
            let span = last.max - last.min;
            let thresholds: Vec<f64> = (0..PROFILE_POINTS)
                .map(|k| last.min + span * k as f64 / (PROFILE_POINTS - 1) as f64)
                .collect();
            let profile = performance_profile(&finals, &thresholds);
            (thresholds, profile)
        }
        None => (Vec::new(), Vec::new()),
    };
    let mut fig2: Vec<Fig2Point> = runs
        .iter()
        .filter_map(|(name, run)| {
            let ratio = run.cost_adjustment_ratio(early_step).ok()?;
            Some(Fig2Point {
                run: name.clone(),
                ratio: ratio.ratio,
                final_reward: run.final_window(0.1)?.reward,
            })
        })
        .collect();
    fig2.sort_by(|a, b| a.run.cmp(&b.run));
    Ok(AggregateTable {
        metric,
        rows,
        thresholds,
        profile,
        fig2,
    })
}

/// Writes `iqm.csv`, `profile.csv` and `fig2_points.csv` into `dir`.
pub fn write_aggregate(table: &AggregateTable, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("iqm.csv"))?);
    writeln!(w, "env_step,metric,iqm,min,max")?;
    for r in &table.rows {
        writeln!(w, "{},{},{},{},{}", r.env_step, table.metric.name(), r.iqm, r.min, r.max)?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("profile.csv"))?);
    writeln!(w, "threshold,fraction_above")?;
    for (t, p) in table.thresholds.iter().zip(&table.profile) {
        writeln!(w, "{t},{p}")?;
    }
    w.flush()?;
    let mut w = BufWriter::new(File::create(dir.join("fig2_points.csv"))?);
    writeln!(w, "run,cost_adjustment_ratio,final_reward")?;
    for p in &table.fig2 {
        let ratio = p.ratio.map_or_else(|| "undefined".to_string(), |r| r.to_string());
        writeln!(w, "{},{ratio},{}", p.run, p.final_reward)?;
    }
    w.flush()?;
    Ok(())
}
