//! Side-by-side runs of several configs on the same model and data.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};

use crate::config::RunConfig;
use crate::runner::{run_experiment_in, RunSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub labels: Vec<String>,
    /// `(step, eval loss per label)`; `None` where a run has no record.
    pub rows: Vec<(u64, Vec<Option<f64>>)>,
    pub threshold: f64,
    /// First recorded step whose eval loss is at or below the threshold.
    pub steps_to_threshold: Vec<Option<u64>>,
    pub summaries: Vec<RunSummary>,
}

/// Default target: 90% of the way from the starting eval loss to the worst
/// final eval loss among the runs.
pub fn default_threshold(summaries: &[RunSummary]) -> f64 {
    let start = summaries.iter().map(|s| s.initial_eval_loss).fold(f64::NEG_INFINITY, f64::max);
    let worst = summaries.iter().map(|s| s.final_eval_loss).fold(f64::NEG_INFINITY, f64::max);
    worst + 0.1 * (start - worst)
}

pub fn steps_to_threshold(summary: &RunSummary, threshold: f64) -> Option<u64> {
    summary.records.iter().find(|r| r.eval_loss <= threshold).map(|r| r.step)
}

pub fn check_compatible(configs: &[RunConfig]) -> Result<()> {
    if configs.len() < 2 {
        bail!("compare needs at least two configs");
    }
    let first = &configs[0];
    for c in &configs[1..] {
        if c.model != first.model || c.run.seed != first.run.seed {
            bail!("configs `{}` and `{}` do not share model and data seed", first.label(), c.label());
        }
    }
    Ok(())
}

/// Runs every config and aligns eval losses by step.
pub fn compare_runs(configs: &[RunConfig], threshold: Option<f64>) -> Result<Comparison> {
    check_compatible(configs)?;
    let mut dirs: Vec<PathBuf> = configs.iter().map(|c| c.output_dir()).collect();
    for i in 0..dirs.len() {
        if dirs.iter().filter(|d| **d == dirs[i]).count() > 1 {
            dirs[i] = configs[i].output_dir().join(format!("{i}-{}", configs[i].label()));
        }
    }
    let summaries = configs
        .iter()
        .zip(&dirs)
        .map(|(c, d)| run_experiment_in(c, d, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(tabulate(summaries, threshold))
}

pub fn tabulate(summaries: Vec<RunSummary>, threshold: Option<f64>) -> Comparison {
    let threshold = threshold.unwrap_or_else(|| default_threshold(&summaries));
    let mut by_step: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for (i, s) in summaries.iter().enumerate() {
        for r in &s.records {
            by_step.entry(r.step).or_insert_with(|| vec![None; summaries.len()])[i] = Some(r.eval_loss);
        }
    }
    Comparison {
        labels: summaries.iter().map(|s| s.label.clone()).collect(),
        rows: by_step.into_iter().collect(),
        threshold,
        steps_to_threshold: summaries.iter().map(|s| steps_to_threshold(s, threshold)).collect(),
        summaries,
    }
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step");
        for l in &self.labels {
            write!(out, ",{l}").unwrap();
        }
        out.push('\n');
        for (step, vals) in &self.rows {
            write!(out, "{step}").unwrap();
            for v in vals {
                match v {
                    Some(x) => write!(out, ",{x}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn report(&self) -> String {
        let mut out = format!("eval-loss threshold {:.6e}\n", self.threshold);
        for (i, l) in self.labels.iter().enumerate() {
            let s = &self.summaries[i];
            let reached = match self.steps_to_threshold[i] {
                Some(step) => step.to_string(),
                None => "absent".into(),
            };
            writeln!(out, "{l:<16} final eval {:.6e}  steps-to-threshold {reached}", s.final_eval_loss).unwrap();
        }
        out
    }
}
