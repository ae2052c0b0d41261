//! Deterministic training loop with metrics, checkpoints and resume.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use amos_core::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use amos_core::data::{eval_stream, train_stream};
use amos_core::models::{param_specs, Batch, Model};
use amos_core::optim::{init_state, train_step, Optimizer, OptimizerState, ParamSet, ParamSpec};
use amos_core::{Error, Tensor, TensorError};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{default_xi, RunConfig};
use crate::metrics::{MetricRecord, MetricsSink, VarMetrics};
use crate::ratio::{RatioTracker, DEFAULT_RATE};

/// Everything observed during one optimizer step.
#[derive(Debug, Clone)]
pub struct StepReport {
    /// Steps completed after this one.
    pub step: u64,
    pub train_loss: f64,
    pub vars: BTreeMap<String, VarMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSummary {
    pub m2_theta: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub optimizer: String,
    pub steps: u64,
    /// Eval loss before the first step of this invocation.
    pub initial_eval_loss: f64,
    pub final_train_loss: f64,
    pub final_eval_loss: f64,
    /// Global learning-rate used by Amos.
    pub xi: Option<f64>,
    /// `1/sqrt(N)` at one significant digit, for comparison with `xi`.
    pub xi_heuristic: f64,
    pub vars: BTreeMap<String, VarSummary>,
    #[serde(skip)]
    pub records: Vec<MetricRecord>,
}

pub struct Runner {
    cfg: RunConfig,
    model: Box<dyn Model>,
    optimizer: Box<dyn Optimizer>,
    specs: Vec<ParamSpec>,
    params: ParamSet,
    state: OptimizerState,
    trackers: BTreeMap<String, RatioTracker>,
    eval_batches: Vec<Batch>,
    last_train_loss: f64,
    started: Instant,
}

fn divergence(err: Error, what: &str, step: u64) -> Error {
    match err {
        Error::Tensor(TensorError::NonFinite(_)) => Error::Divergence {
            param: what.to_string(),
            step,
        },
        other => other,
    }
}

impl Runner {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.build_model()?;
        let optimizer = cfg.build_optimizer()?;
        let specs = param_specs(model.as_ref(), cfg.run.reduction.into(), &cfg.eta)?;
        let params = model.init_params();
        let state = init_state(&specs, optimizer.kind())?;
        let trackers = specs
            .iter()
            .map(|s| (s.name.clone(), RatioTracker::new(&s.shape, DEFAULT_RATE)))
            .collect();
        let eval_size = cfg.run.eval_batch_size.unwrap_or(cfg.run.batch_size);
        let eval_batches = (0..cfg.run.eval_batches)
            .map(|j| model.sample_batch(eval_stream(j), eval_size))
            .collect();
        Ok(Self {
            cfg,
            model,
            optimizer,
            specs,
            params,
            state,
            trackers,
            eval_batches,
            last_train_loss: f64::NAN,
            started: Instant::now(),
        })
    }

    /// Restores parameters, optimizer slots and ratio trackers.
    pub fn resume(cfg: RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        let mut runner = Self::new(cfg)?;
        let kind = runner.optimizer.kind();
        for spec in &runner.specs {
            let p = ckpt
                .params
                .get(&spec.name)
                .with_context(|| format!("checkpoint lacks parameter `{}`", spec.name))?;
            if p.shape() != spec.shape.as_slice() {
                bail!("checkpoint parameter `{}` has shape {:?}, expected {:?}", spec.name, p.shape(), spec.shape);
            }
            let slots = ckpt
                .slots
                .get(&spec.name)
                .with_context(|| format!("checkpoint lacks slots for `{}`", spec.name))?;
            let layout = kind.slot_layout(spec);
            if slots.len() != layout.len()
                || layout
                    .iter()
                    .any(|(name, shape)| slots.get(*name).map(|t| t.shape() != shape.as_slice()).unwrap_or(true))
            {
                bail!("checkpoint slots for `{}` do not match the configured optimizer", spec.name);
            }
        }
        if ckpt.params.len() != runner.specs.len() {
            bail!("checkpoint has {} parameters, model has {}", ckpt.params.len(), runner.specs.len());
        }
        runner.params = ckpt.params.clone();
        runner.state = ckpt.state();
        for (name, tracker) in runner.trackers.iter_mut() {
            let key = |k: &str| format!("ratio/{name}/{k}");
            if let (Some(g), Some(sq), Some(n)) = (
                ckpt.aux.get(&key("avg_g")),
                ckpt.aux.get(&key("avg_sq")),
                ckpt.aux.get(&key("steps")),
            ) {
                tracker.avg_g = g.clone();
                tracker.avg_sq = sq.item()?;
                tracker.steps = n.item()? as u64;
            }
        }
        if let Some(l) = ckpt.aux.get("train_loss") {
            runner.last_train_loss = l.item()?;
        }
        Ok(runner)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn model(&self) -> &dyn Model {
        self.model.as_ref()
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn steps_done(&self) -> u64 {
        self.state.step
    }

    pub fn tracker(&self, name: &str) -> Option<&RatioTracker> {
        self.trackers.get(name)
    }

    /// One optimizer step on training batch `t mod N`.
    pub fn step(&mut self) -> Result<StepReport> {
        let t = self.state.step;
        let batch = self
            .model
            .sample_batch(train_stream(t, self.cfg.run.train_batches), self.cfg.run.batch_size);
        let (loss, grads) = self
            .model
            .loss_and_grad(&self.params, &batch)
            .map_err(|e| divergence(e, "loss", t))?;
        for (name, tracker) in self.trackers.iter_mut() {
            tracker.update(&grads[name]).map_err(|e| divergence(e.into(), name, t))?;
        }
        let diagnostics = train_step(self.optimizer.as_ref(), &self.specs, &mut self.params, &grads, &mut self.state)?;
        self.last_train_loss = loss;
        let mut vars = BTreeMap::new();
        for spec in &self.specs {
            let diag = diagnostics.get(&spec.name).copied().flatten();
            vars.insert(
                spec.name.clone(),
                VarMetrics {
                    m2_theta: self.params[&spec.name].m2()?,
                    m2_grad: grads[&spec.name].m2()?,
                    eta: spec.eta,
                    mean_c: diag.map(|d| d.mean_c),
                    mean_d: diag.map(|d| d.mean_d),
                    mean_gamma: diag.map(|d| d.mean_gamma),
                    ratio: self.trackers[&spec.name].ratio(),
                },
            );
        }
        Ok(StepReport {
            step: self.state.step,
            train_loss: loss,
            vars,
        })
    }

    /// Mean loss over the held-out batches.
    pub fn evaluate(&self) -> Result<f64> {
        self.evaluate_params(&self.params)
    }

    pub fn evaluate_params(&self, params: &ParamSet) -> Result<f64> {
        if self.eval_batches.is_empty() {
            return Ok(f64::NAN);
        }
        let mut total = 0.0;
        for b in &self.eval_batches {
            total += self.model.loss(params, b).map_err(|e| divergence(e, "eval loss", self.state.step))?;
        }
        Ok(total / self.eval_batches.len() as f64)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new(&self.state, &self.params, self.cfg.to_toml());
        for (name, tr) in &self.trackers {
            ckpt.aux.insert(format!("ratio/{name}/avg_g"), tr.avg_g.clone());
            ckpt.aux
                .insert(format!("ratio/{name}/avg_sq"), Tensor::scalar(tr.avg_sq).expect("finite"));
            ckpt.aux
                .insert(format!("ratio/{name}/steps"), Tensor::scalar(tr.steps as f64).expect("finite"));
        }
        if self.last_train_loss.is_finite() {
            ckpt.aux
                .insert("train_loss".into(), Tensor::scalar(self.last_train_loss).expect("finite"));
        }
        ckpt
    }

    fn record(&self, report: StepReport) -> Result<MetricRecord> {
        Ok(MetricRecord {
            step: report.step,
            train_loss: report.train_loss,
            eval_loss: self.evaluate()?,
            vars: report.vars,
            wall_clock_s: self
                .cfg
                .run
                .wall_clock
                .then(|| self.started.elapsed().as_secs_f64()),
        })
    }

    /// Trains until `until` steps are complete, emitting records at the
    /// metrics cadence and checkpoints at the checkpoint cadence.
    pub fn run_until(
        &mut self,
        until: u64,
        mut sink: Option<&mut MetricsSink>,
        ckpt_dir: Option<&Path>,
    ) -> Result<Vec<MetricRecord>> {
        let mut records = Vec::new();
        while self.state.step < until {
            let report = self.step()?;
            let done = report.step;
            if done % self.cfg.run.metrics_every == 0 || done == until {
                let rec = self.record(report)?;
                if let Some(s) = sink.as_deref_mut() {
                    s.write(&rec)?;
                }
                records.push(rec);
            }
            if let (Some(dir), Some(every)) = (ckpt_dir, self.cfg.run.checkpoint_every) {
                if done % every == 0 {
                    save_checkpoint(&self.checkpoint(), checkpoint_path(dir, done))?;
                }
            }
        }
        Ok(records)
    }

    pub fn summary(&self, initial_eval_loss: f64, records: Vec<MetricRecord>) -> Result<RunSummary> {
        let vars = self
            .specs
            .iter()
            .map(|s| {
                Ok((
                    s.name.clone(),
                    VarSummary {
                        m2_theta: self.params[&s.name].m2()?,
                        eta: s.eta,
                    },
                ))
            })
            .collect::<Result<_>>()?;
        Ok(RunSummary {
            label: self.cfg.label(),
            optimizer: self.cfg.optimizer.name().into(),
            steps: self.state.step,
            initial_eval_loss,
            final_train_loss: self.last_train_loss,
            final_eval_loss: self.evaluate()?,
            xi: self.cfg.amos_hyper_params().map(|hp| hp.xi),
            xi_heuristic: default_xi(self.cfg.run.train_batches),
            vars,
            records,
        })
    }
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("ckpt-{step:08}.bin"))
}

pub fn final_checkpoint_path(dir: &Path) -> PathBuf {
    dir.join("final.ckpt")
}

/// Runs `cfg` into its output directory, optionally resuming from a
/// checkpoint. Writes metrics, checkpoints and `summary.json`.
pub fn run_experiment(cfg: &RunConfig, resume: Option<&Path>) -> Result<RunSummary> {
    run_experiment_in(cfg, &cfg.output_dir(), resume)
}

pub fn run_experiment_in(cfg: &RunConfig, dir: &Path, resume: Option<&Path>) -> Result<RunSummary> {
    let mut runner = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            Runner::resume(cfg.clone(), &ckpt)?
        }
        None => Runner::new(cfg.clone())?,
    };
    let vars = runner.specs().iter().map(|s| s.name.clone()).collect();
    let mut sink = MetricsSink::open(dir, vars, resume.is_none())?;
    let initial = runner.evaluate()?;
    let records = runner.run_until(cfg.run.steps, Some(&mut sink), Some(dir))?;
    save_checkpoint(&runner.checkpoint(), final_checkpoint_path(dir))?;
    let summary = runner.summary(initial, records)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
