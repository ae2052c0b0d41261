//! Run configuration, read from a TOML file with one section per concern.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use amos_core::amos::{Amos, AmosHyperParams};
use amos_core::baselines::{AdaGrad, AdaGradHyperParams, AdamW, AdamWHyperParams, Schedule, Sgd, SgdHyperParams};
use amos_core::models::{Gelu, LstmConfig, LstmModel, MlpConfig, MlpModel, Model, QuadraticConfig, QuadraticModel};
use amos_core::optim::{Optimizer, ReductionMode};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Environment variable that replaces `run.output_dir`.
pub const OUTPUT_DIR_ENV: &str = "AMOS_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    /// Per-variable eta overrides.
    #[serde(default)]
    pub eta: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub steps: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Number of distinct training batches `N`; step `t` uses batch `t mod N`.
    #[serde(default = "default_train_batches")]
    pub train_batches: u64,
    /// Held-out batches averaged for the eval loss.
    #[serde(default = "default_eval_batches")]
    pub eval_batches: u64,
    /// Size of each eval batch; defaults to `batch_size`.
    #[serde(default)]
    pub eval_batch_size: Option<usize>,
    #[serde(default = "default_metrics_every")]
    pub metrics_every: u64,
    /// Checkpoint cadence; a final checkpoint is always written.
    #[serde(default)]
    pub checkpoint_every: Option<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default = "default_reduction")]
    pub reduction: Reduction,
    /// Adds elapsed seconds to each metric record. Off by default because it
    /// makes metrics files differ between otherwise identical runs.
    #[serde(default)]
    pub wall_clock: bool,
}

fn default_batch_size() -> usize {
    8
}
fn default_train_batches() -> u64 {
    10_000
}
fn default_eval_batches() -> u64 {
    4
}
fn default_metrics_every() -> u64 {
    10
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/default")
}
fn default_reduction() -> Reduction {
    Reduction::Reduce1Axis
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    NoReduce,
    #[serde(rename = "reduce_1axis")]
    Reduce1Axis,
    ReduceDense,
}

impl From<Reduction> for ReductionMode {
    fn from(r: Reduction) -> Self {
        match r {
            Reduction::NoReduce => ReductionMode::NoReduce,
            Reduction::Reduce1Axis => ReductionMode::Reduce1Axis,
            Reduction::ReduceDense => ReductionMode::ReduceDense,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Quadratic {
        dim: usize,
        target_scale: f64,
        #[serde(default = "default_noise")]
        noise_std: f64,
    },
    Mlp {
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        #[serde(default)]
        gelu_tanh: bool,
        #[serde(default = "default_init_fraction")]
        init_fraction: f64,
        #[serde(default)]
        label_noise: f64,
    },
    Lstm {
        input_dim: usize,
        hidden_dim: usize,
        #[serde(default = "default_seq_len")]
        seq_len: usize,
        #[serde(default = "default_input_scale")]
        input_scale: f64,
        #[serde(default = "default_init_fraction")]
        init_fraction: f64,
    },
}

fn default_noise() -> f64 {
    0.1
}
fn default_init_fraction() -> f64 {
    0.5
}
fn default_seq_len() -> usize {
    4
}
fn default_input_scale() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerConfig {
    Amos {
        /// Defaults to `1/sqrt(train_batches)` at one significant digit.
        #[serde(default)]
        xi: Option<f64>,
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default)]
        momentum: Option<f64>,
        #[serde(default)]
        clip: Option<f64>,
        /// Defaults to 5% of `run.steps`.
        #[serde(default)]
        warmup_steps: Option<u64>,
        #[serde(default)]
        c_coef: Option<f64>,
        #[serde(default)]
        d_coef: Option<f64>,
        #[serde(default = "default_amos_eps")]
        epsilon: f64,
    },
    #[serde(rename = "adamw")]
    AdamW {
        alpha: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta")]
        beta2: f64,
        #[serde(default = "default_wd")]
        weight_decay: f64,
        #[serde(default)]
        warmup_steps: Option<u64>,
        #[serde(default = "default_schedule")]
        schedule: ScheduleKind,
        /// Step at which a linear schedule reaches 0; defaults to `run.steps`.
        #[serde(default)]
        max_steps: Option<u64>,
        #[serde(default = "default_adam_eps")]
        epsilon: f64,
    },
    Adam {
        alpha: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta")]
        beta2: f64,
        #[serde(default)]
        warmup_steps: Option<u64>,
        #[serde(default = "default_schedule")]
        schedule: ScheduleKind,
        #[serde(default)]
        max_steps: Option<u64>,
        #[serde(default = "default_adam_eps")]
        epsilon: f64,
    },
    Sgd {
        alpha: f64,
        #[serde(default)]
        lambda: f64,
    },
    #[serde(rename = "adagrad")]
    AdaGrad {
        alpha: f64,
        #[serde(default = "default_adagrad_eps")]
        epsilon: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    Constant,
    Rsqrt,
}

fn default_beta() -> f64 {
    0.999
}
fn default_beta1() -> f64 {
    0.9
}
fn default_wd() -> f64 {
    0.01
}
fn default_schedule() -> ScheduleKind {
    ScheduleKind::Linear
}
fn default_amos_eps() -> f64 {
    1e-30
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_adagrad_eps() -> f64 {
    1e-10
}

/// `1/sqrt(n)` rounded to one significant digit.
pub fn default_xi(n: u64) -> f64 {
    let raw = 1.0 / (n.max(1) as f64).sqrt();
    let mag = 10f64.powf(raw.log10().floor());
    let digit = (raw / mag).round();
    // parse back to get the shortest decimal representation
    format!("{:e}", digit * mag).parse().expect("formatted float parses")
}

/// Default warm-up: 5% of the run.
pub fn default_warmup(steps: u64) -> u64 {
    steps / 20
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing run config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.steps == 0 {
            bail!("run.steps must be >= 1");
        }
        if r.batch_size == 0 || r.eval_batch_size == Some(0) {
            bail!("batch sizes must be >= 1");
        }
        if r.train_batches == 0 {
            bail!("run.train_batches must be >= 1");
        }
        if r.metrics_every == 0 || r.checkpoint_every == Some(0) {
            bail!("cadences must be >= 1");
        }
        for (name, &eta) in &self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                bail!("eta override for `{name}` must be positive");
            }
        }
        self.build_model()?;
        self.build_optimizer()?;
        Ok(())
    }

    /// Output directory after applying the environment override.
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.run.output_dir.clone(),
        }
    }

    pub fn label(&self) -> String {
        self.run.label.clone().unwrap_or_else(|| self.optimizer.name().to_string())
    }

    pub fn build_model(&self) -> Result<Box<dyn Model>> {
        let seed = self.run.seed;
        Ok(match self.model {
            ModelConfig::Quadratic { dim, target_scale, noise_std } => Box::new(QuadraticModel::new(QuadraticConfig {
                dim,
                target_scale,
                noise_std,
                seed,
            })?),
            ModelConfig::Mlp {
                input_dim,
                hidden_dim,
                output_dim,
                gelu_tanh,
                init_fraction,
                label_noise,
            } => {
                let mut cfg = MlpConfig::new(input_dim, hidden_dim, output_dim, seed);
                cfg.gelu = if gelu_tanh { Gelu::Tanh } else { Gelu::Exact };
                cfg.init_fraction = init_fraction;
                cfg.label_noise = label_noise;
                Box::new(MlpModel::new(cfg)?)
            }
            ModelConfig::Lstm {
                input_dim,
                hidden_dim,
                seq_len,
                input_scale,
                init_fraction,
            } => {
                let mut cfg = LstmConfig::new(input_dim, hidden_dim, seed);
                cfg.seq_len = seq_len;
                cfg.input_scale = input_scale;
                cfg.init_fraction = init_fraction;
                Box::new(LstmModel::new(cfg)?)
            }
        })
    }

    /// Amos hyper-parameters with defaults filled in, if the optimizer is Amos.
    pub fn amos_hyper_params(&self) -> Option<AmosHyperParams> {
        match &self.optimizer {
            &OptimizerConfig::Amos {
                xi,
                beta,
                momentum,
                clip,
                warmup_steps,
                c_coef,
                d_coef,
                epsilon,
            } => Some(AmosHyperParams {
                xi: xi.unwrap_or_else(|| default_xi(self.run.train_batches)),
                beta,
                momentum,
                clip,
                warmup_steps: warmup_steps.unwrap_or_else(|| default_warmup(self.run.steps)),
                c_coef,
                d_coef,
                epsilon,
            }),
            _ => None,
        }
    }

    pub fn build_optimizer(&self) -> Result<Box<dyn Optimizer>> {
        let steps = self.run.steps;
        let adamw = |alpha, beta1, beta2, weight_decay, warmup: Option<u64>, schedule, max_steps: Option<u64>, epsilon| {
            let schedule = match schedule {
                ScheduleKind::Linear => Schedule::Linear {
                    max_steps: max_steps.unwrap_or(steps),
                },
                ScheduleKind::Constant => Schedule::Constant,
                ScheduleKind::Rsqrt => Schedule::InverseSqrt,
            };
            AdamW::new(AdamWHyperParams {
                alpha,
                beta1,
                beta2,
                weight_decay,
                warmup_steps: warmup.unwrap_or_else(|| default_warmup(steps)),
                schedule,
                epsilon,
            })
        };
        Ok(match &self.optimizer {
            OptimizerConfig::Amos { .. } => Box::new(Amos::new(self.amos_hyper_params().expect("amos config"))?),
            &OptimizerConfig::AdamW {
                alpha,
                beta1,
                beta2,
                weight_decay,
                warmup_steps,
                schedule,
                max_steps,
                epsilon,
            } => Box::new(adamw(alpha, beta1, beta2, weight_decay, warmup_steps, schedule, max_steps, epsilon)?),
            &OptimizerConfig::Adam {
                alpha,
                beta1,
                beta2,
                warmup_steps,
                schedule,
                max_steps,
                epsilon,
            } => Box::new(adamw(alpha, beta1, beta2, 0.0, warmup_steps, schedule, max_steps, epsilon)?),
            &OptimizerConfig::Sgd { alpha, lambda } => {
                let hp = SgdHyperParams { alpha, lambda };
                hp.validate()?;
                Box::new(Sgd { hp })
            }
            &OptimizerConfig::AdaGrad { alpha, epsilon } => {
                if !(alpha > 0.0 && epsilon > 0.0) {
                    bail!("adagrad alpha and epsilon must be positive");
                }
                Box::new(AdaGrad {
                    hp: AdaGradHyperParams { alpha, epsilon },
                })
            }
        })
    }
}

impl OptimizerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            OptimizerConfig::Amos { .. } => "amos",
            OptimizerConfig::AdamW { .. } => "adamw",
            OptimizerConfig::Adam { .. } => "adam",
            OptimizerConfig::Sgd { .. } => "sgd",
            OptimizerConfig::AdaGrad { .. } => "adagrad",
        }
    }
}
