//! Reference optimizers: Adam/AdamW with learning-rate schedules, AdaGrad and
//! SGD with an L2-driven `alpha / (1 + alpha*lambda*t)` schedule.

use crate::error::{Error, Result};
use crate::optim::{slot, OptimizerKind, Optimizer, ParamSpec, SlotSet, StepOutput};
use crate::tensor::Tensor;

/// Learning-rate schedule applied after the linear warm-up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    /// Decay linearly to 0 at `max_steps`.
    Linear { max_steps: u64 },
    Constant,
    /// Decay in proportion to `t^(-1/2)`, matching the peak at the end of warm-up.
    InverseSqrt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWHyperParams {
    /// Peak learning-rate.
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Decoupled weight decay; 0 gives plain Adam.
    pub weight_decay: f64,
    pub warmup_steps: u64,
    pub schedule: Schedule,
    pub epsilon: f64,
}

impl Default for AdamWHyperParams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.01,
            warmup_steps: 0,
            schedule: Schedule::Constant,
            epsilon: 1e-8,
        }
    }
}

impl AdamWHyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return bad(format!("weight decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if let Schedule::Linear { max_steps } = self.schedule {
            if max_steps <= self.warmup_steps {
                return bad(format!(
                    "linear decay needs max_steps ({max_steps}) > warmup_steps ({})",
                    self.warmup_steps
                ));
            }
        }
        Ok(())
    }

    /// Learning-rate at 0-based step `t`.
    pub fn learning_rate(&self, t: u64) -> f64 {
        let w = self.warmup_steps;
        if t < w {
            return self.alpha * (t + 1) as f64 / w as f64;
        }
        match self.schedule {
            Schedule::Constant => self.alpha,
            Schedule::Linear { max_steps } => {
                let remaining = max_steps.saturating_sub(t) as f64;
                self.alpha * remaining / (max_steps - w) as f64
            }
            Schedule::InverseSqrt => {
                let w = w.max(1) as f64;
                self.alpha * (w / (t as f64).max(w)).sqrt()
            }
        }
    }
}

/// One AdamW step at 0-based step `t`. Slots are `m` and `v` at full shape.
pub fn adamw_step(
    theta: &Tensor,
    g: &Tensor,
    m: &Tensor,
    v: &Tensor,
    hp: &AdamWHyperParams,
    t: u64,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (b1, b2) = (hp.beta1, hp.beta2);
    let m = Tensor::broadcast_binary(|m, g| b1 * m + (1.0 - b1) * g, m, g)?;
    let v = Tensor::broadcast_binary(|v, g| b2 * v + (1.0 - b2) * g * g, v, g)?;
    let exponent = i32::try_from(t + 1).unwrap_or(i32::MAX);
    let c1 = 1.0 - b1.powi(exponent);
    let c2 = 1.0 - b2.powi(exponent);
    let lr = hp.learning_rate(t);
    let (eps, wd) = (hp.epsilon, hp.weight_decay);
    let normalized = Tensor::broadcast_binary(
        |m, v| {
            let m_hat = m / c1;
            let v_hat = v / c2;
            if m_hat == 0.0 {
                0.0
            } else {
                m_hat / (v_hat.sqrt() + eps)
            }
        },
        &m,
        &v,
    )?;
    let delta = Tensor::broadcast_binary(|n, th| lr * (n + wd * th), &normalized, theta)?;
    Ok((delta, m, v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdHyperParams {
    /// Initial learning-rate.
    pub alpha: f64,
    /// L2 strength.
    pub lambda: f64,
}

impl SgdHyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        Ok(())
    }

    /// `alpha / (1 + alpha*lambda*t)`.
    pub fn learning_rate(&self, t: u64) -> f64 {
        self.alpha / (1.0 + self.alpha * self.lambda * t as f64)
    }
}

/// `alpha_t * (g + lambda*theta)`.
pub fn sgd_step(theta: &Tensor, g: &Tensor, hp: &SgdHyperParams, t: u64) -> Result<Tensor> {
    let lr = hp.learning_rate(t);
    let lambda = hp.lambda;
    Ok(Tensor::broadcast_binary(|g, th| lr * (g + lambda * th), g, theta)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaGradHyperParams {
    pub alpha: f64,
    /// Floor for `sqrt(acc)`.
    pub epsilon: f64,
}

impl Default for AdaGradHyperParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            epsilon: 1e-10,
        }
    }
}

/// Accumulates `g^2`, then steps by `alpha * g / max(sqrt(acc), eps)`.
/// Returns `(delta, acc')`.
pub fn adagrad_step(g: &Tensor, acc: &Tensor, hp: &AdaGradHyperParams) -> Result<(Tensor, Tensor)> {
    let acc = Tensor::broadcast_binary(|a, g| a + g * g, acc, g)?;
    let (alpha, eps) = (hp.alpha, hp.epsilon);
    let delta = Tensor::broadcast_binary(|g, a| alpha * g / a.sqrt().max(eps), g, &acc)?;
    Ok((delta, acc))
}

fn to_divergence(e: Error, spec: &ParamSpec, t: u64) -> Error {
    match e {
        Error::Tensor(te) => Error::diverged(te, &spec.name, t),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub hp: AdamWHyperParams,
}

impl AdamW {
    pub fn new(hp: AdamWHyperParams) -> Result<Self> {
        hp.validate()?;
        Ok(Self { hp })
    }

    /// Adam without weight decay.
    pub fn adam(hp: AdamWHyperParams) -> Result<Self> {
        Self::new(AdamWHyperParams {
            weight_decay: 0.0,
            ..hp
        })
    }
}

impl Optimizer for AdamW {
    fn kind(&self) -> OptimizerKind {
        OptimizerKind::AdamW
    }

    fn step(&self, spec: &ParamSpec, theta: &Tensor, grad: &Tensor, slots: &SlotSet, t: u64) -> Result<StepOutput> {
        let m = slot(slots, "m", &spec.name)?;
        let v = slot(slots, "v", &spec.name)?;
        let (delta, m, v) = adamw_step(theta, grad, m, v, &self.hp, t).map_err(|e| to_divergence(e, spec, t))?;
        let mut out = SlotSet::new();
        out.insert("m".into(), m);
        out.insert("v".into(), v);
        Ok(StepOutput {
            delta,
            slots: out,
            diagnostics: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaGrad {
    pub hp: AdaGradHyperParams,
}

impl Optimizer for AdaGrad {
    fn kind(&self) -> OptimizerKind {
        OptimizerKind::AdaGrad
    }

    fn step(&self, spec: &ParamSpec, _theta: &Tensor, grad: &Tensor, slots: &SlotSet, t: u64) -> Result<StepOutput> {
        let acc = slot(slots, "acc", &spec.name)?;
        let (delta, acc) = adagrad_step(grad, acc, &self.hp).map_err(|e| to_divergence(e, spec, t))?;
        let mut out = SlotSet::new();
        out.insert("acc".into(), acc);
        Ok(StepOutput {
            delta,
            slots: out,
            diagnostics: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub hp: SgdHyperParams,
}

impl Optimizer for Sgd {
    fn kind(&self) -> OptimizerKind {
        OptimizerKind::Sgd
    }

    fn step(&self, spec: &ParamSpec, theta: &Tensor, grad: &Tensor, _slots: &SlotSet, t: u64) -> Result<StepOutput> {
        let delta = sgd_step(theta, grad, &self.hp, t).map_err(|e| to_divergence(e, spec, t))?;
        Ok(StepOutput {
            delta,
            slots: SlotSet::new(),
            diagnostics: None,
        })
    }
}
