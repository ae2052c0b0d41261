//! The Amos update rule over (possibly reduced) slot variables.
//!
//! Per variable and 0-based step `t`:
//!
//! ```text
//! g     <- clip(g, chi)                         (optional)
//! v     <- beta*v + (1-beta)*M2(g)^2            (at reduced shape)
//! v_hat <- v / (1 - beta^(t+1))
//! gamma <- c * xi^2 * M2(g)^2 / v_hat
//! delta <- d * (xi*eta*g/sqrt(v_hat) + gamma*theta/2)
//! b     <- b + gamma*(1 + b)
//! delta <- m <- mu*m + (1-mu)*delta             (optional)
//! ```
//!
//! with `c = (1 + p*b)^(-1/2)`, `d = (1 + q*b)^(-1)`, `p = sqrt(xi)/4` and
//! `q = sqrt(xi*eta)/4` by default. `xi` is the warm-up scaled global rate.

use crate::error::{Error, Result};
use crate::optim::{slot, OptimizerKind, Optimizer, ParamSpec, SlotSet, StepDiagnostics, StepOutput};
use crate::tensor::{AxisMask, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct AmosHyperParams {
    /// Global learning-rate.
    pub xi: f64,
    /// Decay rate of the squared-gradient running average.
    pub beta: f64,
    /// Momentum decay; `None` disables the momentum slot.
    pub momentum: Option<f64>,
    /// Element-wise clip threshold, used when the variable's spec sets none.
    pub clip: Option<f64>,
    /// Linear warm-up length of the global learning-rate.
    pub warmup_steps: u64,
    /// Override for `p` in `c = (1 + p*b)^(-1/2)`.
    pub c_coef: Option<f64>,
    /// Override for `q` in `d = (1 + q*b)^(-1)`.
    pub d_coef: Option<f64>,
    /// Floor for `sqrt(v_hat)` in the normalized gradient.
    pub epsilon: f64,
}

impl Default for AmosHyperParams {
    fn default() -> Self {
        Self {
            xi: 0.01,
            beta: 0.999,
            momentum: None,
            clip: None,
            warmup_steps: 0,
            c_coef: None,
            d_coef: None,
            epsilon: 1e-30,
        }
    }
}

impl AmosHyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return bad(format!("xi must be positive, got {}", self.xi));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad(format!("beta must lie in [0, 1), got {}", self.beta));
        }
        if let Some(mu) = self.momentum {
            if !(0.0..1.0).contains(&mu) {
                return bad(format!("momentum must lie in [0, 1), got {mu}"));
            }
        }
        for (name, v) in [("clip", self.clip), ("c_coef", self.c_coef), ("d_coef", self.d_coef)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be positive, got {v}"));
                }
            }
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Slot variables of one Amos-managed variable.
#[derive(Debug, Clone, PartialEq)]
pub struct AmosSlots {
    pub v: Tensor,
    pub b: Tensor,
    pub m: Option<Tensor>,
}

impl AmosSlots {
    pub fn zeros(spec: &ParamSpec, momentum: bool) -> Self {
        let reduced = spec.reduced_shape();
        Self {
            v: Tensor::zeros(&reduced),
            b: Tensor::zeros(&reduced),
            m: momentum.then(|| Tensor::zeros(&spec.shape)),
        }
    }

    pub fn from_slot_set(slots: &SlotSet, param: &str) -> Result<Self> {
        Ok(Self {
            v: slot(slots, "v", param)?.clone(),
            b: slot(slots, "b", param)?.clone(),
            m: slots.get("m").cloned(),
        })
    }

    pub fn into_slot_set(self) -> SlotSet {
        let mut out = SlotSet::new();
        out.insert("v".into(), self.v);
        out.insert("b".into(), self.b);
        if let Some(m) = self.m {
            out.insert("m".into(), m);
        }
        out
    }
}

/// Scales each entry by `chi / max(chi, |g|)`.
pub fn clip_gradient(g: &Tensor, chi: f64) -> Result<Tensor> {
    if !(chi > 0.0) {
        return Err(Error::Precondition(format!("clip threshold must be positive, got {chi}")));
    }
    Ok(g.map(|x| chi / chi.max(x.abs()) * x)?)
}

fn check_reduced(slot: &Tensor, g: &Tensor, mask: &AxisMask, what: &str) -> Result<()> {
    let expected = mask.reduced_shape(g.shape())?;
    if slot.shape() != expected.as_slice() {
        return Err(Error::Precondition(format!(
            "{what} has shape {:?}, expected reduced shape {expected:?}",
            slot.shape()
        )));
    }
    Ok(())
}

/// `beta*v + (1-beta)*M2(g)^2` at the reduced shape.
pub fn update_v(v: &Tensor, g: &Tensor, beta: f64, mask: &AxisMask) -> Result<Tensor> {
    check_reduced(v, g, mask, "v")?;
    let ms = g.mean_square_over_axes(mask)?;
    Ok(Tensor::broadcast_binary(|v, s| beta * v + (1.0 - beta) * s, v, &ms)?)
}

/// `v / (1 - beta^t)` for `t >= 1`.
pub fn bias_correct(v: &Tensor, beta: f64, t: u64) -> Result<Tensor> {
    if t == 0 {
        return Err(Error::Precondition("bias correction needs t >= 1".into()));
    }
    let exponent = i32::try_from(t).unwrap_or(i32::MAX);
    let correction = 1.0 - beta.powi(exponent);
    Ok(v.map(|x| x / correction)?)
}

/// Default `p` of the L2 decay factor.
pub fn default_c_coef(xi: f64) -> f64 {
    0.25 * xi.sqrt()
}

/// Default `q` of the learning-rate decay factor.
pub fn default_d_coef(xi: f64, eta: f64) -> f64 {
    0.25 * (xi * eta).sqrt()
}

/// `c = (1 + p*b)^(-1/2)` and `d = (1 + q*b)^(-1)` element-wise.
pub fn decay_factors_with(b: &Tensor, p: f64, q: f64) -> Result<(Tensor, Tensor)> {
    if b.data().iter().any(|&x| x < 0.0) {
        return Err(Error::Precondition("decay accumulator b must be non-negative".into()));
    }
    let c = b.map(|b| 1.0 / (1.0 + p * b).sqrt())?;
    let d = b.map(|b| 1.0 / (1.0 + q * b))?;
    Ok((c, d))
}

/// Decay factors with the default coefficients.
pub fn decay_factors(b: &Tensor, xi: f64, eta: f64) -> Result<(Tensor, Tensor)> {
    decay_factors_with(b, default_c_coef(xi), default_d_coef(xi, eta))
}

/// Adaptive L2 strength `c * xi^2 * M2(g)^2 / v_hat` at the reduced shape.
/// Slices whose gradient is entirely zero get exactly zero.
pub fn compute_gamma(g: &Tensor, v_hat: &Tensor, c: &Tensor, xi: f64, mask: &AxisMask) -> Result<Tensor> {
    check_reduced(v_hat, g, mask, "v_hat")?;
    check_reduced(c, g, mask, "c")?;
    let ms = g.mean_square_over_axes(mask)?;
    let ratio = Tensor::broadcast_binary(|s, vh| if s == 0.0 { 0.0 } else { s / vh }, &ms, v_hat)?;
    Ok(Tensor::broadcast_binary(|c, r| c * (xi * xi) * r, c, &ratio)?)
}

/// Global learning-rate after a linear warm-up ramp.
pub fn warmup_scale(t: u64, warmup_steps: u64, xi: f64) -> f64 {
    if warmup_steps == 0 {
        return xi;
    }
    let ramp = ((t + 1) as f64 / warmup_steps as f64).min(1.0);
    xi * ramp
}

/// Everything one Amos step produces.
#[derive(Debug, Clone)]
pub struct AmosOutput {
    pub delta: Tensor,
    pub slots: AmosSlots,
    /// Adaptive L2 strength at the reduced shape.
    pub gamma: Tensor,
    /// Decay factors used by this step (from the incoming `b`).
    pub c: Tensor,
    pub d: Tensor,
}

/// One Amos update for a single variable at 0-based step `t`; returns the
/// update `delta` (to be subtracted from `theta`) and the new slots.
pub fn amos_step(
    theta: &Tensor,
    g: &Tensor,
    slots: &AmosSlots,
    spec: &ParamSpec,
    hp: &AmosHyperParams,
    t: u64,
) -> Result<(Tensor, AmosSlots)> {
    let out = amos_step_detailed(theta, g, slots, spec, hp, t)?;
    Ok((out.delta, out.slots))
}

pub fn amos_step_detailed(
    theta: &Tensor,
    g: &Tensor,
    slots: &AmosSlots,
    spec: &ParamSpec,
    hp: &AmosHyperParams,
    t: u64,
) -> Result<AmosOutput> {
    step_inner(theta, g, slots, spec, hp, t).map_err(|e| match e {
        Error::Tensor(te) => Error::diverged(te, &spec.name, t),
        other => other,
    })
}

fn step_inner(
    theta: &Tensor,
    g: &Tensor,
    slots: &AmosSlots,
    spec: &ParamSpec,
    hp: &AmosHyperParams,
    t: u64,
) -> Result<AmosOutput> {
    hp.validate()?;
    if theta.shape() != spec.shape.as_slice() || g.shape() != spec.shape.as_slice() {
        return Err(Error::Precondition(format!(
            "`{}`: theta {:?} and gradient {:?} must match spec shape {:?}",
            spec.name,
            theta.shape(),
            g.shape(),
            spec.shape
        )));
    }
    let mask = &spec.reduction;
    check_reduced(&slots.b, g, mask, "b")?;
    let xi = warmup_scale(t, hp.warmup_steps, hp.xi);
    let eta = spec.eta;

    let clipped;
    let g = match spec.clip_threshold.or(hp.clip) {
        Some(chi) => {
            clipped = clip_gradient(g, chi)?;
            &clipped
        }
        None => g,
    };

    let v = update_v(&slots.v, g, hp.beta, mask)?;
    let v_hat = bias_correct(&v, hp.beta, t + 1)?;
    let p = hp.c_coef.unwrap_or_else(|| default_c_coef(xi));
    let q = hp.d_coef.unwrap_or_else(|| default_d_coef(xi, eta));
    let (c, d) = decay_factors_with(&slots.b, p, q)?;
    let gamma = compute_gamma(g, &v_hat, &c, xi, mask)?;

    let eps = hp.epsilon;
    let denom = v_hat.map(|vh| vh.sqrt().max(eps))?;
    let normalized = g.scale(xi * eta).and_then(|x| x.div(&denom))?;
    let half_gamma = gamma.scale(0.5)?;
    let decay = theta.mul(&half_gamma)?;
    let mut delta = normalized.add(&decay).and_then(|x| x.mul(&d))?;

    let b = Tensor::broadcast_binary(|b, gm| b + gm * (1.0 + b), &slots.b, &gamma)?;

    let m = match (hp.momentum, &slots.m) {
        (Some(mu), Some(m)) => {
            let next = Tensor::broadcast_binary(|m, dl| mu * m + (1.0 - mu) * dl, m, &delta)?;
            delta = next.clone();
            Some(next)
        }
        (Some(_), None) => {
            return Err(Error::Config(format!("`{}`: momentum enabled but slot `m` missing", spec.name)))
        }
        (None, m) => m.clone(),
    };

    Ok(AmosOutput {
        delta,
        slots: AmosSlots { v, b, m },
        gamma,
        c,
        d,
    })
}

/// Amos as a pluggable [`Optimizer`].
#[derive(Debug, Clone, PartialEq)]
pub struct Amos {
    pub hp: AmosHyperParams,
}

impl Amos {
    pub fn new(hp: AmosHyperParams) -> Result<Self> {
        hp.validate()?;
        Ok(Self { hp })
    }
}

impl Optimizer for Amos {
    fn kind(&self) -> OptimizerKind {
        OptimizerKind::Amos {
            momentum: self.hp.momentum.is_some(),
        }
    }

    fn step(&self, spec: &ParamSpec, theta: &Tensor, grad: &Tensor, slots: &SlotSet, t: u64) -> Result<StepOutput> {
        let slots = AmosSlots::from_slot_set(slots, &spec.name)?;
        let out = amos_step_detailed(theta, grad, &slots, spec, &self.hp, t)?;
        let diagnostics = StepDiagnostics {
            mean_c: out.c.mean()?,
            mean_d: out.d.mean()?,
            mean_gamma: out.gamma.mean()?,
        };
        Ok(StepOutput {
            delta: out.delta,
            slots: out.slots.into_slot_set(),
            diagnostics: Some(diagnostics),
        })
    }
}
