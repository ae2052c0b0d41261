//! Optimizer-agnostic plumbing: parameter specs, slot-state lifecycle and
//! update application.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::tensor::{AxisMask, Tensor};

/// Named slot tensors belonging to one parameter.
pub type SlotSet = BTreeMap<String, Tensor>;

/// Named parameter (or gradient) tensors.
pub type ParamSet = BTreeMap<String, Tensor>;

/// Structural role of a variable, used to pick which axes its slots share.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Linear kernel of shape `input x output`.
    Kernel,
    /// Embedding table of shape `vocab x embed`.
    Embedding,
    /// Biases, normalization scales and anything else.
    Other,
}

/// Slot-variable memory reduction setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReductionMode {
    NoReduce,
    /// Reduce the input axis of kernels, the embed axis of embeddings and
    /// every axis of other variables.
    Reduce1Axis,
    /// Like `Reduce1Axis` but kernels are reduced along both axes.
    ReduceDense,
}

impl ReductionMode {
    pub fn mask_for(self, role: ParamRole, shape: &[usize]) -> AxisMask {
        let rank = shape.len();
        match self {
            ReductionMode::NoReduce => AxisMask::none(rank),
            ReductionMode::ReduceDense => match role {
                ParamRole::Embedding if rank >= 2 => {
                    AxisMask::axes(rank, &[rank - 1]).expect("axis in range")
                }
                _ => AxisMask::all(rank),
            },
            ReductionMode::Reduce1Axis => match role {
                ParamRole::Kernel if rank >= 2 => AxisMask::axes(rank, &[0]).expect("axis in range"),
                ParamRole::Embedding if rank >= 2 => {
                    AxisMask::axes(rank, &[rank - 1]).expect("axis in range")
                }
                _ => AxisMask::all(rank),
            },
        }
    }
}

/// Per-variable metadata the optimizers need.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    /// Model-oriented scale: the quadratic mean the variable should converge to.
    pub eta: f64,
    pub reduction: AxisMask,
    /// Element-wise gradient clipping threshold.
    pub clip_threshold: Option<f64>,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, eta: f64) -> Result<Self> {
        let rank = shape.len();
        let spec = Self {
            name: name.into(),
            shape,
            eta,
            reduction: AxisMask::none(rank),
            clip_threshold: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_reduction(mut self, reduction: AxisMask) -> Result<Self> {
        self.reduction = reduction;
        self.validate()?;
        Ok(self)
    }

    pub fn with_clip(mut self, chi: f64) -> Result<Self> {
        self.clip_threshold = Some(chi);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!(
                "`{}`: eta must be positive and finite, got {}",
                self.name, self.eta
            )));
        }
        if self.reduction.rank() != self.shape.len() {
            return Err(Error::Config(format!(
                "`{}`: reduction mask rank {} does not match shape {:?}",
                self.name,
                self.reduction.rank(),
                self.shape
            )));
        }
        if self.shape.contains(&0) {
            return Err(Error::Config(format!("`{}`: zero-sized dimension", self.name)));
        }
        if let Some(chi) = self.clip_threshold {
            if !(chi > 0.0 && chi.is_finite()) {
                return Err(Error::Config(format!(
                    "`{}`: clip threshold must be positive, got {chi}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn reduced_shape(&self) -> Vec<usize> {
        self.reduction
            .reduced_shape(&self.shape)
            .expect("validated spec has matching mask rank")
    }
}

/// Which optimizer owns a state, and therefore which slots it carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Amos { momentum: bool },
    /// Adam and AdamW share the same slots.
    AdamW,
    AdaGrad,
    Sgd,
}

impl OptimizerKind {
    /// Slot names and shapes allocated for `spec`.
    pub fn slot_layout(self, spec: &ParamSpec) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            OptimizerKind::Amos { momentum } => {
                let reduced = spec.reduced_shape();
                let mut slots = vec![("v", reduced.clone()), ("b", reduced)];
                if momentum {
                    slots.push(("m", spec.shape.clone()));
                }
                slots
            }
            OptimizerKind::AdamW => vec![("m", spec.shape.clone()), ("v", spec.shape.clone())],
            OptimizerKind::AdaGrad => vec![("acc", spec.shape.clone())],
            OptimizerKind::Sgd => Vec::new(),
        }
    }

    pub fn init_slots(self, spec: &ParamSpec) -> SlotSet {
        self.slot_layout(spec)
            .into_iter()
            .map(|(name, shape)| (name.to_string(), Tensor::zeros(&shape)))
            .collect()
    }
}

/// Step counter plus every parameter's slots.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub slots: BTreeMap<String, SlotSet>,
}

impl OptimizerState {
    /// Total number of slot elements held.
    pub fn slot_elements(&self) -> usize {
        self.slots
            .values()
            .flat_map(|s| s.values())
            .map(Tensor::len)
            .sum()
    }
}

/// Zero-filled state at step 0.
pub fn init_state(specs: &[ParamSpec], kind: OptimizerKind) -> Result<OptimizerState> {
    let mut seen = BTreeSet::new();
    let mut slots = BTreeMap::new();
    for spec in specs {
        spec.validate()?;
        if !seen.insert(spec.name.as_str()) {
            return Err(Error::Config(format!("duplicate parameter name `{}`", spec.name)));
        }
        slots.insert(spec.name.clone(), kind.init_slots(spec));
    }
    Ok(OptimizerState { step: 0, slots })
}

/// `theta - delta`.
pub fn apply_update(theta: &Tensor, delta: &Tensor) -> Result<Tensor> {
    if theta.shape() != delta.shape() {
        return Err(crate::TensorError::Shape {
            lhs: theta.shape().to_vec(),
            rhs: delta.shape().to_vec(),
        }
        .into());
    }
    Ok(theta.sub(delta)?)
}

/// Per-variable quantities reported by optimizers that have decay factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub mean_c: f64,
    pub mean_d: f64,
    pub mean_gamma: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub delta: Tensor,
    pub slots: SlotSet,
    pub diagnostics: Option<StepDiagnostics>,
}

/// A per-variable update rule. Implementations are pure: they read the old
/// slots and return new ones.
pub trait Optimizer {
    fn kind(&self) -> OptimizerKind;

    /// Computes the update `delta` for one variable at 0-based step `t`.
    fn step(
        &self,
        spec: &ParamSpec,
        theta: &Tensor,
        grad: &Tensor,
        slots: &SlotSet,
        t: u64,
    ) -> Result<StepOutput>;
}

pub(crate) fn slot<'a>(slots: &'a SlotSet, name: &str, param: &str) -> Result<&'a Tensor> {
    slots
        .get(name)
        .ok_or_else(|| Error::Config(format!("`{param}` is missing slot `{name}`")))
}

/// Applies one optimizer step to every parameter, then advances the step
/// counter. Returns diagnostics keyed by parameter name.
pub fn train_step(
    optimizer: &dyn Optimizer,
    specs: &[ParamSpec],
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut OptimizerState,
) -> Result<BTreeMap<String, Option<StepDiagnostics>>> {
    let t = state.step;
    let mut diagnostics = BTreeMap::new();
    let mut updates = Vec::with_capacity(specs.len());
    for spec in specs {
        let theta = params
            .get(&spec.name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{}`", spec.name)))?;
        let grad = grads
            .get(&spec.name)
            .ok_or_else(|| Error::Config(format!("missing gradient for `{}`", spec.name)))?;
        let slots = state
            .slots
            .get(&spec.name)
            .ok_or_else(|| Error::Config(format!("no optimizer state for `{}`", spec.name)))?;
        let out = optimizer.step(spec, theta, grad, slots, t)?;
        let next = apply_update(theta, &out.delta).map_err(|e| match e {
            Error::Tensor(te) => Error::diverged(te, &spec.name, t),
            other => other,
        })?;
        diagnostics.insert(spec.name.clone(), out.diagnostics);
        updates.push((spec.name.clone(), next, out.slots));
    }
    // Commit only once every variable stepped successfully.
    for (name, next, slots) in updates {
        params.insert(name.clone(), next);
        state.slots.insert(name, slots);
    }
    state.step += 1;
    Ok(diagnostics)
}
