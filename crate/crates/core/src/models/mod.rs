//! Small differentiable models with hand-written reverse-mode gradients.

mod lstm;
mod mlp;
mod quadratic;

use std::collections::BTreeMap;

pub use lstm::{LstmConfig, LstmModel};
pub use mlp::{Gelu, MlpConfig, MlpModel};
pub use quadratic::{QuadraticConfig, QuadraticModel};

use crate::error::{Error, Result};
use crate::eta::{resolve_etas, LayerDecl};
use crate::optim::{ParamRole, ParamSet, ParamSpec, ReductionMode};
use crate::tensor::Tensor;

/// One draw of training or evaluation data.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub targets: Tensor,
    /// Stream index the batch was generated from.
    pub stream: u64,
}

impl Batch {
    pub fn new(inputs: Tensor, targets: Tensor, stream: u64) -> Result<Self> {
        if inputs.shape().first() != targets.shape().first() {
            return Err(Error::Config(format!(
                "batch leading dimensions differ: {:?} vs {:?}",
                inputs.shape(),
                targets.shape()
            )));
        }
        Ok(Self { inputs, targets, stream })
    }

    pub fn size(&self) -> usize {
        self.inputs.shape().first().copied().unwrap_or(1)
    }
}

/// Trainable variable of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamInfo {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: ParamRole,
    pub decl: LayerDecl,
}

pub trait Model {
    fn name(&self) -> &'static str;

    /// Variables in a fixed order.
    fn params(&self) -> Vec<ParamInfo>;

    /// Initial parameters, a pure function of the model seed.
    fn init_params(&self) -> ParamSet;

    fn sample_batch(&self, stream: u64, batch_size: usize) -> Batch;

    fn loss(&self, params: &ParamSet, batch: &Batch) -> Result<f64>;

    /// Loss and gradients with the same shapes as `params`.
    fn loss_and_grad(&self, params: &ParamSet, batch: &Batch) -> Result<(f64, ParamSet)>;
}

/// Builds optimizer specs, taking eta from the model's layer declarations
/// unless `overrides` names the variable.
pub fn param_specs(
    model: &dyn Model,
    reduction: ReductionMode,
    overrides: &BTreeMap<String, f64>,
) -> Result<Vec<ParamSpec>> {
    let infos = model.params();
    for name in overrides.keys() {
        if !infos.iter().any(|p| &p.name == name) {
            return Err(Error::Config(format!("eta override for unknown variable `{name}`")));
        }
    }
    let decls: Vec<LayerDecl> = infos
        .iter()
        .map(|p| {
            let mut decl = p.decl.clone();
            decl.name = p.name.clone();
            if let Some(&eta) = overrides.get(&p.name) {
                decl.override_eta = Some(eta);
            }
            decl
        })
        .collect();
    let etas = resolve_etas(&decls)?;
    infos
        .into_iter()
        .map(|p| {
            let eta = *etas
                .get(&p.name)
                .ok_or_else(|| Error::Config(format!("no eta resolved for `{}`", p.name)))?;
            let mask = reduction.mask_for(p.role, &p.shape);
            ParamSpec::new(p.name, p.shape, eta)?.with_reduction(mask)
        })
        .collect()
}

pub(crate) fn get<'a>(params: &'a ParamSet, name: &str) -> Result<&'a Tensor> {
    params
        .get(name)
        .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
}

pub(crate) fn check_shape(t: &Tensor, shape: &[usize], name: &str) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::Config(format!(
            "`{name}` has shape {:?}, expected {shape:?}",
            t.shape()
        )));
    }
    Ok(())
}

pub(crate) fn finite_loss(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Tensor(crate::tensor::TensorError::NonFinite("loss")))
    }
}

/// `a[r x k] * b[k x c]`.
pub(crate) fn matmul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &mut out[i * c..(i + 1) * c];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * c..(p + 1) * c]) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `a[r x k]^T * b[r x c]`, shape `k x c`.
pub(crate) fn matmul_tn(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * c];
    for i in 0..r {
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (o, &bv) in out[p * c..(p + 1) * c].iter_mut().zip(&b[i * c..(i + 1) * c]) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `a[r x c] * b[k x c]^T`, shape `r x k`.
pub(crate) fn matmul_nt(a: &[f64], b: &[f64], r: usize, c: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * k];
    for i in 0..r {
        let ar = &a[i * c..(i + 1) * c];
        for p in 0..k {
            out[i * k + p] = ar.iter().zip(&b[p * c..(p + 1) * c]).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Column sums of an `r x c` matrix.
pub(crate) fn col_sums(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for i in 0..r {
        for (o, &v) in out.iter_mut().zip(&a[i * c..(i + 1) * c]) {
            *o += v;
        }
    }
    out
}

/// Outcome of a central finite-difference comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    /// `(param, index, analytic, numeric)` of each element outside tolerance.
    pub failures: Vec<(String, usize, f64, f64)>,
    pub max_rel_err: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Compares analytic gradients against central differences with step `h`.
/// An element passes if its relative error is below `rtol`, or if both values
/// are within `atol` of each other. `max_rel_err` covers elements whose
/// magnitude exceeds `atol`.
pub fn finite_difference_check(
    model: &dyn Model,
    params: &ParamSet,
    batch: &Batch,
    h: f64,
    rtol: f64,
    atol: f64,
) -> Result<GradCheck> {
    let (_, grads) = model.loss_and_grad(params, batch)?;
    let mut report = GradCheck {
        checked: 0,
        failures: Vec::new(),
        max_rel_err: 0.0,
    };
    for (name, theta) in params {
        let g = get(&grads, name)?;
        check_shape(g, theta.shape(), name)?;
        let mut probe = params.clone();
        for i in 0..theta.len() {
            let mut eval = |delta: f64| -> Result<f64> {
                let mut data = theta.data().to_vec();
                data[i] += delta;
                probe.insert(name.clone(), Tensor::new(theta.shape().to_vec(), data)?);
                model.loss(&probe, batch)
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            let analytic = g.data()[i];
            let diff = (analytic - numeric).abs();
            let scale = analytic.abs().max(numeric.abs());
            let rel = if scale > 0.0 { diff / scale } else { 0.0 };
            report.checked += 1;
            if scale > atol {
                report.max_rel_err = report.max_rel_err.max(rel);
            }
            if diff > atol && rel > rtol {
                report.failures.push((name.clone(), i, analytic, numeric));
            }
        }
    }
    Ok(report)
}
