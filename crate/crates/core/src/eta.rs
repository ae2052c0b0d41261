//! Model-oriented scales from declared layer input/output ranges.
//!
//! Ranges are stored as mean squares so that rules like `sqrt(1/2)` or
//! `sqrt(1/n)` stay exact rationals until the final square root.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Expected quadratic mean of a tensor's entries at a layer boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSpec {
    mean_square: f64,
}

impl RangeSpec {
    /// A range of quadratic mean `value`.
    pub fn new(value: f64) -> Result<Self> {
        Self::from_mean_square(value * value).and_then(|r| {
            if value > 0.0 {
                Ok(r)
            } else {
                Err(Error::Config(format!("range must be positive, got {value}")))
            }
        })
    }

    pub fn from_mean_square(mean_square: f64) -> Result<Self> {
        if mean_square > 0.0 && mean_square.is_finite() {
            Ok(Self { mean_square })
        } else {
            Err(Error::Config(format!("range mean square must be positive, got {mean_square}")))
        }
    }

    pub const fn unit() -> Self {
        Self { mean_square: 1.0 }
    }

    pub fn value(self) -> f64 {
        self.mean_square.sqrt()
    }

    pub fn mean_square(self) -> f64 {
        self.mean_square
    }
}

/// Standard boundary ranges of non-linear layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Boundary {
    Explicit(RangeSpec),
    ActivationInput,
    /// Roughly half the entries are zeroed: `sqrt(1/2)`.
    ActivationOutput,
    SoftmaxInput,
    /// Unit-norm probability vector over `classes` entries: `sqrt(1/n)`.
    SoftmaxOutput { classes: usize },
    LayerNormOutput,
}

impl Boundary {
    pub fn range(self) -> Result<RangeSpec> {
        match self {
            Boundary::Explicit(r) => Ok(r),
            Boundary::ActivationInput | Boundary::SoftmaxInput | Boundary::LayerNormOutput => {
                Ok(RangeSpec::unit())
            }
            Boundary::ActivationOutput => RangeSpec::from_mean_square(0.5),
            Boundary::SoftmaxOutput { classes } => {
                if classes == 0 {
                    return Err(Error::Config("softmax needs at least one class".into()));
                }
                RangeSpec::from_mean_square(1.0 / classes as f64)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    LinearKernel,
    LinearBias,
    Embedding,
    LayerNormScale,
    Activation,
    Softmax,
    Custom,
}

/// One variable together with the ranges around the layer that owns it.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDecl {
    pub name: String,
    pub kind: LayerKind,
    pub input_range: Option<Boundary>,
    pub output_range: Option<Boundary>,
    /// Fan-in `m` of kernels, or the hidden size an embedding table is
    /// contracted against when it doubles as an output kernel.
    pub input_dim: Option<usize>,
    pub override_eta: Option<f64>,
}

impl LayerDecl {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        Self {
            name: name.into(),
            kind,
            input_range: None,
            output_range: None,
            input_dim: None,
            override_eta: None,
        }
    }

    pub fn kernel(name: impl Into<String>, input: Boundary, output: Boundary, m: usize) -> Self {
        Self {
            input_range: Some(input),
            output_range: Some(output),
            input_dim: Some(m),
            ..Self::new(name, LayerKind::LinearKernel)
        }
    }

    pub fn bias(name: impl Into<String>, output: Boundary) -> Self {
        Self {
            output_range: Some(output),
            ..Self::new(name, LayerKind::LinearBias)
        }
    }

    pub fn layernorm_scale(name: impl Into<String>) -> Self {
        Self {
            output_range: Some(Boundary::LayerNormOutput),
            ..Self::new(name, LayerKind::LayerNormScale)
        }
    }

    pub fn with_override(mut self, eta: f64) -> Self {
        self.override_eta = Some(eta);
        self
    }

    /// Resolved eta, or `None` for parameter-free boundary layers.
    pub fn eta(&self) -> Result<Option<f64>> {
        if let Some(eta) = self.override_eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(self.err(format!("override eta must be positive, got {eta}")));
            }
            return Ok(Some(eta));
        }
        let input = self.range(self.input_range)?;
        let output = match self.kind {
            LayerKind::LayerNormScale => Some(self.range(self.output_range)?.unwrap_or(RangeSpec::unit())),
            _ => self.range(self.output_range)?,
        };
        let need = |r: Option<RangeSpec>, what: &str| {
            r.ok_or_else(|| self.err(format!("no {what} range declared")))
        };
        let eta = match self.kind {
            LayerKind::Activation | LayerKind::Softmax => return Ok(None),
            LayerKind::LinearKernel => {
                let m = self.fan_in()?;
                kernel_from_ranges(need(input, "input")?, need(output, "output")?, m)
            }
            LayerKind::LinearBias => bias_from_range(need(output, "output")?),
            LayerKind::LayerNormScale => need(output, "output")?.value(),
            LayerKind::Embedding | LayerKind::Custom => match (input, self.input_dim) {
                (Some(x), Some(m)) if m >= 1 => kernel_from_ranges(x, need(output, "output")?, m),
                _ => need(output, "output")?.value(),
            },
        };
        Ok(Some(eta))
    }

    fn fan_in(&self) -> Result<usize> {
        match self.input_dim {
            Some(m) if m >= 1 => Ok(m),
            _ => Err(self.err("kernel needs input dimension m >= 1".into())),
        }
    }

    fn range(&self, b: Option<Boundary>) -> Result<Option<RangeSpec>> {
        b.map(|b| b.range().map_err(|e| self.err(e.to_string()))).transpose()
    }

    fn err(&self, msg: String) -> Error {
        Error::Config(format!("eta for `{}`: {msg}", self.name))
    }
}

fn kernel_from_ranges(x: RangeSpec, y: RangeSpec, m: usize) -> f64 {
    (y.mean_square() / (x.mean_square() * m as f64)).sqrt()
}

fn bias_from_range(y: RangeSpec) -> f64 {
    (y.mean_square() / 4.0).sqrt()
}

/// `y / (x * sqrt(m))`.
pub fn eta_linear_kernel(x: f64, y: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::Config("kernel needs input dimension m >= 1".into()));
    }
    Ok(kernel_from_ranges(RangeSpec::new(x)?, RangeSpec::new(y)?, m))
}

/// `y / 2`.
pub fn eta_linear_bias(y: f64) -> Result<f64> {
    Ok(bias_from_range(RangeSpec::new(y)?))
}

pub fn resolve_etas(decls: &[LayerDecl]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for decl in decls {
        if let Some(eta) = decl.eta()? {
            if out.insert(decl.name.clone(), eta).is_some() {
                return Err(Error::Config(format!("duplicate layer declaration `{}`", decl.name)));
            }
        }
    }
    Ok(out)
}

/// Variable categories of a BERT-style encoder with hidden size `d` and MLP
/// width `m`, labelled by row.
pub fn bert_layer_decls(d: usize, m: usize) -> Vec<(&'static str, LayerDecl)> {
    use Boundary::*;
    vec![
        ("Bias in all Linears", LayerDecl::bias("attention/query/bias", LayerNormOutput)),
        ("LayerNormalization Scale", LayerDecl::layernorm_scale("layer_norm/scale")),
        (
            "Input Embeddings",
            LayerDecl {
                input_range: Some(LayerNormOutput),
                output_range: Some(ActivationInput),
                input_dim: Some(d),
                ..LayerDecl::new("embeddings/token", LayerKind::Embedding)
            },
        ),
        ("MLP/Dense2/Kernel", LayerDecl::kernel("mlp/dense2/kernel", ActivationOutput, LayerNormOutput, m)),
        ("Other Linear Kernels", LayerDecl::kernel("attention/query/kernel", LayerNormOutput, ActivationInput, d)),
        (
            "Relative Position Embeddings",
            LayerDecl::new("relative_position/embeddings", LayerKind::Custom).with_override(0.5),
        ),
    ]
}

/// Variable categories of a T5-style model with per-head size `h`.
pub fn t5_layer_decls(d: usize, m: usize, h: usize) -> Vec<(&'static str, LayerDecl)> {
    use Boundary::*;
    let query_output = RangeSpec::from_mean_square(1.0 / h as f64).expect("h >= 1");
    vec![
        ("LayerNormalization Scale", LayerDecl::layernorm_scale("layer_norm/scale")),
        ("Query Kernel", LayerDecl::kernel("attention/query/kernel", LayerNormOutput, Explicit(query_output), d)),
        (
            "Input Embeddings",
            LayerDecl::new("embeddings/token", LayerKind::Embedding).with_override(1.0),
        ),
        ("MLP/wo/Kernel", LayerDecl::kernel("mlp/wo/kernel", ActivationOutput, LayerNormOutput, m)),
        ("Other Linear Kernels", LayerDecl::kernel("attention/key/kernel", LayerNormOutput, ActivationInput, d)),
        (
            "Relative Attention Bias",
            LayerDecl::bias("relative_attention/bias", LayerNormOutput),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        assert_eq!(eta_linear_kernel(0.25, 1.0, 512).unwrap(), (1.0f64 / 32.0).sqrt());
        assert_eq!(eta_linear_kernel(1.0, 1.0, 768).unwrap(), (1.0f64 / 768.0).sqrt());
        let x = RangeSpec::from_mean_square(0.5).unwrap();
        assert_eq!(kernel_from_ranges(x, RangeSpec::unit(), 3072), (2.0f64 / 3072.0).sqrt());
        assert!(eta_linear_kernel(1.0, 1.0, 0).is_err());
        assert!(eta_linear_kernel(0.0, 1.0, 4).is_err());
    }

    #[test]
    fn kernel_is_homogeneous_in_output_range() {
        for &c in &[2.0, 4.0, 0.5, 0.125] {
            let base = eta_linear_kernel(1.0, 1.0, 64).unwrap();
            assert_eq!(eta_linear_kernel(1.0, c, 64).unwrap(), c * base);
        }
    }

    #[test]
    fn bias_examples() {
        assert_eq!(eta_linear_bias(1.0).unwrap(), 0.5);
        assert_eq!(eta_linear_bias(2.0).unwrap(), 1.0);
        let softmax = Boundary::SoftmaxOutput { classes: 10 }.range().unwrap();
        assert!((bias_from_range(softmax) - (0.1f64).sqrt() / 2.0).abs() < 1e-16);
    }

    #[test]
    fn table_one_defaults() {
        assert_eq!(Boundary::ActivationInput.range().unwrap().value(), 1.0);
        assert_eq!(Boundary::ActivationOutput.range().unwrap().value(), 0.5f64.sqrt());
        assert_eq!(Boundary::SoftmaxInput.range().unwrap().value(), 1.0);
        assert_eq!(
            Boundary::SoftmaxOutput { classes: 16 }.range().unwrap().value(),
            0.25
        );
        assert_eq!(Boundary::LayerNormOutput.range().unwrap().value(), 1.0);
    }

    #[test]
    fn resolve_rules() {
        assert!(resolve_etas(&[]).unwrap().is_empty());
        let decls = vec![
            LayerDecl::kernel("k", Boundary::LayerNormOutput, Boundary::ActivationInput, 16),
            LayerDecl::bias("b", Boundary::ActivationInput),
            LayerDecl::new("gelu", LayerKind::Activation),
            LayerDecl::kernel("k2", Boundary::ActivationOutput, Boundary::LayerNormOutput, 8).with_override(0.3),
        ];
        let etas = resolve_etas(&decls).unwrap();
        assert_eq!(etas.len(), 3);
        assert_eq!(etas["k"], 0.25);
        assert_eq!(etas["b"], 0.5);
        assert_eq!(etas["k2"], 0.3);
    }

    #[test]
    fn unresolvable_names_variable() {
        let err = resolve_etas(&[LayerDecl::new("mystery", LayerKind::Custom)]).unwrap_err();
        assert!(err.to_string().contains("mystery"), "{err}");
        let err = resolve_etas(&[LayerDecl {
            input_dim: None,
            ..LayerDecl::kernel("k", Boundary::ActivationInput, Boundary::ActivationInput, 1)
        }])
        .unwrap_err();
        assert!(err.to_string().contains("`k`"));
        let dup = vec![LayerDecl::layernorm_scale("s"), LayerDecl::layernorm_scale("s")];
        assert!(resolve_etas(&dup).is_err());
    }
}
