use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::data::{gaussian, gaussian_with_m2, stream_rng, INIT_STREAM, MODEL_STREAM};
use crate::error::{Error, Result};
use crate::eta::{Boundary, LayerDecl, RangeSpec};
use crate::optim::{ParamRole, ParamSet};
use crate::tensor::Tensor;

use super::{check_shape, col_sums, finite_loss, get, matmul, matmul_nt, matmul_tn, Batch, Model, ParamInfo};

pub const LN_SCALE: &str = "layer_norm/scale";
pub const W1: &str = "dense1/kernel";
pub const B1: &str = "dense1/bias";
pub const W2: &str = "dense2/kernel";
pub const B2: &str = "dense2/bias";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gelu {
    /// `x * Phi(x)` with the Gaussian CDF via `erf`.
    Exact,
    Tanh,
}

impl Gelu {
    pub fn value(self, x: f64) -> f64 {
        match self {
            Gelu::Exact => 0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2)),
            Gelu::Tanh => 0.5 * x * (1.0 + tanh_inner(x).tanh()),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Gelu::Exact => {
                let cdf = 0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2));
                let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
                cdf + x * pdf
            }
            Gelu::Tanh => {
                let t = tanh_inner(x).tanh();
                let k = (2.0 / PI).sqrt();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * x * x)
            }
        }
    }
}

fn tanh_inner(x: f64) -> f64 {
    (2.0 / PI).sqrt() * (x + 0.044715 * x * x * x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
    pub gelu: Gelu,
    /// Student kernels start at this fraction of their eta.
    pub init_fraction: f64,
    /// Standard deviation of Gaussian noise added to teacher outputs.
    pub label_noise: f64,
    pub layer_norm_eps: f64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_dim: usize, output_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            seed,
            gelu: Gelu::Exact,
            init_fraction: 0.5,
            label_noise: 0.0,
            layer_norm_eps: 1e-5,
        }
    }
}

/// `x -> LayerNorm (learned scale) -> Linear -> GELU -> Linear`, squared
/// error against a fixed teacher network of the same shape.
#[derive(Debug, Clone)]
pub struct MlpModel {
    cfg: MlpConfig,
    teacher: ParamSet,
}

struct Forward {
    xhat: Vec<f64>,
    z0: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    out: Vec<f64>,
}

impl MlpModel {
    pub fn new(cfg: MlpConfig) -> Result<Self> {
        if cfg.input_dim == 0 || cfg.hidden_dim == 0 || cfg.output_dim == 0 {
            return Err(Error::Config("mlp dimensions must be >= 1".into()));
        }
        if !(cfg.init_fraction >= 0.0 && cfg.label_noise >= 0.0 && cfg.layer_norm_eps > 0.0) {
            return Err(Error::Config("mlp init fraction, label noise and epsilon out of range".into()));
        }
        let mut model = Self {
            cfg,
            teacher: ParamSet::new(),
        };
        model.teacher = model.draw(MODEL_STREAM, 1.0, true)?;
        Ok(model)
    }

    pub fn config(&self) -> &MlpConfig {
        &self.cfg
    }

    pub fn teacher(&self) -> &ParamSet {
        &self.teacher
    }

    /// Parameters with each kernel at `fraction * eta`; biases at `fraction * eta`
    /// if `with_bias`, zero otherwise. Scales are unit.
    fn draw(&self, stream: u64, fraction: f64, with_bias: bool) -> Result<ParamSet> {
        let mut rng = stream_rng(self.cfg.seed, stream);
        let mut out = ParamSet::new();
        for p in self.params() {
            let eta = p.decl.eta()?.expect("every mlp variable has an eta");
            let t = match p.name.as_str() {
                LN_SCALE => Tensor::ones(&p.shape),
                B1 | B2 if !with_bias => Tensor::zeros(&p.shape),
                _ if fraction == 0.0 => Tensor::zeros(&p.shape),
                _ => gaussian_with_m2(&mut rng, &p.shape, fraction * eta),
            };
            out.insert(p.name, t);
        }
        Ok(out)
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.cfg.input_dim, self.cfg.hidden_dim, self.cfg.output_dim)
    }

    fn check(&self, params: &ParamSet) -> Result<()> {
        for p in self.params() {
            check_shape(get(params, &p.name)?, &p.shape, &p.name)?;
        }
        Ok(())
    }

    fn forward(&self, params: &ParamSet, x: &[f64], rows: usize) -> Result<Forward> {
        self.check(params)?;
        let (n, h, o) = self.dims();
        let gamma = get(params, LN_SCALE)?.data();
        let mut xhat = vec![0.0; rows * n];
        let mut z0 = vec![0.0; rows * n];
        for r in 0..rows {
            let row = &x[r * n..(r + 1) * n];
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let s = (var + self.cfg.layer_norm_eps).sqrt();
            for j in 0..n {
                xhat[r * n + j] = (row[j] - mu) / s;
                z0[r * n + j] = xhat[r * n + j] * gamma[j];
            }
        }
        let mut pre = matmul(&z0, get(params, W1)?.data(), rows, n, h);
        add_rows(&mut pre, get(params, B1)?.data());
        let act: Vec<f64> = pre.iter().map(|&a| self.cfg.gelu.value(a)).collect();
        let mut out = matmul(&act, get(params, W2)?.data(), rows, h, o);
        add_rows(&mut out, get(params, B2)?.data());
        Ok(Forward { xhat, z0, pre, act, out })
    }

    /// Network outputs for `inputs` of shape `rows x input_dim`.
    pub fn predict(&self, params: &ParamSet, inputs: &Tensor) -> Result<Tensor> {
        let rows = inputs.len() / self.cfg.input_dim;
        let f = self.forward(params, inputs.data(), rows)?;
        Ok(Tensor::new(vec![rows, self.cfg.output_dim], f.out)?)
    }
}

fn add_rows(m: &mut [f64], bias: &[f64]) {
    for row in m.chunks_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

impl Model for MlpModel {
    fn name(&self) -> &'static str {
        "mlp"
    }

    fn params(&self) -> Vec<ParamInfo> {
        let (n, h, o) = self.dims();
        let info = |name: &str, shape: Vec<usize>, role, decl: LayerDecl| ParamInfo {
            name: name.into(),
            shape,
            role,
            decl,
        };
        let unit = Boundary::Explicit(RangeSpec::unit());
        vec![
            info(LN_SCALE, vec![n], ParamRole::Other, LayerDecl::layernorm_scale(LN_SCALE)),
            info(
                W1,
                vec![n, h],
                ParamRole::Kernel,
                LayerDecl::kernel(W1, Boundary::LayerNormOutput, Boundary::ActivationInput, n),
            ),
            info(B1, vec![h], ParamRole::Other, LayerDecl::bias(B1, Boundary::ActivationInput)),
            info(W2, vec![h, o], ParamRole::Kernel, LayerDecl::kernel(W2, Boundary::ActivationOutput, unit, h)),
            info(B2, vec![o], ParamRole::Other, LayerDecl::bias(B2, unit)),
        ]
    }

    fn init_params(&self) -> ParamSet {
        self.draw(INIT_STREAM, self.cfg.init_fraction, false)
            .expect("declarations resolve")
    }

    fn sample_batch(&self, stream: u64, batch_size: usize) -> Batch {
        let mut rng = stream_rng(self.cfg.seed, stream);
        let x = gaussian(&mut rng, &[batch_size, self.cfg.input_dim], 1.0);
        let mut y = self.predict(&self.teacher, &x).expect("teacher is well formed");
        if self.cfg.label_noise > 0.0 {
            let noise = gaussian(&mut rng, y.shape(), self.cfg.label_noise);
            y = y.add(&noise).expect("same shape");
        }
        Batch::new(x, y, stream).expect("matching batch dims")
    }

    fn loss(&self, params: &ParamSet, batch: &Batch) -> Result<f64> {
        let rows = batch.size();
        let f = self.forward(params, batch.inputs.data(), rows)?;
        let t = batch.targets.data();
        let sq: f64 = f.out.iter().zip(t).map(|(y, t)| (y - t) * (y - t)).sum();
        finite_loss(sq / f.out.len() as f64)
    }

    fn loss_and_grad(&self, params: &ParamSet, batch: &Batch) -> Result<(f64, ParamSet)> {
        let (n, h, o) = self.dims();
        let rows = batch.size();
        let f = self.forward(params, batch.inputs.data(), rows)?;
        let t = batch.targets.data();
        let count = f.out.len() as f64;
        let loss = finite_loss(f.out.iter().zip(t).map(|(y, t)| (y - t) * (y - t)).sum::<f64>() / count)?;

        let dy: Vec<f64> = f.out.iter().zip(t).map(|(y, t)| 2.0 * (y - t) / count).collect();
        let dw2 = matmul_tn(&f.act, &dy, rows, h, o);
        let db2 = col_sums(&dy, rows, o);
        let du = matmul_nt(&dy, get(params, W2)?.data(), rows, o, h);
        let da: Vec<f64> = du
            .iter()
            .zip(&f.pre)
            .map(|(d, &a)| d * self.cfg.gelu.derivative(a))
            .collect();
        let dw1 = matmul_tn(&f.z0, &da, rows, n, h);
        let db1 = col_sums(&da, rows, h);
        let dz0 = matmul_nt(&da, get(params, W1)?.data(), rows, h, n);
        let dz_xhat: Vec<f64> = dz0.iter().zip(&f.xhat).map(|(a, b)| a * b).collect();
        let dgamma = col_sums(&dz_xhat, rows, n);

        let mut grads = ParamSet::new();
        grads.insert(LN_SCALE.into(), Tensor::new(vec![n], dgamma)?);
        grads.insert(W1.into(), Tensor::new(vec![n, h], dw1)?);
        grads.insert(B1.into(), Tensor::new(vec![h], db1)?);
        grads.insert(W2.into(), Tensor::new(vec![h, o], dw2)?);
        grads.insert(B2.into(), Tensor::new(vec![o], db2)?);
        Ok((loss, grads))
    }
}
