use crate::data::{gaussian, gaussian_with_m2, stream_rng, INIT_STREAM, MODEL_STREAM};
use crate::error::{Error, Result};
use crate::eta::{Boundary, LayerDecl, RangeSpec};
use crate::optim::{ParamRole, ParamSet};
use crate::tensor::Tensor;

use super::{check_shape, col_sums, finite_loss, get, matmul, matmul_nt, matmul_tn, Batch, Model, ParamInfo};

pub const KERNEL: &str = "lstm/kernel";
pub const BIAS: &str = "lstm/bias";

#[derive(Debug, Clone, PartialEq)]
pub struct LstmConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub seq_len: usize,
    /// Standard deviation of input entries; also the declared input range.
    pub input_scale: f64,
    pub seed: u64,
    pub init_fraction: f64,
}

impl LstmConfig {
    pub fn new(input_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        Self {
            input_dim,
            hidden_dim,
            seq_len: 4,
            input_scale: 0.25,
            seed,
            init_fraction: 0.5,
        }
    }
}

/// One LSTM cell unrolled over a short sequence from zero state. The kernel
/// maps `[x_t, h_{t-1}]` to the four gate pre-activations in the order
/// input, forget, candidate, output. Loss is the mean squared error of the
/// final hidden state against a teacher cell.
#[derive(Debug, Clone)]
pub struct LstmModel {
    cfg: LstmConfig,
    teacher: ParamSet,
}

struct StepCache {
    v: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmModel {
    pub fn new(cfg: LstmConfig) -> Result<Self> {
        if cfg.input_dim == 0 || cfg.hidden_dim == 0 || cfg.seq_len == 0 {
            return Err(Error::Config("lstm dimensions and sequence length must be >= 1".into()));
        }
        if !(cfg.input_scale > 0.0 && cfg.init_fraction >= 0.0) {
            return Err(Error::Config("lstm input scale must be positive".into()));
        }
        let mut model = Self {
            cfg,
            teacher: ParamSet::new(),
        };
        model.teacher = model.draw(MODEL_STREAM, 1.0)?;
        Ok(model)
    }

    pub fn config(&self) -> &LstmConfig {
        &self.cfg
    }

    pub fn teacher(&self) -> &ParamSet {
        &self.teacher
    }

    fn fan_in(&self) -> usize {
        self.cfg.input_dim + self.cfg.hidden_dim
    }

    fn draw(&self, stream: u64, fraction: f64) -> Result<ParamSet> {
        let mut rng = stream_rng(self.cfg.seed, stream);
        let mut out = ParamSet::new();
        for p in self.params() {
            let eta = p.decl.eta()?.expect("lstm variables have an eta");
            let t = if fraction == 0.0 || (p.name == BIAS && stream != MODEL_STREAM) {
                Tensor::zeros(&p.shape)
            } else {
                gaussian_with_m2(&mut rng, &p.shape, fraction * eta)
            };
            out.insert(p.name, t);
        }
        Ok(out)
    }

    /// Runs the cell over `x` of shape `rows x seq_len x input_dim`.
    fn forward(&self, params: &ParamSet, x: &[f64], rows: usize, seq_len: usize) -> Result<(Vec<f64>, Vec<StepCache>)> {
        for p in self.params() {
            check_shape(get(params, &p.name)?, &p.shape, &p.name)?;
        }
        let (n, hd) = (self.cfg.input_dim, self.cfg.hidden_dim);
        let k = self.fan_in();
        let w = get(params, KERNEL)?.data();
        let b = get(params, BIAS)?.data();
        let mut h = vec![0.0; rows * hd];
        let mut c = vec![0.0; rows * hd];
        let mut caches = Vec::with_capacity(seq_len);
        for s in 0..seq_len {
            let mut v = vec![0.0; rows * k];
            for r in 0..rows {
                let xs = &x[(r * seq_len + s) * n..(r * seq_len + s + 1) * n];
                v[r * k..r * k + n].copy_from_slice(xs);
                v[r * k + n..(r + 1) * k].copy_from_slice(&h[r * hd..(r + 1) * hd]);
            }
            let z = matmul(&v, w, rows, k, 4 * hd);
            let mut cache = StepCache {
                v,
                i: vec![0.0; rows * hd],
                f: vec![0.0; rows * hd],
                g: vec![0.0; rows * hd],
                o: vec![0.0; rows * hd],
                c_prev: c.clone(),
                tanh_c: vec![0.0; rows * hd],
            };
            for r in 0..rows {
                for j in 0..hd {
                    let zr = &z[r * 4 * hd..(r + 1) * 4 * hd];
                    let idx = r * hd + j;
                    let i = sigmoid(zr[j] + b[j]);
                    let f = sigmoid(zr[hd + j] + b[hd + j]);
                    let g = (zr[2 * hd + j] + b[2 * hd + j]).tanh();
                    let o = sigmoid(zr[3 * hd + j] + b[3 * hd + j]);
                    c[idx] = f * c[idx] + i * g;
                    let tc = c[idx].tanh();
                    h[idx] = o * tc;
                    cache.i[idx] = i;
                    cache.f[idx] = f;
                    cache.g[idx] = g;
                    cache.o[idx] = o;
                    cache.tanh_c[idx] = tc;
                }
            }
            caches.push(cache);
        }
        Ok((h, caches))
    }

    /// Final hidden state for inputs of shape `rows x seq x input_dim`.
    pub fn final_hidden(&self, params: &ParamSet, inputs: &Tensor) -> Result<Tensor> {
        let (rows, seq) = self.layout(inputs)?;
        let (h, _) = self.forward(params, inputs.data(), rows, seq)?;
        Ok(Tensor::new(vec![rows, self.cfg.hidden_dim], h)?)
    }

    fn layout(&self, inputs: &Tensor) -> Result<(usize, usize)> {
        match inputs.shape() {
            [rows, seq, n] if *n == self.cfg.input_dim => Ok((*rows, *seq)),
            s => Err(Error::Config(format!(
                "lstm inputs must be rows x seq x {}, got {s:?}",
                self.cfg.input_dim
            ))),
        }
    }
}

impl Model for LstmModel {
    fn name(&self) -> &'static str {
        "lstm"
    }

    fn params(&self) -> Vec<ParamInfo> {
        let hd = self.cfg.hidden_dim;
        let x = Boundary::Explicit(RangeSpec::new(self.cfg.input_scale).expect("validated input scale"));
        let unit = Boundary::Explicit(RangeSpec::unit());
        vec![
            ParamInfo {
                name: KERNEL.into(),
                shape: vec![self.fan_in(), 4 * hd],
                role: ParamRole::Kernel,
                decl: LayerDecl::kernel(KERNEL, x, unit, self.fan_in()),
            },
            ParamInfo {
                name: BIAS.into(),
                shape: vec![4 * hd],
                role: ParamRole::Other,
                decl: LayerDecl::bias(BIAS, unit),
            },
        ]
    }

    fn init_params(&self) -> ParamSet {
        self.draw(INIT_STREAM, self.cfg.init_fraction)
            .expect("declarations resolve")
    }

    fn sample_batch(&self, stream: u64, batch_size: usize) -> Batch {
        let mut rng = stream_rng(self.cfg.seed, stream);
        let x = gaussian(&mut rng, &[batch_size, self.cfg.seq_len, self.cfg.input_dim], self.cfg.input_scale);
        let y = self.final_hidden(&self.teacher, &x).expect("teacher is well formed");
        Batch::new(x, y, stream).expect("matching batch dims")
    }

    fn loss(&self, params: &ParamSet, batch: &Batch) -> Result<f64> {
        let h = self.final_hidden(params, &batch.inputs)?;
        let t = batch.targets.data();
        let sq: f64 = h.data().iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
        finite_loss(sq / h.len() as f64)
    }

    fn loss_and_grad(&self, params: &ParamSet, batch: &Batch) -> Result<(f64, ParamSet)> {
        let (rows, seq) = self.layout(&batch.inputs)?;
        let (n, hd) = (self.cfg.input_dim, self.cfg.hidden_dim);
        let k = self.fan_in();
        let (h, caches) = self.forward(params, batch.inputs.data(), rows, seq)?;
        let t = batch.targets.data();
        let count = h.len() as f64;
        let loss = finite_loss(h.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / count)?;

        let w = get(params, KERNEL)?.data();
        let mut dw = vec![0.0; k * 4 * hd];
        let mut db = vec![0.0; 4 * hd];
        let mut dh: Vec<f64> = h.iter().zip(t).map(|(a, b)| 2.0 * (a - b) / count).collect();
        let mut dc = vec![0.0; rows * hd];
        for cache in caches.iter().rev() {
            let mut dz = vec![0.0; rows * 4 * hd];
            for r in 0..rows {
                for j in 0..hd {
                    let idx = r * hd + j;
                    let (i, f, g, o, tc) = (cache.i[idx], cache.f[idx], cache.g[idx], cache.o[idx], cache.tanh_c[idx]);
                    let d_o = dh[idx] * tc;
                    let dct = dc[idx] + dh[idx] * o * (1.0 - tc * tc);
                    let dzr = &mut dz[r * 4 * hd..(r + 1) * 4 * hd];
                    dzr[j] = dct * g * i * (1.0 - i);
                    dzr[hd + j] = dct * cache.c_prev[idx] * f * (1.0 - f);
                    dzr[2 * hd + j] = dct * i * (1.0 - g * g);
                    dzr[3 * hd + j] = d_o * o * (1.0 - o);
                    dc[idx] = dct * f;
                }
            }
            for (a, b) in dw.iter_mut().zip(matmul_tn(&cache.v, &dz, rows, k, 4 * hd)) {
                *a += b;
            }
            for (a, b) in db.iter_mut().zip(col_sums(&dz, rows, 4 * hd)) {
                *a += b;
            }
            let dv = matmul_nt(&dz, w, rows, 4 * hd, k);
            for r in 0..rows {
                dh[r * hd..(r + 1) * hd].copy_from_slice(&dv[r * k + n..(r + 1) * k]);
            }
        }
        let mut grads = ParamSet::new();
        grads.insert(KERNEL.into(), Tensor::new(vec![k, 4 * hd], dw)?);
        grads.insert(BIAS.into(), Tensor::new(vec![4 * hd], db)?);
        Ok((loss, grads))
    }
}
