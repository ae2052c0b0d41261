use crate::data::{gaussian, gaussian_with_m2, stream_rng, MODEL_STREAM};
use crate::error::{Error, Result};
use crate::eta::{Boundary, LayerDecl, LayerKind, RangeSpec};
use crate::optim::{ParamRole, ParamSet};
use crate::tensor::Tensor;

use super::{check_shape, finite_loss, get, Batch, Model, ParamInfo};

pub const THETA: &str = "theta";

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticConfig {
    pub dim: usize,
    /// Quadratic mean of the optimum.
    pub target_scale: f64,
    /// Per-coordinate standard deviation of the per-example noise.
    pub noise_std: f64,
    pub seed: u64,
}

/// Stochastic quadratic bowl. Example `i` contributes
/// `0.5 * |theta - theta* + n_i|^2`, so the batch gradient is
/// `theta - theta* + mean_i n_i`.
#[derive(Debug, Clone)]
pub struct QuadraticModel {
    cfg: QuadraticConfig,
    optimum: Tensor,
}

impl QuadraticModel {
    pub fn new(cfg: QuadraticConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::Config("quadratic model needs dim >= 1".into()));
        }
        if !(cfg.target_scale > 0.0 && cfg.target_scale.is_finite()) {
            return Err(Error::Config(format!("target scale must be positive, got {}", cfg.target_scale)));
        }
        if !(cfg.noise_std >= 0.0 && cfg.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise std must be non-negative, got {}", cfg.noise_std)));
        }
        let optimum = gaussian_with_m2(&mut stream_rng(cfg.seed, MODEL_STREAM), &[cfg.dim], cfg.target_scale);
        Ok(Self { cfg, optimum })
    }

    pub fn config(&self) -> &QuadraticConfig {
        &self.cfg
    }

    pub fn optimum(&self) -> &Tensor {
        &self.optimum
    }

    fn residual(&self, params: &ParamSet) -> Result<Vec<f64>> {
        let theta = get(params, THETA)?;
        check_shape(theta, &[self.cfg.dim], THETA)?;
        Ok(theta.data().iter().zip(self.optimum.data()).map(|(a, b)| a - b).collect())
    }
}

impl Model for QuadraticModel {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn params(&self) -> Vec<ParamInfo> {
        let decl = LayerDecl {
            output_range: Some(Boundary::Explicit(
                RangeSpec::new(self.cfg.target_scale).expect("validated scale"),
            )),
            ..LayerDecl::new(THETA, LayerKind::Custom)
        };
        vec![ParamInfo {
            name: THETA.into(),
            shape: vec![self.cfg.dim],
            role: ParamRole::Other,
            decl,
        }]
    }

    fn init_params(&self) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert(THETA.into(), Tensor::zeros(&[self.cfg.dim]));
        p
    }

    fn sample_batch(&self, stream: u64, batch_size: usize) -> Batch {
        let mut rng = stream_rng(self.cfg.seed, stream);
        let noise = gaussian(&mut rng, &[batch_size, self.cfg.dim], self.cfg.noise_std);
        Batch::new(noise, Tensor::zeros(&[batch_size, 1]), stream).expect("matching batch dims")
    }

    fn loss(&self, params: &ParamSet, batch: &Batch) -> Result<f64> {
        let r = self.residual(params)?;
        let dim = self.cfg.dim;
        let rows = batch.size();
        let noise = batch.inputs.data();
        let mut total = 0.0;
        for i in 0..rows {
            total += r
                .iter()
                .zip(&noise[i * dim..(i + 1) * dim])
                .map(|(a, n)| (a + n) * (a + n))
                .sum::<f64>();
        }
        finite_loss(0.5 * total / rows as f64)
    }

    fn loss_and_grad(&self, params: &ParamSet, batch: &Batch) -> Result<(f64, ParamSet)> {
        let loss = self.loss(params, batch)?;
        let mut grad = self.residual(params)?;
        let dim = self.cfg.dim;
        let rows = batch.size();
        let noise = batch.inputs.data();
        for i in 0..rows {
            for (g, n) in grad.iter_mut().zip(&noise[i * dim..(i + 1) * dim]) {
                *g += n / rows as f64;
            }
        }
        let mut grads = ParamSet::new();
        grads.insert(THETA.into(), Tensor::new(vec![dim], grad)?);
        Ok((loss, grads))
    }
}
