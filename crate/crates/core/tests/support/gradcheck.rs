//! Random model instances for finite-difference gradient checks.

#![allow(dead_code)]

use amos_core::data::{gaussian, stream_rng};
use amos_core::models::{
    finite_difference_check, LstmConfig, LstmModel, MlpConfig, MlpModel, Model, QuadraticConfig, QuadraticModel,
};
use amos_core::optim::ParamSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-5;
pub const RTOL: f64 = 1e-4;
/// Differences below this are central-difference rounding noise.
pub const ATOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Quadratic,
    Mlp,
    Lstm,
}

fn random_model(kind: Kind, rng: &mut ChaCha8Rng) -> Box<dyn Model> {
    let seed = rng.random();
    match kind {
        Kind::Quadratic => Box::new(
            QuadraticModel::new(QuadraticConfig {
                dim: rng.random_range(1..12),
                target_scale: rng.random_range(0.05..1.0),
                noise_std: rng.random_range(0.0..0.5),
                seed,
            })
            .unwrap(),
        ),
        Kind::Mlp => {
            let mut cfg = MlpConfig::new(rng.random_range(2..6), rng.random_range(1..6), rng.random_range(1..4), seed);
            cfg.label_noise = 0.1;
            if rng.random_bool(0.5) {
                cfg.gelu = amos_core::models::Gelu::Tanh;
            }
            Box::new(MlpModel::new(cfg).unwrap())
        }
        Kind::Lstm => {
            let mut cfg = LstmConfig::new(rng.random_range(1..4), rng.random_range(1..4), seed);
            cfg.seq_len = rng.random_range(1..5);
            Box::new(LstmModel::new(cfg).unwrap())
        }
    }
}

/// Random parameters around the model's own initialization.
fn random_params(model: &dyn Model, rng: &mut ChaCha8Rng) -> ParamSet {
    let mut noise = stream_rng(rng.random(), 0);
    model
        .init_params()
        .into_iter()
        .map(|(name, t)| {
            let bump = gaussian(&mut noise, t.shape(), 0.5);
            (name, t.add(&bump).unwrap())
        })
        .collect()
}

pub struct Summary {
    pub instances: usize,
    pub checked: usize,
    pub failures: usize,
    pub max_rel_err: f64,
}

pub fn check_instances(kind: Kind, instances: usize, seed: u64) -> Summary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Summary { instances, checked: 0, failures: 0, max_rel_err: 0.0 };
    for _ in 0..instances {
        let model = random_model(kind, &mut rng);
        let params = random_params(model.as_ref(), &mut rng);
        let batch = model.sample_batch(rng.random_range(0..1000), rng.random_range(1..4));
        let report = finite_difference_check(model.as_ref(), &params, &batch, STEP, RTOL, ATOL).unwrap();
        out.checked += report.checked;
        out.failures += report.failures.len();
        out.max_rel_err = out.max_rel_err.max(report.max_rel_err);
        for f in report.failures.iter().take(3) {
            eprintln!("{kind:?} gradient mismatch: {f:?}");
        }
    }
    out
}
