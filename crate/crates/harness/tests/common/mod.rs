#![allow(dead_code)]

use amos_core::optim::ParamSet;
use amos_harness::{RunConfig, Runner};

pub fn quadratic_toml(steps: u64, optimizer: &str) -> String {
    format!(
        r#"
[run]
steps = {steps}
batch_size = 8
seed = 1
train_batches = 10000
eval_batches = 4
eval_batch_size = 64
metrics_every = 10
label = "q"

[model]
kind = "quadratic"
dim = 64
target_scale = 0.2
noise_std = 0.5

[optimizer]
{optimizer}
"#
    )
}

pub fn mlp_toml(steps: u64, optimizer: &str) -> String {
    format!(
        r#"
[run]
steps = {steps}
batch_size = 16
seed = 1
train_batches = 2500
eval_batches = 4
eval_batch_size = 128
metrics_every = 50
label = "mlp"

[model]
kind = "mlp"
input_dim = 8
hidden_dim = 32
output_dim = 4

[optimizer]
{optimizer}
"#
    )
}

pub fn lstm_toml(steps: u64, optimizer: &str) -> String {
    format!(
        r#"
[run]
steps = {steps}
batch_size = 4
seed = 2
train_batches = 100

[model]
kind = "lstm"
input_dim = 3
hidden_dim = 5

[optimizer]
{optimizer}
"#
    )
}

pub fn config(text: &str) -> RunConfig {
    RunConfig::from_toml(text).unwrap()
}

pub fn train(cfg: &RunConfig, steps: u64) -> Runner {
    let mut r = Runner::new(cfg.clone()).unwrap();
    r.run_until(steps, None, None).unwrap();
    r
}

/// Exact equality including the sign of zero and NaN payloads.
pub fn bit_identical(a: &ParamSet, b: &ParamSet) -> bool {
    a.len() == b.len()
        && a.iter().all(|(k, t)| {
            b.get(k).is_some_and(|u| {
                t.shape() == u.shape() && t.data().iter().zip(u.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
        })
}

pub mod streams {
    use amos_core::Tensor;
    use amos_harness::ratio::{RatioTracker, DEFAULT_RATE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Feeds `steps` draws of `signal + sigma * noise` and returns the ratio.
    pub fn track(signal: &[f64], sigma: f64, steps: usize, seed: u64) -> Option<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tracker = RatioTracker::new(&[signal.len()], DEFAULT_RATE);
        for _ in 0..steps {
            let g = signal
                .iter()
                .map(|s| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s + sigma * z
                })
                .collect();
            tracker.update(&Tensor::new(vec![signal.len()], g).unwrap()).unwrap();
        }
        tracker.ratio()
    }

    /// Signal with quadratic mean 1 and noise giving an analytic ratio of
    /// `target`: `1 / sqrt(1 + sigma^2)`.
    pub fn mixed(target: f64, dim: usize, steps: usize, seed: u64) -> f64 {
        let signal: Vec<f64> = (0..dim).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let sigma = (1.0 / (target * target) - 1.0).sqrt();
        track(&signal, sigma, steps, seed).unwrap()
    }

    /// Mean ratio over independent zero-mean noise streams.
    pub fn pure_noise(streams: u64, dim: usize, steps: usize) -> f64 {
        let total: f64 = (0..streams).map(|s| track(&vec![0.0; dim], 1.0, steps, s).unwrap()).sum();
        total / streams as f64
    }
}
