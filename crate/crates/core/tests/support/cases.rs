//! Randomized comparison of the library optimizers against the scalar
//! references in `reference.rs`.

#![allow(dead_code)]

use amos_core::amos::{amos_step, AmosHyperParams, AmosSlots};
use amos_core::baselines::{adagrad_step, adamw_step, sgd_step, AdaGradHyperParams, AdamWHyperParams, Schedule, SgdHyperParams};
use amos_core::optim::ParamSpec;
use amos_core::{AxisMask, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::reference::*;

fn random_shape(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let rank = rng.random_range(0..=3);
    (0..rank).map(|_| rng.random_range(1..=4)).collect()
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
}

fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor {
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Max absolute discrepancy between `amos_step` and the reference over
/// `cases` random cases (delta and all slots).
pub fn amos_max_error(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for case in 0..cases {
        let shape = random_shape(&mut rng);
        let mask: Vec<bool> = shape.iter().map(|_| rng.random_bool(0.5)).collect();
        let reduced: Vec<usize> = shape.iter().zip(&mask).map(|(&d, &m)| if m { 1 } else { d }).collect();
        let n: usize = shape.iter().product();
        let nr: usize = reduced.iter().product();

        let eta = rng.random_range(0.05..2.0);
        let cfg = AmosRef {
            xi: rng.random_range(1e-3..0.5),
            eta,
            beta: rng.random_range(0.5..0.9999),
            epsilon: 1e-30,
            momentum: rng.random_bool(0.3).then(|| rng.random_range(0.0..0.99)),
            clip: rng.random_bool(0.3).then(|| rng.random_range(0.1..1.0)),
            warmup: if rng.random_bool(0.3) { rng.random_range(1..50) } else { 0 },
            c_coef: rng.random_bool(0.2).then(|| rng.random_range(0.0..1.0)),
            d_coef: rng.random_bool(0.2).then(|| rng.random_range(0.0..1.0)),
        };
        let t = rng.random_range(0..200u64);
        let theta = normal_vec(&mut rng, n, 1.0);
        let mut grad = normal_vec(&mut rng, n, 1.0);
        // exercise all-zero gradient slices
        if rng.random_bool(0.15) {
            let (map, _) = reduced_index_map(&shape, &mask);
            let dead = rng.random_range(0..nr);
            for i in 0..n {
                if map[i] == dead {
                    grad[i] = 0.0;
                }
            }
        }
        let v: Vec<f64> = (0..nr).map(|_| rng.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..nr).map(|_| rng.random_range(0.0..100.0)).collect();
        let m = cfg.momentum.map(|_| normal_vec(&mut rng, n, 0.1));

        let expect = amos_ref(&cfg, &shape, &mask, &theta, &grad, &v, &b, m.as_deref(), t);

        let spec = ParamSpec::new(format!("case{case}"), shape.clone(), eta)
            .unwrap()
            .with_reduction(AxisMask::new(mask.clone()))
            .unwrap();
        let hp = AmosHyperParams {
            xi: cfg.xi,
            beta: cfg.beta,
            momentum: cfg.momentum,
            clip: cfg.clip,
            warmup_steps: cfg.warmup,
            c_coef: cfg.c_coef,
            d_coef: cfg.d_coef,
            epsilon: cfg.epsilon,
        };
        let slots = AmosSlots {
            v: tensor(&reduced, v),
            b: tensor(&reduced, b),
            m: m.map(|m| tensor(&shape, m)),
        };
        let (delta, next) = amos_step(&tensor(&shape, theta), &tensor(&shape, grad), &slots, &spec, &hp, t).unwrap();
        worst = worst
            .max(max_abs_diff(delta.data(), &expect.delta))
            .max(max_abs_diff(next.v.data(), &expect.v))
            .max(max_abs_diff(next.b.data(), &expect.b));
        if let (Some(a), Some(e)) = (&next.m, &expect.m) {
            worst = worst.max(max_abs_diff(a.data(), e));
        }
    }
    worst
}

/// Max absolute discrepancy of AdamW, SGD and AdaGrad against the references.
pub fn baselines_max_error(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let shape = random_shape(&mut rng);
        let n: usize = shape.iter().product();
        let theta = normal_vec(&mut rng, n, 1.0);
        let g = normal_vec(&mut rng, n, 1.0);
        let t = rng.random_range(0..500u64);

        let warmup = rng.random_range(0..100u64);
        let (schedule, schedule_ref) = match rng.random_range(0..3) {
            0 => (Schedule::Constant, ScheduleRef::Constant),
            1 => {
                let max_steps = warmup + rng.random_range(1..600);
                (Schedule::Linear { max_steps }, ScheduleRef::Linear { max_steps })
            }
            _ => (Schedule::InverseSqrt, ScheduleRef::Rsqrt),
        };
        let hp = AdamWHyperParams {
            alpha: rng.random_range(1e-4..1e-1),
            beta1: rng.random_range(0.0..0.99),
            beta2: rng.random_range(0.9..0.9999),
            weight_decay: if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..0.1) },
            warmup_steps: warmup,
            schedule,
            epsilon: 1e-8,
        };
        let m = normal_vec(&mut rng, n, 0.1);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let lr = adamw_lr(hp.alpha, warmup, &schedule_ref, t);
        let (d_ref, m_ref, v_ref) = adamw_ref(lr, hp.beta1, hp.beta2, hp.epsilon, hp.weight_decay, &theta, &g, &m, &v, t);
        let (d, m2, v2) = adamw_step(&tensor(&shape, theta.clone()), &tensor(&shape, g.clone()), &tensor(&shape, m), &tensor(&shape, v), &hp, t).unwrap();
        worst = worst
            .max(max_abs_diff(d.data(), &d_ref))
            .max(max_abs_diff(m2.data(), &m_ref))
            .max(max_abs_diff(v2.data(), &v_ref));

        let sgd = SgdHyperParams {
            alpha: rng.random_range(1e-3..1.0),
            lambda: rng.random_range(0.0..0.1),
        };
        let d = sgd_step(&tensor(&shape, theta.clone()), &tensor(&shape, g.clone()), &sgd, t).unwrap();
        worst = worst.max(max_abs_diff(d.data(), &sgd_ref(sgd.alpha, sgd.lambda, &theta, &g, t)));

        let ada = AdaGradHyperParams {
            alpha: rng.random_range(1e-3..1.0),
            epsilon: 1e-10,
        };
        let acc: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..5.0)).collect();
        let (d_ref, acc_ref) = adagrad_ref(ada.alpha, ada.epsilon, &g, &acc);
        let (d, acc2) = adagrad_step(&tensor(&shape, g), &tensor(&shape, acc), &ada).unwrap();
        worst = worst.max(max_abs_diff(d.data(), &d_ref)).max(max_abs_diff(acc2.data(), &acc_ref));
    }
    worst
}
