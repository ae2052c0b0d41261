//! Scalar reference implementations written directly from the update
//! formulas, with explicit loops and no tensor helpers. Used as oracles.

#![allow(dead_code)]

/// Flat index in the reduced layout for each flat index of `shape`.
pub fn reduced_index_map(shape: &[usize], mask: &[bool]) -> (Vec<usize>, usize) {
    let total: usize = shape.iter().product();
    let reduced: Vec<usize> = shape
        .iter()
        .zip(mask)
        .map(|(&d, &m)| if m { 1 } else { d })
        .collect();
    let reduced_total: usize = reduced.iter().product();
    let mut map = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rem = flat;
        let mut idx = vec![0usize; shape.len()];
        for axis in (0..shape.len()).rev() {
            idx[axis] = rem % shape[axis];
            rem /= shape[axis];
        }
        let mut r = 0usize;
        for axis in 0..shape.len() {
            let i = if mask[axis] { 0 } else { idx[axis] };
            r = r * reduced[axis] + i;
        }
        map.push(r);
    }
    (map, reduced_total)
}

pub struct AmosRef {
    pub xi: f64,
    pub eta: f64,
    pub beta: f64,
    pub epsilon: f64,
    pub momentum: Option<f64>,
    pub clip: Option<f64>,
    pub warmup: u64,
    pub c_coef: Option<f64>,
    pub d_coef: Option<f64>,
}

pub struct AmosRefOut {
    pub delta: Vec<f64>,
    pub v: Vec<f64>,
    pub b: Vec<f64>,
    pub m: Option<Vec<f64>>,
}

/// One step at 0-based `t`.
#[allow(clippy::too_many_arguments)]
pub fn amos_ref(
    cfg: &AmosRef,
    shape: &[usize],
    mask: &[bool],
    theta: &[f64],
    grad: &[f64],
    v: &[f64],
    b: &[f64],
    m: Option<&[f64]>,
    t: u64,
) -> AmosRefOut {
    let (map, nr) = reduced_index_map(shape, mask);
    let n = theta.len();

    let xi = if cfg.warmup == 0 {
        cfg.xi
    } else {
        cfg.xi * f64::min(1.0, (t + 1) as f64 / cfg.warmup as f64)
    };

    let mut g = grad.to_vec();
    if let Some(chi) = cfg.clip {
        for x in g.iter_mut() {
            *x = *x * chi / f64::max(chi, x.abs());
        }
    }

    let mut sum_sq = vec![0.0; nr];
    let mut count = vec![0usize; nr];
    for i in 0..n {
        sum_sq[map[i]] += g[i] * g[i];
        count[map[i]] += 1;
    }

    let mut v_new = vec![0.0; nr];
    let mut b_new = vec![0.0; nr];
    let mut gamma = vec![0.0; nr];
    let mut c = vec![0.0; nr];
    let mut d = vec![0.0; nr];
    let mut v_hat = vec![0.0; nr];
    for r in 0..nr {
        let ms = sum_sq[r] / count[r] as f64;
        v_new[r] = cfg.beta * v[r] + (1.0 - cfg.beta) * ms;
        v_hat[r] = v_new[r] / (1.0 - cfg.beta.powf((t + 1) as f64));
        let p = cfg.c_coef.unwrap_or(0.25 * xi.sqrt());
        let q = cfg.d_coef.unwrap_or(0.25 * (xi * cfg.eta).sqrt());
        c[r] = (1.0 + p * b[r]).powf(-0.5);
        d[r] = 1.0 / (1.0 + q * b[r]);
        gamma[r] = if sum_sq[r] == 0.0 {
            0.0
        } else {
            c[r] * xi * xi * ms / v_hat[r]
        };
        b_new[r] = b[r] + gamma[r] * (1.0 + b[r]);
    }

    let mut delta = vec![0.0; n];
    for i in 0..n {
        let r = map[i];
        let denom = f64::max(v_hat[r].sqrt(), cfg.epsilon);
        delta[i] = d[r] * (xi * cfg.eta * g[i] / denom + 0.5 * gamma[r] * theta[i]);
    }

    let m_new = match (cfg.momentum, m) {
        (Some(mu), Some(m)) => {
            let next: Vec<f64> = (0..n).map(|i| mu * m[i] + (1.0 - mu) * delta[i]).collect();
            delta = next.clone();
            Some(next)
        }
        (_, m) => m.map(|m| m.to_vec()),
    };

    AmosRefOut {
        delta,
        v: v_new,
        b: b_new,
        m: m_new,
    }
}

pub enum ScheduleRef {
    Constant,
    Linear { max_steps: u64 },
    Rsqrt,
}

pub fn adamw_lr(alpha: f64, warmup: u64, schedule: &ScheduleRef, t: u64) -> f64 {
    if t < warmup {
        return alpha * (t as f64 + 1.0) / warmup as f64;
    }
    match schedule {
        ScheduleRef::Constant => alpha,
        ScheduleRef::Linear { max_steps } => {
            if t >= *max_steps {
                0.0
            } else {
                alpha * (*max_steps - t) as f64 / (*max_steps - warmup) as f64
            }
        }
        ScheduleRef::Rsqrt => {
            let w = warmup.max(1) as f64;
            alpha * (w / (t as f64).max(w)).sqrt()
        }
    }
}

/// Returns `(delta, m', v')` element-wise.
#[allow(clippy::too_many_arguments)]
pub fn adamw_ref(
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    wd: f64,
    theta: &[f64],
    g: &[f64],
    m: &[f64],
    v: &[f64],
    t: u64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = theta.len();
    let (mut delta, mut m2, mut v2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        m2[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v2[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m2[i] / (1.0 - beta1.powf((t + 1) as f64));
        let v_hat = v2[i] / (1.0 - beta2.powf((t + 1) as f64));
        delta[i] = lr * (m_hat / (v_hat.sqrt() + eps) + wd * theta[i]);
    }
    (delta, m2, v2)
}

pub fn sgd_ref(alpha: f64, lambda: f64, theta: &[f64], g: &[f64], t: u64) -> Vec<f64> {
    let lr = alpha / (1.0 + alpha * lambda * t as f64);
    theta.iter().zip(g).map(|(th, g)| lr * (g + lambda * th)).collect()
}

/// Returns `(delta, acc')`.
pub fn adagrad_ref(alpha: f64, eps: f64, g: &[f64], acc: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let acc2: Vec<f64> = acc.iter().zip(g).map(|(a, g)| a + g * g).collect();
    let delta = g
        .iter()
        .zip(&acc2)
        .map(|(g, a)| alpha * g / f64::max(a.sqrt(), eps))
        .collect();
    (delta, acc2)
}
