//! Running estimate of `M2(E[g]) / sqrt(E[M2(g)^2])` per variable.

use amos_core::{Tensor, TensorError};

pub const DEFAULT_RATE: f64 = 0.98;

#[derive(Debug, Clone, PartialEq)]
pub struct RatioTracker {
    pub rate: f64,
    pub steps: u64,
    /// Un-corrected running average of `g`.
    pub avg_g: Tensor,
    /// Un-corrected running average of `M2(g)^2`.
    pub avg_sq: f64,
}

impl RatioTracker {
    pub fn new(shape: &[usize], rate: f64) -> Self {
        Self {
            rate,
            steps: 0,
            avg_g: Tensor::zeros(shape),
            avg_sq: 0.0,
        }
    }

    /// Folds in one gradient.
    pub fn update(&mut self, g: &Tensor) -> Result<(), TensorError> {
        let rho = self.rate;
        let m2 = g.m2()?;
        self.avg_g = Tensor::broadcast_binary(|a, g| rho * a + (1.0 - rho) * g, &self.avg_g, g)?;
        self.avg_sq = rho * self.avg_sq + (1.0 - rho) * m2 * m2;
        self.steps += 1;
        Ok(())
    }

    /// Bias-corrected ratio; `None` until the denominator is positive.
    pub fn ratio(&self) -> Option<f64> {
        if self.steps == 0 || self.avg_sq <= 0.0 {
            return None;
        }
        let corr = 1.0 - self.rate.powf(self.steps as f64);
        let num = self.avg_g.m2().ok()? / corr;
        let den = (self.avg_sq / corr).sqrt();
        Some(num / den)
    }
}

/// Functional form of [`RatioTracker::update`].
pub fn update_ratio(tracker: &RatioTracker, g: &Tensor) -> Result<RatioTracker, TensorError> {
    let mut next = tracker.clone();
    next.update(g)?;
    Ok(next)
}
