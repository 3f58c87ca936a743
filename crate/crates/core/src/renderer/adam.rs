//! Adam with bias correction, and the warmup + cosine learning-rate schedule.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn update(
        &mut self,
        params: &mut [f64],
        grad: &[f64],
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    ) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        params
            .par_iter_mut()
            .zip(grad.par_iter())
            .zip(self.m.par_iter_mut().zip(self.v.par_iter_mut()))
            .for_each(|((p, &g), (m, v))| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            });
    }
}

/// Linear 0 -> peak over the warmup, then cosine decay to `lr_final` at
/// `total_steps`. `step` is 1-based (the step being taken).
pub fn learning_rate(
    step: usize,
    warmup: usize,
    total_steps: usize,
    peak: f64,
    lr_final: f64,
) -> f64 {
    if warmup > 0 && step <= warmup {
        return peak * step as f64 / warmup as f64;
    }
    if total_steps <= warmup {
        return lr_final;
    }
    let frac = (step - warmup) as f64 / (total_steps - warmup) as f64;
    let frac = frac.clamp(0.0, 1.0);
    lr_final + (peak - lr_final) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_warmup_midpoint_and_final() {
        assert!((learning_rate(500, 1000, 20000, 0.1, 0.01) - 0.05).abs() < 1e-12);
        assert!((learning_rate(1000, 1000, 20000, 0.1, 0.01) - 0.1).abs() < 1e-12);
        assert!((learning_rate(20000, 1000, 20000, 0.1, 0.01) - 0.01).abs() < 1e-12);
        // Monotone decay after warmup.
        let mut prev = f64::INFINITY;
        for s in (1000..=20000).step_by(500) {
            let lr = learning_rate(s, 1000, 20000, 0.1, 0.01);
            assert!(lr <= prev + 1e-12);
            prev = lr;
        }
    }

    #[test]
    fn adam_moves_against_gradient_and_skips_untouched() {
        let mut params = vec![1.0, 2.0, 3.0];
        let grad = vec![0.5, -0.5, 0.0];
        let mut adam = AdamState::new(3);
        adam.update(&mut params, &grad, 0.1, 0.9, 0.99, 1e-15);
        assert!(params[0] < 1.0);
        assert!(params[1] > 2.0);
        assert_eq!(params[2], 3.0, "zero-gradient parameter must not move");
    }

    #[test]
    fn adam_constant_gradient_step_is_lr_sized() {
        // With a constant gradient the bias-corrected update is ~lr * sign(g).
        let mut params = vec![0.0];
        let mut adam = AdamState::new(1);
        for _ in 0..50 {
            adam.update(&mut params, &[2.0], 0.01, 0.9, 0.99, 1e-15);
        }
        assert!(params[0] < -0.45 && params[0] > -0.55, "{}", params[0]);
    }
}
