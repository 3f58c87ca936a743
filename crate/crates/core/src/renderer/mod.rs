//! Volume-rendering compositing and the training losses, plus their exact
//! gradients. Training orchestration lives in [`train`], the optimizer in
//! [`adam`].

pub mod adam;
pub mod train;

use serde::{Deserialize, Serialize};

pub use adam::{learning_rate, AdamState};
pub use train::{render_image, RunningLoss, StepStats, TrainConfig, TrainState};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_disp: f64,
    pub lambda_tv: f64,
    /// Charbonnier epsilon of the reconstruction loss.
    pub eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_disp: 1e-3,
            lambda_tv: 1e-1,
            eps: 1e-4,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CompositeSample {
    pub sigma: f64,
    pub dt: f64,
    pub rgb: [f64; 3],
}

#[derive(Clone, Debug, Default)]
pub struct Composited {
    pub color: [f64; 3],
    pub weights: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Transmittance T_i before absorbing sample i.
    pub trans: Vec<f64>,
    pub t_end: f64,
}

/// Front-to-back alpha compositing: alpha_i = 1 - exp(-dt_i sigma_i),
/// w_i = T_i alpha_i, color = sum w_i c_i, black past the last sample.
pub fn composite(samples: &[CompositeSample]) -> Composited {
    composite_into(samples, Composited::default())
}

/// Buffer-reusing variant for hot loops.
pub fn composite_into(samples: &[CompositeSample], mut out: Composited) -> Composited {
    out.color = [0.0; 3];
    out.weights.clear();
    out.alphas.clear();
    out.trans.clear();
    let mut transmittance = 1.0f64;
    for s in samples {
        debug_assert!(s.dt > 0.0 && s.sigma >= 0.0);
        let alpha = 1.0 - (-s.dt * s.sigma).exp();
        let w = transmittance * alpha;
        for c in 0..3 {
            out.color[c] += w * s.rgb[c];
        }
        out.weights.push(w);
        out.alphas.push(alpha);
        out.trans.push(transmittance);
        transmittance *= 1.0 - alpha;
    }
    out.t_end = transmittance;
    out
}

/// Exact dL/dsigma_i given dL/dw_i:
/// dL/dsigma_i = dt_i (T_{i+1} g_i - S_{i+1}) with S_i the suffix sum of
/// w_j g_j. The (1 - alpha) factor cancels algebraically, so opaque samples
/// are safe.
pub fn composite_backward_sigma(
    comp: &Composited,
    samples: &[CompositeSample],
    g: &[f64],
    out: &mut Vec<f64>,
) {
    let n = samples.len();
    out.clear();
    out.resize(n, 0.0);
    let mut suffix = 0.0f64;
    for i in (0..n).rev() {
        let t_next = comp.trans[i] * (1.0 - comp.alphas[i]);
        out[i] = samples[i].dt * (t_next * g[i] - suffix);
        suffix += comp.weights[i] * g[i];
    }
}

/// Charbonnier reconstruction loss, mean over channels.
pub fn recon_loss(c: &[f64; 3], gt: &[f64; 3], eps: f64) -> f64 {
    (0..3)
        .map(|k| ((c[k] - gt[k]).powi(2) + eps).sqrt())
        .sum::<f64>()
        / 3.0
}

pub fn recon_loss_grad(c: &[f64; 3], gt: &[f64; 3], eps: f64) -> [f64; 3] {
    let mut g = [0.0; 3];
    for k in 0..3 {
        let d = c[k] - gt[k];
        g[k] = d / (3.0 * (d * d + eps).sqrt());
    }
    g
}

/// Weighted inverse-depth of one ray.
pub fn ray_disparity(weights: &[f64], ts: &[f64]) -> f64 {
    weights.iter().zip(ts).map(|(w, t)| w / t).sum()
}

/// Mean squared disparity over rays.
pub fn disparity_loss(rays: &[(&[f64], &[f64])]) -> f64 {
    if rays.is_empty() {
        return 0.0;
    }
    rays.iter()
        .map(|(w, t)| ray_disparity(w, t).powi(2))
        .sum::<f64>()
        / rays.len() as f64
}
