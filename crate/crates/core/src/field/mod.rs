//! The trainable radiance field: hash-grid features, a density MLP, a color
//! MLP over scene features plus spherical-harmonics direction encoding, and
//! hand-written reverse-mode gradients for all of it.
//!
//! All trainable scalars live in one flat f64 arena; [`ParamLayout`] names
//! the slices. Backward passes write MLP gradients densely and table
//! gradients as sparse (index, value) pairs so per-chunk buffers stay small.

pub mod grid;
pub mod hash;
pub mod sh;

use nalgebra::Vector3;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use std::ops::Range;

use crate::geometry::Aabb;
pub use grid::{grid_backward, grid_lookup, GridCache, HashGridConfig, HashMode};
pub use hash::NodeHashParams;
pub use sh::{sh_encode, SH_DIM};

/// Raw density logits are capped here before exponentiation; beyond this the
/// medium is already opaque within any step and exp would overflow training.
const RAW_DENSITY_CLAMP: f64 = 15.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub grid: HashGridConfig,
    /// Hidden width of both MLPs.
    pub hidden: usize,
    /// Density MLP output width: one raw density plus scene features.
    pub density_out: usize,
    pub sh_dim: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            grid: HashGridConfig::default(),
            hidden: 64,
            density_out: 16,
            sh_dim: SH_DIM,
        }
    }
}

impl FieldConfig {
    pub fn grid_feat(&self) -> usize {
        self.grid.output_dim()
    }

    pub fn color_in(&self) -> usize {
        self.density_out + self.sh_dim
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }
}

/// Slice names into the flat parameter arena. Weight matrices are row-major
/// `w[out_idx * n_in + in_idx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamLayout {
    pub table: Range<usize>,
    pub d_w1: Range<usize>,
    pub d_b1: Range<usize>,
    pub d_w2: Range<usize>,
    pub d_b2: Range<usize>,
    pub c_w1: Range<usize>,
    pub c_b1: Range<usize>,
    pub c_w2: Range<usize>,
    pub c_b2: Range<usize>,
    pub c_w3: Range<usize>,
    pub c_b3: Range<usize>,
    pub total: usize,
}

impl ParamLayout {
    fn new(cfg: &FieldConfig) -> Self {
        let mut at = 0usize;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let (h, din, dout, cin) = (cfg.hidden, cfg.grid_feat(), cfg.density_out, cfg.color_in());
        let table = take(cfg.grid.param_count());
        let d_w1 = take(h * din);
        let d_b1 = take(h);
        let d_w2 = take(dout * h);
        let d_b2 = take(dout);
        let c_w1 = take(h * cin);
        let c_b1 = take(h);
        let c_w2 = take(h * h);
        let c_b2 = take(h);
        let c_w3 = take(3 * h);
        let c_b3 = take(3);
        ParamLayout {
            table,
            d_w1,
            d_b1,
            d_w2,
            d_b2,
            c_w1,
            c_b1,
            c_w2,
            c_b2,
            c_w3,
            c_b3,
            total: at,
        }
    }

    pub fn mlp_param_count(&self) -> usize {
        self.total - self.table.end
    }
}

/// Table entries uniform in [-1e-4, 1e-4], MLP weights He-uniform, biases 0.
pub fn init_params(cfg: &FieldConfig, seed: u64) -> Vec<f64> {
    let layout = cfg.layout();
    let mut rng = StdRng::seed_from_u64(seed);
    let mut p = vec![0.0f64; layout.total];
    for v in &mut p[layout.table.clone()] {
        *v = rng.gen_range(-1e-4..1e-4);
    }
    let he = |p: &mut [f64], rng: &mut StdRng, fan_in: usize| {
        let bound = (6.0 / fan_in as f64).sqrt();
        for v in p {
            *v = rng.gen_range(-bound..bound);
        }
    };
    let (h, din, cin) = (cfg.hidden, cfg.grid_feat(), cfg.color_in());
    he(&mut p[layout.d_w1.clone()], &mut rng, din);
    he(&mut p[layout.d_w2.clone()], &mut rng, h);
    he(&mut p[layout.c_w1.clone()], &mut rng, cin);
    he(&mut p[layout.c_w2.clone()], &mut rng, h);
    he(&mut p[layout.c_w3.clone()], &mut rng, h);
    p
}

#[derive(Clone, Copy, Debug)]
pub struct FieldOutput {
    pub sigma: f64,
    pub rgb: [f64; 3],
}

/// Forward activations kept for the backward pass. Reused across samples to
/// avoid churn; `resize` is cheap after warm-up.
#[derive(Clone, Debug, Default)]
pub struct EvalCache {
    pub grid: GridCache,
    pub feat: Vec<f64>,
    pub h1: Vec<f64>,
    pub dens_out: Vec<f64>,
    pub color_in: Vec<f64>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub rgb: [f64; 3],
    pub sigma: f64,
    pub raw_density: f64,
}

fn linear(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64], relu: bool) {
    let n_in = x.len();
    for (j, o) in out.iter_mut().enumerate() {
        let row = &w[j * n_in..(j + 1) * n_in];
        // Eight independent accumulators so the dot product vectorizes and
        // the FMA latency chain is hidden.
        let mut acc = [0.0f64; 8];
        let mut rc = row.chunks_exact(8);
        let mut xc = x.chunks_exact(8);
        for (r8, x8) in (&mut rc).zip(&mut xc) {
            for k in 0..8 {
                acc[k] += r8[k] * x8[k];
            }
        }
        let mut s = b[j]
            + ((acc[0] + acc[1]) + (acc[2] + acc[3]))
            + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
        for (wi, xi) in rc.remainder().iter().zip(xc.remainder()) {
            s += wi * xi;
        }
        *o = if relu { s.max(0.0) } else { s };
    }
}

/// d(loss)/d(pre-activation) is given in `d_out` (ReLU already applied by the
/// caller); accumulates weight/bias grads and writes d(loss)/d(input).
fn linear_backward(
    w: &[f64],
    x: &[f64],
    d_out: &[f64],
    d_w: &mut [f64],
    d_b: &mut [f64],
    d_x: &mut [f64],
) {
    let n_in = x.len();
    d_x.iter_mut().for_each(|v| *v = 0.0);
    for (j, &g) in d_out.iter().enumerate() {
        d_b[j] += g;
        if g == 0.0 {
            continue;
        }
        let w_row = &w[j * n_in..(j + 1) * n_in];
        let dw_row = &mut d_w[j * n_in..(j + 1) * n_in];
        // Two independent elementwise streams; both vectorize.
        for (dw, &xi) in dw_row.iter_mut().zip(x) {
            *dw += g * xi;
        }
        for (dx, &wi) in d_x.iter_mut().zip(w_row) {
            *dx += g * wi;
        }
    }
}

/// Full field forward: grid features -> density MLP -> (exp density, scene
/// features) -> [features, SH] -> color MLP -> sigmoid RGB.
pub fn field_eval(
    cfg: &FieldConfig,
    layout: &ParamLayout,
    params: &[f64],
    hp: &NodeHashParams,
    z: &Vector3<f64>,
    bbox: &Aabb,
    sh: &[f64],
    cache: &mut EvalCache,
) -> FieldOutput {
    debug_assert_eq!(sh.len(), cfg.sh_dim);
    let (h, dout) = (cfg.hidden, cfg.density_out);
    cache.feat.clear();
    cache.feat.resize(cfg.grid_feat(), 0.0);
    grid_lookup(
        &cfg.grid,
        &params[layout.table.clone()],
        hp,
        z,
        bbox,
        &mut cache.feat,
        Some(&mut cache.grid),
    );

    cache.h1.resize(h, 0.0);
    linear(
        &params[layout.d_w1.clone()],
        &params[layout.d_b1.clone()],
        &cache.feat,
        &mut cache.h1,
        true,
    );
    cache.dens_out.resize(dout, 0.0);
    linear(
        &params[layout.d_w2.clone()],
        &params[layout.d_b2.clone()],
        &cache.h1,
        &mut cache.dens_out,
        false,
    );
    cache.raw_density = cache.dens_out[0].min(RAW_DENSITY_CLAMP);
    cache.sigma = cache.raw_density.exp();

    cache.color_in.clear();
    cache.color_in.extend_from_slice(&cache.dens_out);
    cache.color_in.extend_from_slice(sh);
    cache.c1.resize(h, 0.0);
    linear(
        &params[layout.c_w1.clone()],
        &params[layout.c_b1.clone()],
        &cache.color_in,
        &mut cache.c1,
        true,
    );
    cache.c2.resize(h, 0.0);
    linear(
        &params[layout.c_w2.clone()],
        &params[layout.c_b2.clone()],
        &cache.c1,
        &mut cache.c2,
        true,
    );
    let mut c3 = [0.0f64; 3];
    linear(
        &params[layout.c_w3.clone()],
        &params[layout.c_b3.clone()],
        &cache.c2,
        &mut c3,
        false,
    );
    for (k, v) in c3.iter().enumerate() {
        cache.rgb[k] = 1.0 / (1.0 + (-v).exp());
    }
    FieldOutput {
        sigma: cache.sigma,
        rgb: cache.rgb,
    }
}

/// Gradient buffers for one worker: dense for the MLPs (small), sparse for
/// the table (large but sparsely touched).
#[derive(Clone, Debug, Default)]
pub struct GradSink {
    /// Indexed relative to the start of the MLP block (`layout.table.end`).
    pub mlp: Vec<f64>,
    /// (flat table index, gradient) pairs.
    pub table: Vec<(u32, f64)>,
}

impl GradSink {
    pub fn new(layout: &ParamLayout) -> Self {
        Self {
            mlp: vec![0.0; layout.mlp_param_count()],
            table: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.mlp.iter_mut().for_each(|v| *v = 0.0);
        self.table.clear();
    }

    /// Adds this sink into a dense full-layout gradient buffer.
    pub fn accumulate_into(&self, layout: &ParamLayout, dense: &mut [f64]) {
        let base = layout.table.end;
        for (i, g) in self.mlp.iter().enumerate() {
            dense[base + i] += g;
        }
        for &(i, g) in &self.table {
            dense[i as usize] += g;
        }
    }
}

/// Exact reverse-mode gradients for one evaluated sample given
/// d(loss)/d(sigma) and d(loss)/d(rgb).
#[allow(clippy::too_many_arguments)]
pub fn field_backward(
    cfg: &FieldConfig,
    layout: &ParamLayout,
    params: &[f64],
    cache: &EvalCache,
    d_sigma: f64,
    d_rgb: [f64; 3],
    sink: &mut GradSink,
    scratch: &mut BackwardScratch,
) {
    let base = layout.table.end;
    let m = |r: &Range<usize>| r.start - base..r.end - base;
    let (h, dout) = (cfg.hidden, cfg.density_out);

    // Sigmoid output.
    let mut d_c3 = [0.0f64; 3];
    for k in 0..3 {
        d_c3[k] = d_rgb[k] * cache.rgb[k] * (1.0 - cache.rgb[k]);
    }

    scratch.d_c2.resize(h, 0.0);
    {
        let (mlp, d_c2) = (&mut sink.mlp, &mut scratch.d_c2);
        let (dw, rest) = split_two(mlp, m(&layout.c_w3), m(&layout.c_b3));
        linear_backward(&params[layout.c_w3.clone()], &cache.c2, &d_c3, dw, rest, d_c2);
    }
    for (g, a) in scratch.d_c2.iter_mut().zip(&cache.c2) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }

    scratch.d_c1.resize(h, 0.0);
    {
        let (dw, db) = split_two(&mut sink.mlp, m(&layout.c_w2), m(&layout.c_b2));
        linear_backward(
            &params[layout.c_w2.clone()],
            &cache.c1,
            &scratch.d_c2,
            dw,
            db,
            &mut scratch.d_c1,
        );
    }
    for (g, a) in scratch.d_c1.iter_mut().zip(&cache.c1) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }

    scratch.d_color_in.resize(cfg.color_in(), 0.0);
    {
        let (dw, db) = split_two(&mut sink.mlp, m(&layout.c_w1), m(&layout.c_b1));
        linear_backward(
            &params[layout.c_w1.clone()],
            &cache.color_in,
            &scratch.d_c1,
            dw,
            db,
            &mut scratch.d_color_in,
        );
    }

    // Density head: the color path feeds back into all density outputs, and
    // the exp-density gradient adds to channel 0 (zero beyond the clamp).
    scratch.d_dens_out.clear();
    scratch
        .d_dens_out
        .extend_from_slice(&scratch.d_color_in[..dout]);
    if cache.dens_out[0] < RAW_DENSITY_CLAMP {
        scratch.d_dens_out[0] += d_sigma * cache.sigma;
    }

    scratch.d_h1.resize(h, 0.0);
    {
        let (dw, db) = split_two(&mut sink.mlp, m(&layout.d_w2), m(&layout.d_b2));
        linear_backward(
            &params[layout.d_w2.clone()],
            &cache.h1,
            &scratch.d_dens_out,
            dw,
            db,
            &mut scratch.d_h1,
        );
    }
    for (g, a) in scratch.d_h1.iter_mut().zip(&cache.h1) {
        if *a <= 0.0 {
            *g = 0.0;
        }
    }

    scratch.d_feat.resize(cfg.grid_feat(), 0.0);
    {
        let (dw, db) = split_two(&mut sink.mlp, m(&layout.d_w1), m(&layout.d_b1));
        linear_backward(
            &params[layout.d_w1.clone()],
            &cache.feat,
            &scratch.d_h1,
            dw,
            db,
            &mut scratch.d_feat,
        );
    }

    grid_backward(&cfg.grid, &cache.grid, &scratch.d_feat, &mut sink.table);
}

/// Intermediate gradient buffers reused across samples.
#[derive(Clone, Debug, Default)]
pub struct BackwardScratch {
    d_c2: Vec<f64>,
    d_c1: Vec<f64>,
    d_color_in: Vec<f64>,
    d_dens_out: Vec<f64>,
    d_h1: Vec<f64>,
    d_feat: Vec<f64>,
}

/// Two disjoint mutable subslices of one buffer.
fn split_two<'a>(
    buf: &'a mut [f64],
    a: Range<usize>,
    b: Range<usize>,
) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (left, right) = buf.split_at_mut(b.start);
    (&mut left[a], &mut right[..b.end - b.start])
}
