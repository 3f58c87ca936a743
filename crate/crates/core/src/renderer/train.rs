//! Training orchestration: dynamic ray batches against a fixed point-sample
//! budget, chunked forward/backward with a deterministic reduction order,
//! the TV regularizer over leaf faces, and full-image rendering.
//!
//! Gradient work is split into a fixed number of chunks regardless of the
//! thread count, and the chunk buffers are merged in index order, so results
//! are bit-identical for any `--threads` setting.

use nalgebra::Vector3;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{
    field_backward, field_eval, grid_backward, grid_lookup, sh_encode, BackwardScratch,
    EvalCache, FieldConfig, GradSink, GridCache, ParamLayout,
};
use crate::field::hash::splitmix64;
use crate::geometry::{Camera, Ray};
use crate::image_buf::ImageBuf;
use crate::model::SpaceModel;
use crate::renderer::adam::{learning_rate, AdamState};
use crate::renderer::{
    composite_backward_sigma, composite_into, recon_loss, recon_loss_grad, CompositeSample,
    Composited, LossWeights,
};
use crate::sampling::{march_ray_mode, SampleMode, SamplePoint};
use crate::scenes::Dataset;
use crate::subdivision::FacePair;

/// Fixed gradient-chunk count; independent of the worker thread count so
/// floating-point reduction order never changes.
const GRAD_CHUNKS: usize = 32;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    /// Point-sample budget per step; the ray batch is dynamic.
    pub point_batch: usize,
    pub lr_peak: f64,
    pub lr_warmup_steps: usize,
    pub lr_final: f64,
    /// Border points for the TV loss per step.
    pub tv_points: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub sample_mode: SampleMode,
    /// Target warp-space spacing between samples.
    pub sample_interval: f64,
    pub max_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            point_batch: 262_144,
            lr_peak: 1e-1,
            lr_warmup_steps: 1000,
            lr_final: 1e-2,
            tv_points: 8192,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_eps: 1e-15,
            seed: 0,
            sample_mode: SampleMode::Perspective,
            sample_interval: 3f64.sqrt(),
            max_samples: 1024,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepStats {
    pub step: usize,
    pub recon: f64,
    pub disp: f64,
    pub tv: f64,
    pub lr: f64,
    pub rays: usize,
    pub points: usize,
}

/// Loss history with window means, for the smoothed-loss checks and the CSV.
#[derive(Clone, Debug, Default)]
pub struct RunningLoss {
    pub history: Vec<StepStats>,
}

impl RunningLoss {
    pub fn push(&mut self, s: StepStats) {
        self.history.push(s);
    }

    /// Mean recon loss over the `window` steps ending at `end` (1-based).
    pub fn smoothed_recon(&self, end: usize, window: usize) -> f64 {
        let hi = end.min(self.history.len());
        let lo = hi.saturating_sub(window);
        let slice = &self.history[lo..hi];
        slice.iter().map(|s| s.recon).sum::<f64>() / slice.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,recon,disp,tv,lr\n");
        for s in &self.history {
            out.push_str(&format!(
                "{},{:.12e},{:.12e},{:.12e},{:.12e}\n",
                s.step, s.recon, s.disp, s.tv, s.lr
            ));
        }
        out
    }
}

struct FaceTable {
    faces: Vec<FacePair>,
    cum_area: Vec<f64>,
    total_area: f64,
}

impl FaceTable {
    fn build(model: &SpaceModel) -> Self {
        let faces = model.tree.leaf_face_pairs();
        let mut cum_area = Vec::with_capacity(faces.len());
        let mut total = 0.0;
        for f in &faces {
            total += f.area();
            cum_area.push(total);
        }
        Self {
            faces,
            cum_area,
            total_area: total,
        }
    }
}

pub struct TrainState {
    pub model: SpaceModel,
    pub field_cfg: FieldConfig,
    pub layout: ParamLayout,
    pub params: Vec<f64>,
    pub adam: AdamState,
    pub step: usize,
    faces: FaceTable,
    rng: StdRng,
    grad: Vec<f64>,
}

struct RayJob {
    ray: Ray,
    gt: [f64; 3],
    samples: Vec<SamplePoint>,
}

#[derive(Default)]
struct ChunkOut {
    sink: Option<GradSink>,
    recon_sum: f64,
    disp_sum: f64,
}

struct TvPoint {
    x: Vector3<f64>,
    leaf_a: usize,
    leaf_b: usize,
}

impl TrainState {
    pub fn new(model: SpaceModel, field_cfg: FieldConfig, seed: u64) -> Self {
        let layout = field_cfg.layout();
        let params = crate::field::init_params(&field_cfg, seed);
        let adam = AdamState::new(layout.total);
        let faces = FaceTable::build(&model);
        let grad = vec![0.0; layout.total];
        Self {
            model,
            field_cfg,
            layout,
            params,
            adam,
            step: 0,
            faces,
            rng: StdRng::seed_from_u64(splitmix64(seed ^ 0x7261795f62756e63)),
            grad,
        }
    }

    /// One optimizer step: draw random training pixels until the marched
    /// point count reaches the budget, run forward/loss/backward, apply Adam
    /// with the warmup-cosine schedule.
    pub fn train_step(
        &mut self,
        data: &Dataset,
        cfg: &TrainConfig,
        weights: &LossWeights,
    ) -> Result<StepStats> {
        let (train_ids, _) = data.split();
        if train_ids.is_empty() {
            return Err(Error::InvalidArgument("dataset has no training views".into()));
        }

        // Phase 1: assemble the dynamic ray batch.
        let mut jobs: Vec<RayJob> = Vec::new();
        let mut points = 0usize;
        let max_draws = 4 * cfg.point_batch + 4096;
        let mut draws = 0usize;
        while points < cfg.point_batch && draws < max_draws {
            // Small probe wave first; later waves sized from the points/ray
            // estimate so the budget is not badly overshot.
            let wave = if jobs.is_empty() {
                8
            } else {
                let avg = (points as f64 / jobs.len() as f64).max(1.0);
                (((cfg.point_batch - points) as f64 / avg).ceil() as usize).clamp(1, 256)
            };
            let picks: Vec<(usize, u32, u32)> = (0..wave)
                .map(|_| {
                    let img = train_ids[self.rng.gen_range(0..train_ids.len())];
                    let cam = &data.cameras[img];
                    (
                        img,
                        self.rng.gen_range(0..cam.width),
                        self.rng.gen_range(0..cam.height),
                    )
                })
                .collect();
            draws += wave;
            let mut marched: Vec<RayJob> = picks
                .par_iter()
                .map(|&(img, u, v)| {
                    let cam = &data.cameras[img];
                    let ray = cam.generate_ray(u, v);
                    let samples = march_ray_mode(
                        &ray,
                        &self.model.tree,
                        &self.model.warps,
                        cfg.sample_mode,
                        cfg.sample_interval,
                        cam.near,
                        cfg.max_samples,
                    );
                    RayJob {
                        ray,
                        gt: data.images[img].pixel(u, v),
                        samples,
                    }
                })
                .collect();
            for job in &marched {
                points += job.samples.len();
            }
            jobs.append(&mut marched);
        }
        let n_r = jobs.len();

        // Phase 2: chunked forward/backward, fixed chunk structure.
        let ranges = chunk_ranges(n_r, GRAD_CHUNKS);
        let outs: Vec<ChunkOut> = ranges
            .par_iter()
            .map(|r| self.process_ray_chunk(&jobs[r.clone()], n_r, cfg, weights))
            .collect();

        // Phase 3: TV loss over leaf borders.
        let tv_points = self.draw_tv_points(cfg.tv_points);
        let tv_ranges = chunk_ranges(tv_points.len(), GRAD_CHUNKS);
        let tv_scale = if cfg.tv_points > 0 {
            weights.lambda_tv / cfg.tv_points as f64
        } else {
            0.0
        };
        let tv_outs: Vec<(Option<GradSink>, f64)> = tv_ranges
            .par_iter()
            .map(|r| self.process_tv_chunk(&tv_points[r.clone()], tv_scale))
            .collect();

        // Phase 4: deterministic merge, then the optimizer barrier.
        self.grad.iter_mut().for_each(|g| *g = 0.0);
        let mut recon_sum = 0.0;
        let mut disp_sum = 0.0;
        for out in &outs {
            if let Some(sink) = &out.sink {
                sink.accumulate_into(&self.layout, &mut self.grad);
            }
            recon_sum += out.recon_sum;
            disp_sum += out.disp_sum;
        }
        let mut tv_sum = 0.0;
        for (sink, s) in &tv_outs {
            if let Some(sink) = sink {
                sink.accumulate_into(&self.layout, &mut self.grad);
            }
            tv_sum += s;
        }

        let recon = recon_sum / n_r.max(1) as f64;
        let disp = disp_sum / n_r.max(1) as f64;
        let tv = if cfg.tv_points > 0 {
            tv_sum / cfg.tv_points as f64
        } else {
            0.0
        };
        let total = recon + weights.lambda_disp * disp + weights.lambda_tv * tv;
        if !total.is_finite() {
            return Err(Error::NonFiniteLoss { step: self.step });
        }

        let lr = learning_rate(
            self.step + 1,
            cfg.lr_warmup_steps,
            cfg.steps,
            cfg.lr_peak,
            cfg.lr_final,
        );
        self.adam.update(
            &mut self.params,
            &self.grad,
            lr,
            cfg.adam_beta1,
            cfg.adam_beta2,
            cfg.adam_eps,
        );
        self.step += 1;
        Ok(StepStats {
            step: self.step,
            recon,
            disp,
            tv,
            lr,
            rays: n_r,
            points,
        })
    }

    fn process_ray_chunk(
        &self,
        jobs: &[RayJob],
        n_r: usize,
        _cfg: &TrainConfig,
        weights: &LossWeights,
    ) -> ChunkOut {
        if jobs.is_empty() {
            return ChunkOut::default();
        }
        let mut sink = GradSink::new(&self.layout);
        let mut scratch = BackwardScratch::default();
        let mut caches: Vec<EvalCache> = Vec::new();
        let mut csamples: Vec<CompositeSample> = Vec::new();
        let mut comp = Composited::default();
        let mut g: Vec<f64> = Vec::new();
        let mut d_sigma: Vec<f64> = Vec::new();
        let mut recon_sum = 0.0;
        let mut disp_sum = 0.0;

        for job in jobs {
            let n = job.samples.len();
            while caches.len() < n {
                caches.push(EvalCache::default());
            }
            let sh = sh_encode(&job.ray.direction);
            csamples.clear();
            for (i, sp) in job.samples.iter().enumerate() {
                let node = &self.model.tree.nodes[sp.leaf];
                let hp = &self.model.hash_params[node.hash_id.expect("sampled leaf has hash")];
                let bbox = self.model.warps[node.warp_id.expect("sampled leaf has warp")].bbox();
                let out = field_eval(
                    &self.field_cfg,
                    &self.layout,
                    &self.params,
                    hp,
                    &sp.z,
                    bbox,
                    &sh,
                    &mut caches[i],
                );
                csamples.push(CompositeSample {
                    sigma: out.sigma,
                    dt: sp.dt,
                    rgb: out.rgb,
                });
            }
            comp = composite_into(&csamples, comp);
            recon_sum += recon_loss(&comp.color, &job.gt, weights.eps);
            let disp: f64 = comp
                .weights
                .iter()
                .zip(&job.samples)
                .map(|(w, sp)| w / sp.t)
                .sum();
            disp_sum += disp * disp;

            // Seeds: dL/d(color) from recon, dL/dw_i from color + disparity.
            let mut d_color = recon_loss_grad(&comp.color, &job.gt, weights.eps);
            for c in d_color.iter_mut() {
                *c /= n_r as f64;
            }
            let disp_coeff = 2.0 * disp * weights.lambda_disp / n_r as f64;
            g.clear();
            for (i, sp) in job.samples.iter().enumerate() {
                let color_term: f64 = (0..3).map(|c| d_color[c] * csamples[i].rgb[c]).sum();
                g.push(color_term + disp_coeff / sp.t);
            }
            composite_backward_sigma(&comp, &csamples, &g, &mut d_sigma);
            for i in 0..n {
                let w = comp.weights[i];
                let d_rgb = [w * d_color[0], w * d_color[1], w * d_color[2]];
                field_backward(
                    &self.field_cfg,
                    &self.layout,
                    &self.params,
                    &caches[i],
                    d_sigma[i],
                    d_rgb,
                    &mut sink,
                    &mut scratch,
                );
            }
        }
        ChunkOut {
            sink: Some(sink),
            recon_sum,
            disp_sum,
        }
    }

    /// Area-weighted sample points on shared leaf faces.
    fn draw_tv_points(&mut self, n_b: usize) -> Vec<TvPoint> {
        if self.faces.faces.is_empty() || self.faces.total_area <= 0.0 {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(n_b);
        for _ in 0..n_b {
            let r = self.rng.gen_range(0.0..self.faces.total_area);
            let idx = self.faces.cum_area.partition_point(|&c| c < r);
            let face = &self.faces.faces[idx.min(self.faces.faces.len() - 1)];
            let mut x = Vector3::zeros();
            for k in 0..3 {
                let (lo, hi) = (face.face.min[k], face.face.max[k]);
                x[k] = if hi > lo {
                    self.rng.gen_range(lo..hi)
                } else {
                    lo
                };
            }
            out.push(TvPoint {
                x,
                leaf_a: face.leaf_a,
                leaf_b: face.leaf_b,
            });
        }
        out
    }

    /// Squared feature difference across the face, fetched through each
    /// side's own warp and hash function; gradients go to the table only.
    fn process_tv_chunk(&self, pts: &[TvPoint], grad_scale: f64) -> (Option<GradSink>, f64) {
        if pts.is_empty() {
            return (None, 0.0);
        }
        let mut sink = GradSink::new(&self.layout);
        let table = &self.params[self.layout.table.clone()];
        let dim = self.field_cfg.grid_feat();
        let mut fa = vec![0.0f64; dim];
        let mut fb = vec![0.0f64; dim];
        let mut da = vec![0.0f64; dim];
        let mut cache_a = GridCache::default();
        let mut cache_b = GridCache::default();
        let mut sum = 0.0;
        for p in pts {
            let node_a = &self.model.tree.nodes[p.leaf_a];
            let node_b = &self.model.tree.nodes[p.leaf_b];
            let (Some(wa), Some(wb)) = (node_a.warp_id, node_b.warp_id) else {
                continue;
            };
            let (Ok(za), Ok(zb)) = (
                self.model.warps[wa].point(&p.x),
                self.model.warps[wb].point(&p.x),
            ) else {
                continue; // border point invisible to one side's cameras
            };
            fa.iter_mut().for_each(|v| *v = 0.0);
            fb.iter_mut().for_each(|v| *v = 0.0);
            let hp_a = &self.model.hash_params[node_a.hash_id.unwrap()];
            let hp_b = &self.model.hash_params[node_b.hash_id.unwrap()];
            grid_lookup(
                &self.field_cfg.grid,
                table,
                hp_a,
                &za,
                self.model.warps[wa].bbox(),
                &mut fa,
                Some(&mut cache_a),
            );
            grid_lookup(
                &self.field_cfg.grid,
                table,
                hp_b,
                &zb,
                self.model.warps[wb].bbox(),
                &mut fb,
                Some(&mut cache_b),
            );
            let mut norm2 = 0.0;
            for k in 0..dim {
                let d = fa[k] - fb[k];
                da[k] = 2.0 * grad_scale * d;
                norm2 += d * d;
            }
            sum += norm2;
            if grad_scale != 0.0 {
                grid_backward(&self.field_cfg.grid, &cache_a, &da, &mut sink.table);
                da.iter_mut().for_each(|v| *v = -*v);
                grid_backward(&self.field_cfg.grid, &cache_b, &da, &mut sink.table);
            }
        }
        (Some(sink), sum)
    }

    /// TV loss value alone (no gradients), for diagnostics and tests.
    pub fn tv_loss(&mut self, n_b: usize) -> f64 {
        let pts = self.draw_tv_points(n_b);
        if pts.is_empty() {
            return 0.0;
        }
        let (_, sum) = self.process_tv_chunk(&pts, 0.0);
        sum / n_b as f64
    }

    pub fn render(&self, cam: &Camera, cfg: &TrainConfig) -> ImageBuf {
        render_image(
            &self.model,
            &self.field_cfg,
            &self.layout,
            &self.params,
            cam,
            cfg,
        )
    }
}


fn chunk_ranges(n: usize, chunks: usize) -> Vec<std::ops::Range<usize>> {
    let per = n.div_ceil(chunks.max(1)).max(1);
    (0..chunks)
        .map(|i| {
            let lo = (i * per).min(n);
            let hi = ((i + 1) * per).min(n);
            lo..hi
        })
        .collect()
}

/// Deterministic full-image render: march, evaluate, composite per pixel.
pub fn render_image(
    model: &SpaceModel,
    field_cfg: &FieldConfig,
    layout: &ParamLayout,
    params: &[f64],
    cam: &Camera,
    cfg: &TrainConfig,
) -> ImageBuf {
    let mut img = ImageBuf::new(cam.width, cam.height);
    let width = cam.width;
    img.data
        .par_chunks_mut((width * 3) as usize)
        .enumerate()
        .for_each(|(y, row)| {
            let mut cache = EvalCache::default();
            let mut csamples: Vec<CompositeSample> = Vec::new();
            let mut comp = Composited::default();
            for x in 0..width {
                let ray = cam.generate_ray(x, y as u32);
                let samples = march_ray_mode(
                    &ray,
                    &model.tree,
                    &model.warps,
                    cfg.sample_mode,
                    cfg.sample_interval,
                    cam.near,
                    cfg.max_samples,
                );
                let sh = sh_encode(&ray.direction);
                csamples.clear();
                for sp in &samples {
                    let node = &model.tree.nodes[sp.leaf];
                    let hp = &model.hash_params[node.hash_id.expect("warped leaf")];
                    let bbox = model.warps[node.warp_id.expect("warped leaf")].bbox();
                    let out =
                        field_eval(field_cfg, layout, params, hp, &sp.z, bbox, &sh, &mut cache);
                    csamples.push(CompositeSample {
                        sigma: out.sigma,
                        dt: sp.dt,
                        rgb: out.rgb,
                    });
                }
                comp = composite_into(&csamples, comp);
                let i = (x * 3) as usize;
                row[i..i + 3].copy_from_slice(&comp.color);
            }
        });
    img
}
