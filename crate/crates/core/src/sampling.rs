//! Warp-adaptive ray marching: step sizes are inversely proportional to
//! ||J d|| so consecutive samples are spaced about `l` apart in warp space.
//! Exponential and uniform step modes back the sampling ablation.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::Ray;
use crate::subdivision::{NodeId, Octree};
use crate::warp::Warp;

/// Default sampling interval: the diagonal of the unit cube in warp space.
pub const DEFAULT_SAMPLE_INTERVAL: f64 = 1.732050807568877_f64; // sqrt(3)
pub const DEFAULT_MAX_SAMPLES: usize = 1024;
/// Step clamp as fractions of the current leaf side.
const STEP_MIN_FRACTION: f64 = 1e-4;
/// Forward creep when a warp cannot evaluate at a point inside its leaf.
const INVALID_CREEP_FRACTION: f64 = 0.05;
/// Exponential mode: first step as a fraction of the root side, and growth.
const EXP_BASE_FRACTION: f64 = 1e-4;
const EXP_GROWTH: f64 = 1.05;
const EXP_MAX_FRACTION: f64 = 1.0 / 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMode {
    /// Step l / ||J d||: uniform spacing in warp space.
    Perspective,
    /// Steps growing by 5% per sample.
    Exp,
    /// Constant step covering the root box within the sample budget.
    Uniform,
}

/// One marched sample along a ray.
#[derive(Clone, Debug)]
pub struct SamplePoint {
    pub x: Vector3<f64>,
    /// Distance along the ray, world units.
    pub t: f64,
    /// Interval to the next sample.
    pub dt: f64,
    pub leaf: NodeId,
    /// Warped position, the field lookup coordinate.
    pub z: Vector3<f64>,
}

/// Perspective marching with the paper's step rule.
pub fn march_ray(
    ray: &Ray,
    tree: &Octree,
    warps: &[Warp],
    l: f64,
    t_min: f64,
    max_samples: usize,
) -> Vec<SamplePoint> {
    march_ray_mode(ray, tree, warps, SampleMode::Perspective, l, t_min, max_samples)
}

pub fn march_ray_mode(
    ray: &Ray,
    tree: &Octree,
    warps: &[Warp],
    mode: SampleMode,
    l: f64,
    t_min: f64,
    max_samples: usize,
) -> Vec<SamplePoint> {
    debug_assert!(l > 0.0);
    let mut out = Vec::new();
    let root = tree.root_aabb();
    let Some((t_in, t_out)) = root.intersect_ray(ray) else {
        return out;
    };
    let mut t = t_min.max(t_in);
    let uniform_dt = tree.root_side * 3f64.sqrt() / max_samples as f64;
    let mut exp_dt = EXP_BASE_FRACTION * tree.root_side;
    let exp_max = EXP_MAX_FRACTION * tree.root_side;

    let mut iters = 0usize;
    let iter_cap = 16 * max_samples + 64;
    while t < t_out && out.len() < max_samples && iters < iter_cap {
        iters += 1;
        let x = ray.at(t);
        let Some(leaf) = tree.locate_leaf(&x) else {
            break; // numeric edge at the root boundary
        };
        let node = &tree.nodes[leaf];
        let Some(warp_id) = node.warp_id else {
            // Unrepresentable leaf: skip past it without emitting samples.
            let exit = node
                .aabb()
                .intersect_ray(ray)
                .map(|(_, t1)| t1)
                .unwrap_or(t);
            t = exit.max(t) + 1e-6;
            continue;
        };
        let warp = &warps[warp_id];
        let step = match mode {
            SampleMode::Perspective => match warp.point_and_jacobian(&x) {
                Ok((z, jac)) => {
                    let rate = (jac * ray.direction).norm();
                    let dt = if rate > 0.0 { l / rate } else { f64::INFINITY };
                    let dt = dt.clamp(STEP_MIN_FRACTION * node.side, node.side);
                    Some((z, dt))
                }
                Err(_) => None,
            },
            SampleMode::Exp => match warp.point(&x) {
                Ok(z) => {
                    let dt = exp_dt;
                    exp_dt = (exp_dt * EXP_GROWTH).min(exp_max);
                    Some((z, dt))
                }
                Err(_) => None,
            },
            SampleMode::Uniform => match warp.point(&x) {
                Ok(z) => Some((z, uniform_dt)),
                Err(_) => None,
            },
        };
        match step {
            Some((z, dt)) => {
                out.push(SamplePoint { x, t, dt, leaf, z });
                t += dt;
            }
            None => {
                // Point invisible to the leaf's own cameras (possible only in
                // max-depth leaves that contain cameras); creep forward.
                t += (INVALID_CREEP_FRACTION * node.side).max(1e-6);
            }
        }
    }
    out
}
