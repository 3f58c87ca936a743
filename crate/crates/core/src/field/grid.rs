//! Multiresolution hash grid: per level, warp coordinates are scaled to the
//! level resolution, the eight surrounding vertices are hashed into the
//! feature table, and the features are trilinearly blended. Level outputs
//! are concatenated.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::field::hash::NodeHashParams;
use crate::geometry::Aabb;

/// Normalized coordinates are squeezed into [MARGIN, 1 - MARGIN] so that
/// bbox-boundary samples stay strictly inside the grid.
const MARGIN: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HashMode {
    /// One shared table per level; leaves differ only by hash function.
    Single,
    /// Each level's table split into equal contiguous slabs, one per leaf.
    PerNode { slots: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HashGridConfig {
    pub levels: usize,
    /// Feature rows per level (L).
    pub table_len: usize,
    pub feat_dim: usize,
    pub base_res: usize,
    pub max_res: usize,
    pub mode: HashMode,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self {
            levels: 16,
            table_len: 1 << 19,
            feat_dim: 2,
            base_res: 16,
            max_res: 2048,
            mode: HashMode::Single,
        }
    }
}

impl HashGridConfig {
    pub fn output_dim(&self) -> usize {
        self.levels * self.feat_dim
    }

    pub fn param_count(&self) -> usize {
        self.levels * self.table_len * self.feat_dim
    }

    /// Geometric resolution ladder from base_res to max_res.
    pub fn level_res(&self, level: usize) -> usize {
        (self.base_res as f64 * self.growth().powi(level as i32)).round() as usize
    }

    fn growth(&self) -> f64 {
        if self.levels == 1 {
            return 1.0;
        }
        ((self.max_res as f64 / self.base_res as f64).ln() / (self.levels - 1) as f64).exp()
    }

    /// (effective table length, slab offset) for a leaf slot.
    fn slab(&self, slot: u32) -> (usize, usize) {
        match self.mode {
            HashMode::Single => (self.table_len, 0),
            HashMode::PerNode { slots } => {
                let len = (self.table_len / slots.max(1)).max(1);
                (len, len * slot as usize)
            }
        }
    }
}

/// Per-level interpolation footprint kept for the backward pass:
/// eight (within-level row index, trilinear weight) pairs.
#[derive(Clone, Debug, Default)]
pub struct GridCache {
    pub levels: Vec<[(u32, f64); 8]>,
}

/// Interpolated features at warp point `z`, normalized by `bbox`; output is
/// `levels * feat_dim` values, level-major. Coordinates outside the bbox are
/// clamped.
pub fn grid_lookup(
    cfg: &HashGridConfig,
    table: &[f64],
    hp: &NodeHashParams,
    z: &Vector3<f64>,
    bbox: &Aabb,
    out: &mut [f64],
    mut cache: Option<&mut GridCache>,
) {
    debug_assert_eq!(out.len(), cfg.output_dim());
    debug_assert_eq!(table.len(), cfg.param_count());
    let mut u = [0.0f64; 3];
    for k in 0..3 {
        let extent = (bbox.max[k] - bbox.min[k]).max(1e-9);
        let raw = ((z[k] - bbox.min[k]) / extent).clamp(0.0, 1.0);
        u[k] = MARGIN + raw * (1.0 - 2.0 * MARGIN);
    }
    if let Some(c) = cache.as_deref_mut() {
        c.levels.clear();
    }
    let (eff_len, offset) = cfg.slab(hp.slot);
    // One transcendental per call; per-level resolutions match level_res().
    let growth = cfg.growth();
    for level in 0..cfg.levels {
        let res = (cfg.base_res as f64 * growth.powi(level as i32)).round() as usize;
        let mut base = [0u64; 3];
        let mut wlo = [0.0f64; 3];
        let mut whi = [0.0f64; 3];
        for k in 0..3 {
            let pos = u[k] * res as f64;
            let i = (pos.floor() as i64).clamp(0, res as i64 - 1) as u64;
            base[k] = i;
            whi[k] = pos - i as f64;
            wlo[k] = 1.0 - whi[k];
        }
        let mut entry = [(0u32, 0.0f64); 8];
        let level_base = level * cfg.table_len;
        let f = cfg.feat_dim;
        for (corner, e) in entry.iter_mut().enumerate() {
            let (cx, cy, cz) = (corner & 1, (corner >> 1) & 1, (corner >> 2) & 1);
            let v = [base[0] + cx as u64, base[1] + cy as u64, base[2] + cz as u64];
            let weight = (if cx == 1 { whi[0] } else { wlo[0] })
                * (if cy == 1 { whi[1] } else { wlo[1] })
                * (if cz == 1 { whi[2] } else { wlo[2] });
            let idx = hp.hash_vertex(v, eff_len) + offset;
            *e = (idx as u32, weight);
            let row = (level_base + idx) * f;
            for d in 0..f {
                out[level * f + d] += weight * table[row + d];
            }
        }
        if let Some(c) = cache.as_deref_mut() {
            c.levels.push(entry);
        }
    }
}

/// Scatter d(loss)/d(output) into table-entry gradients as
/// (flat table index, value) pairs.
pub fn grid_backward(
    cfg: &HashGridConfig,
    cache: &GridCache,
    d_out: &[f64],
    sink: &mut Vec<(u32, f64)>,
) {
    let f = cfg.feat_dim;
    for (level, entry) in cache.levels.iter().enumerate() {
        let level_base = level * cfg.table_len;
        for &(idx, weight) in entry {
            if weight == 0.0 {
                continue;
            }
            let row = (level_base + idx as usize) * f;
            for d in 0..f {
                let g = weight * d_out[level * f + d];
                if g != 0.0 {
                    sink.push((u32::try_from(row + d).expect("table fits u32"), g));
                }
            }
        }
    }
}
