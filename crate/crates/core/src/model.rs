//! Assembly of the spatial model: build the octree from cameras, construct a
//! warp per visible leaf (in parallel), and assign per-leaf hash parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::NodeHashParams;
use crate::geometry::{rectify_cameras, Camera};
use crate::subdivision::{build_octree, Octree};
use crate::warp::{construct_warp, Warp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WarpMode {
    Perspective,
    /// Ablation: identity warp over the root box for every visible leaf.
    None,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceConfig {
    /// Subdivide while a visible camera is within lambda times the node side.
    pub lambda: f64,
    /// Cameras selected per leaf.
    pub n_c: usize,
    pub max_depth: u32,
    /// Lattice resolution per axis for warp construction.
    pub lattice: usize,
    pub warp_mode: WarpMode,
    /// Seed for per-leaf hash parameters.
    pub seed: u64,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self {
            lambda: 3.0,
            n_c: 4,
            max_depth: 12,
            lattice: 32,
            warp_mode: WarpMode::Perspective,
            seed: 0,
        }
    }
}

/// The octree plus per-leaf warps and hash parameters; `warp_id` and
/// `hash_id` of a leaf index the two tables (one slot per warped leaf).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpaceModel {
    pub tree: Octree,
    pub warps: Vec<Warp>,
    pub hash_params: Vec<NodeHashParams>,
}

impl SpaceModel {
    /// Builds the tree and constructs one warp per leaf with visible
    /// cameras: the leaf's selected cameras are rectified toward the leaf
    /// center and drive a PCA warp (or the single-camera fallback). Leaves
    /// whose warp construction degenerates are demoted to unrepresentable
    /// (skipped by marching); the build fails only if no leaf is warpable.
    pub fn build(cams: &[Camera], cfg: &SpaceConfig) -> Result<Self> {
        let mut tree = build_octree(cams, cfg.lambda, cfg.n_c, cfg.max_depth)?;
        let root_bbox = tree.root_aabb();

        let candidates: Vec<usize> = tree
            .leaf_ids()
            .into_iter()
            .filter(|&id| !tree.nodes[id].visible_cams.is_empty())
            .collect();

        let built: Vec<(usize, Result<Warp>)> = candidates
            .par_iter()
            .map(|&id| {
                let node = &tree.nodes[id];
                let warp = match cfg.warp_mode {
                    WarpMode::None => Ok(Warp::Identity {
                        bbox: root_bbox.clone(),
                    }),
                    WarpMode::Perspective => {
                        let selected: Vec<Camera> = node
                            .selected_cams
                            .iter()
                            .map(|&i| cams[i].clone())
                            .collect();
                        rectify_cameras(&selected, &node.center)
                            .and_then(|rect| construct_warp(&node.aabb(), &rect, cfg.lattice))
                            .map_err(|e| Error::WarpConstruction {
                                node: id,
                                source: Box::new(e),
                            })
                    }
                };
                (id, warp)
            })
            .collect();

        let mut warps = Vec::new();
        let mut hash_params = Vec::new();
        let mut demoted = 0usize;
        for (id, warp) in built {
            match warp {
                Ok(w) => {
                    let slot = warps.len();
                    tree.nodes[id].warp_id = Some(slot);
                    tree.nodes[id].hash_id = Some(slot);
                    warps.push(w);
                    hash_params.push(NodeHashParams::generate(cfg.seed, id as u64, slot as u32));
                }
                Err(_) => demoted += 1,
            }
        }
        if warps.is_empty() {
            return Err(Error::DegenerateRegion(format!(
                "no leaf produced a usable warp ({demoted} demoted)"
            )));
        }
        Ok(Self {
            tree,
            warps,
            hash_params,
        })
    }

    pub fn warped_leaf_count(&self) -> usize {
        self.warps.len()
    }
}
