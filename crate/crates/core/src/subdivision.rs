//! Frustum-driven octree subdivision of the scene, leaf lookup for query
//! points, and shared-face enumeration between neighboring leaves.
//!
//! Nodes carry integer cell coordinates so sibling boxes tile their parent
//! exactly and face adjacency is decided without floating-point slop.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{frustum_intersects_aabb, select_cameras, Aabb, Camera};

pub type NodeId = usize;

/// One octree cell. Children are stored in octant order: bit 0 set means the
/// +x half, bit 1 the +y half, bit 2 the +z half.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OctreeNode {
    /// Integer cell coordinates at this node's depth (cell size = root_side / 2^depth).
    pub coords: [u32; 3],
    pub depth: u32,
    pub center: Vector3<f64>,
    pub side: f64,
    pub children: Option<[NodeId; 8]>,
    /// Indices into the global camera list whose frustums intersect this node.
    pub visible_cams: Vec<usize>,
    /// Subset chosen by farthest-point selection, at most `n_c` entries.
    pub selected_cams: Vec<usize>,
    pub warp_id: Option<usize>,
    pub hash_id: Option<usize>,
}

impl OctreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn aabb(&self) -> Aabb {
        let h = self.side * 0.5;
        Aabb::new(
            self.center - Vector3::new(h, h, h),
            self.center + Vector3::new(h, h, h),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Octree {
    pub nodes: Vec<OctreeNode>,
    pub root: NodeId,
    pub lambda: f64,
    pub n_c: usize,
    pub max_depth: u32,
    pub root_center: Vector3<f64>,
    pub root_side: f64,
}

/// A shared 2D face between two leaves; the `face` box is degenerate along
/// exactly one axis.
#[derive(Clone, Debug)]
pub struct FacePair {
    pub leaf_a: NodeId,
    pub leaf_b: NodeId,
    pub face: Aabb,
}

impl FacePair {
    pub fn area(&self) -> f64 {
        let e = self.face.extents();
        let mut dims: Vec<f64> = (0..3).map(|k| e[k]).filter(|v| *v > 0.0).collect();
        while dims.len() < 2 {
            dims.push(0.0);
        }
        dims.iter().product()
    }
}

/// Builds the octree by the check-and-subdivide rule: the root is a cube of
/// side 512x the camera-center bounding box extent (floored at one world
/// unit), and a node splits while any visible camera center lies within
/// `lambda` times its side, up to `max_depth`.
pub fn build_octree(
    cams: &[Camera],
    lambda: f64,
    n_c: usize,
    max_depth: u32,
) -> Result<Octree> {
    if cams.is_empty() {
        return Err(Error::EmptyCameras);
    }
    let centers: Vec<Vector3<f64>> = cams.iter().map(|c| c.center).collect();
    let bbox = Aabb::from_points(&centers).unwrap();
    let extent = bbox.extents().max().max(1.0);
    let root_side = 512.0 * extent;
    let root_center = (bbox.min + bbox.max) * 0.5;
    let far = 8.0 * root_side;

    let mut tree = Octree {
        nodes: Vec::new(),
        root: 0,
        lambda,
        n_c,
        max_depth,
        root_center,
        root_side,
    };

    let all: Vec<usize> = (0..cams.len()).collect();
    build_node(&mut tree, cams, [0, 0, 0], 0, &all, far)?;
    Ok(tree)
}

fn node_center(tree: &Octree, coords: [u32; 3], depth: u32) -> Vector3<f64> {
    let cell = tree.root_side / (1u64 << depth) as f64;
    let min = tree.root_center - Vector3::repeat(tree.root_side * 0.5);
    Vector3::new(
        min.x + (coords[0] as f64 + 0.5) * cell,
        min.y + (coords[1] as f64 + 0.5) * cell,
        min.z + (coords[2] as f64 + 0.5) * cell,
    )
}

fn build_node(
    tree: &mut Octree,
    cams: &[Camera],
    coords: [u32; 3],
    depth: u32,
    candidate_cams: &[usize],
    far: f64,
) -> Result<NodeId> {
    let side = tree.root_side / (1u64 << depth) as f64;
    let center = node_center(tree, coords, depth);
    let aabb = Aabb::new(
        center - Vector3::repeat(side * 0.5),
        center + Vector3::repeat(side * 0.5),
    );
    // A child's box is inside its parent's, so only the parent's visible set
    // needs re-testing.
    let visible: Vec<usize> = candidate_cams
        .iter()
        .copied()
        .filter(|&i| frustum_intersects_aabb(&cams[i], &aabb, far))
        .collect();

    let subdivide = depth < tree.max_depth
        && visible
            .iter()
            .any(|&i| (cams[i].center - center).norm() <= tree.lambda * side);

    let id = tree.nodes.len();
    tree.nodes.push(OctreeNode {
        coords,
        depth,
        center,
        side,
        children: None,
        visible_cams: visible.clone(),
        selected_cams: Vec::new(),
        warp_id: None,
        hash_id: None,
    });

    if subdivide {
        let mut children = [0usize; 8];
        for (oct, child) in children.iter_mut().enumerate() {
            let ccoords = [
                coords[0] * 2 + (oct & 1) as u32,
                coords[1] * 2 + ((oct >> 1) & 1) as u32,
                coords[2] * 2 + ((oct >> 2) & 1) as u32,
            ];
            *child = build_node(tree, cams, ccoords, depth + 1, &visible, far)?;
        }
        tree.nodes[id].children = Some(children);
    } else if !visible.is_empty() {
        let subset: Vec<Camera> = visible.iter().map(|&i| cams[i].clone()).collect();
        let picked = select_cameras(&subset, tree.n_c)?;
        tree.nodes[id].selected_cams = picked.into_iter().map(|k| visible[k]).collect();
    }
    Ok(id)
}

impl Octree {
    pub fn root_aabb(&self) -> Aabb {
        let h = self.root_side * 0.5;
        Aabb::new(
            self.root_center - Vector3::repeat(h),
            self.root_center + Vector3::repeat(h),
        )
    }

    /// Descends to the unique leaf whose half-open box contains `x`;
    /// `None` when `x` falls outside the root cube.
    pub fn locate_leaf(&self, x: &Vector3<f64>) -> Option<NodeId> {
        if !self.root_aabb().contains_half_open(x) {
            return None;
        }
        let mut id = self.root;
        while let Some(children) = self.nodes[id].children {
            let c = self.nodes[id].center;
            let oct = (x.x >= c.x) as usize | ((x.y >= c.y) as usize) << 1 | ((x.z >= c.z) as usize) << 2;
            id = children[oct];
        }
        Some(id)
    }

    pub fn leaf_ids(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .filter(|&i| self.nodes[i].is_leaf())
            .collect()
    }

    /// All unordered pairs of warped leaves whose boxes share a face of
    /// positive area. The face is returned collapsed along its normal axis.
    pub fn leaf_face_pairs(&self) -> Vec<FacePair> {
        let leaves: Vec<NodeId> = self
            .leaf_ids()
            .into_iter()
            .filter(|&i| self.nodes[i].warp_id.is_some())
            .collect();
        let max_depth = leaves
            .iter()
            .map(|&i| self.nodes[i].depth)
            .max()
            .unwrap_or(0);
        // Integer bounds at the finest-present resolution: exact adjacency.
        let bounds: Vec<([u64; 3], [u64; 3])> = leaves
            .iter()
            .map(|&i| {
                let n = &self.nodes[i];
                let scale = 1u64 << (max_depth - n.depth);
                let lo = [
                    n.coords[0] as u64 * scale,
                    n.coords[1] as u64 * scale,
                    n.coords[2] as u64 * scale,
                ];
                let hi = [lo[0] + scale, lo[1] + scale, lo[2] + scale];
                (lo, hi)
            })
            .collect();
        let cell = self.root_side / (1u64 << max_depth) as f64;
        let root_min = self.root_center - Vector3::repeat(self.root_side * 0.5);

        let mut out = Vec::new();
        for i in 0..leaves.len() {
            for j in i + 1..leaves.len() {
                let (alo, ahi) = bounds[i];
                let (blo, bhi) = bounds[j];
                for axis in 0..3 {
                    let plane = if ahi[axis] == blo[axis] {
                        ahi[axis]
                    } else if bhi[axis] == alo[axis] {
                        alo[axis]
                    } else {
                        continue;
                    };
                    let o1 = (axis + 1) % 3;
                    let o2 = (axis + 2) % 3;
                    let lo1 = alo[o1].max(blo[o1]);
                    let hi1 = ahi[o1].min(bhi[o1]);
                    let lo2 = alo[o2].max(blo[o2]);
                    let hi2 = ahi[o2].min(bhi[o2]);
                    if lo1 >= hi1 || lo2 >= hi2 {
                        continue;
                    }
                    let mut fmin = Vector3::zeros();
                    let mut fmax = Vector3::zeros();
                    fmin[axis] = root_min[axis] + plane as f64 * cell;
                    fmax[axis] = fmin[axis];
                    fmin[o1] = root_min[o1] + lo1 as f64 * cell;
                    fmax[o1] = root_min[o1] + hi1 as f64 * cell;
                    fmin[o2] = root_min[o2] + lo2 as f64 * cell;
                    fmax[o2] = root_min[o2] + hi2 as f64 * cell;
                    out.push(FacePair {
                        leaf_a: leaves[i],
                        leaf_b: leaves[j],
                        face: Aabb::new(fmin, fmax),
                    });
                    break; // boxes can share at most one face
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// ASCII PLY of leaf centers, colored by depth, for quick inspection.
    pub fn leaf_centers_ply(&self) -> String {
        let leaves = self.leaf_ids();
        let mut s = String::new();
        s.push_str("ply\nformat ascii 1.0\n");
        s.push_str(&format!("element vertex {}\n", leaves.len()));
        s.push_str("property float x\nproperty float y\nproperty float z\n");
        s.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
        s.push_str("end_header\n");
        for id in leaves {
            let n = &self.nodes[id];
            let t = n.depth as f64 / self.max_depth.max(1) as f64;
            let r = (255.0 * t) as u8;
            let b = (255.0 * (1.0 - t)) as u8;
            s.push_str(&format!(
                "{} {} {} {} {} {}\n",
                n.center.x, n.center.y, n.center.z, r, 64, b
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn ring_cameras(n: usize, radius: f64) -> Vec<Camera> {
        (0..n)
            .map(|i| {
                let a = i as f64 / n as f64 * std::f64::consts::TAU;
                Camera::look_at(
                    Vector3::new(radius * a.cos(), 0.2, radius * a.sin()),
                    Vector3::zeros(),
                    Vector3::y(),
                    60.0,
                    60.0,
                    64,
                    64,
                    0.05,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn root_side_is_512x_extent() {
        let cams = ring_cameras(8, 0.4); // extent < 1 floors at 1
        let tree = build_octree(&cams, 3.0, 4, 6).unwrap();
        assert_eq!(tree.root_side, 512.0);

        let cams = ring_cameras(8, 2.0); // extent 4 on x and z
        let tree = build_octree(&cams, 3.0, 4, 6).unwrap();
        assert!((tree.root_side - 512.0 * 4.0).abs() < 1e-9);
    }

    #[test]
    fn subdivision_rule_distance() {
        // A node of side s=512 with the nearest visible camera at d=100 must
        // subdivide because 100 <= 3*512.
        let cams = ring_cameras(6, 0.5);
        let tree = build_octree(&cams, 3.0, 4, 8).unwrap();
        assert_eq!(tree.root_side, 512.0);
        let root = &tree.nodes[tree.root];
        assert!(!root.is_leaf(), "root must subdivide with cameras inside");
        // Every leaf satisfies the stopping rule.
        for id in tree.leaf_ids() {
            let n = &tree.nodes[id];
            let near_cam = n
                .visible_cams
                .iter()
                .any(|&i| (cams[i].center - n.center).norm() <= tree.lambda * n.side);
            assert!(
                !near_cam || n.depth == tree.max_depth,
                "leaf {id} violates the stopping rule"
            );
        }
    }

    #[test]
    fn invisible_leaves_have_no_selection() {
        let cams = ring_cameras(6, 0.5);
        let tree = build_octree(&cams, 3.0, 4, 8).unwrap();
        let mut saw_invisible = false;
        for id in tree.leaf_ids() {
            let n = &tree.nodes[id];
            if n.visible_cams.is_empty() {
                saw_invisible = true;
                assert!(n.selected_cams.is_empty());
                assert!(n.warp_id.is_none());
            } else {
                assert!(!n.selected_cams.is_empty());
                assert!(n.selected_cams.len() <= tree.n_c);
            }
        }
        assert!(saw_invisible, "expected some invisible leaves in a 512x box");
    }

    #[test]
    fn build_is_deterministic() {
        let cams = ring_cameras(7, 1.0);
        let a = build_octree(&cams, 3.0, 4, 7).unwrap();
        let b = build_octree(&cams, 3.0, 4, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn locate_center_and_outside() {
        let cams = ring_cameras(6, 1.0);
        let tree = build_octree(&cams, 3.0, 4, 6).unwrap();
        let id = tree.locate_leaf(&tree.root_center).unwrap();
        assert!(tree.nodes[id].aabb().contains_half_open(&tree.root_center));
        let outside = tree.root_center + Vector3::repeat(tree.root_side);
        assert!(tree.locate_leaf(&outside).is_none());
        // Points exactly on the root max face are outside the half-open box.
        let mut on_face = tree.root_center;
        on_face.x += tree.root_side * 0.5;
        assert!(tree.locate_leaf(&on_face).is_none());
    }

    #[test]
    fn locate_agrees_with_linear_scan() {
        let cams = ring_cameras(6, 1.0);
        let tree = build_octree(&cams, 3.0, 4, 7).unwrap();
        let leaves = tree.leaf_ids();
        let mut rng = StdRng::seed_from_u64(3);
        let root = tree.root_aabb();
        for _ in 0..100_000 {
            let x = Vector3::new(
                rng.gen_range(root.min.x..root.max.x),
                rng.gen_range(root.min.y..root.max.y),
                rng.gen_range(root.min.z..root.max.z),
            );
            let located = tree.locate_leaf(&x).expect("inside the root box");
            let scan: Vec<NodeId> = leaves
                .iter()
                .copied()
                .filter(|&i| tree.nodes[i].aabb().contains_half_open(&x))
                .collect();
            assert_eq!(scan, vec![located]);
        }
    }

    #[test]
    fn leaves_tile_root() {
        let cams = ring_cameras(5, 1.5);
        let tree = build_octree(&cams, 3.0, 4, 6).unwrap();
        let total: f64 = tree
            .leaf_ids()
            .iter()
            .map(|&i| tree.nodes[i].side.powi(3))
            .sum();
        let rel = (total - tree.root_side.powi(3)).abs() / tree.root_side.powi(3);
        assert!(rel < 1e-12, "leaf volumes must sum to the root volume");
    }

    #[test]
    fn visible_cams_match_frustum_recheck() {
        let cams = ring_cameras(6, 1.0);
        let tree = build_octree(&cams, 3.0, 4, 5).unwrap();
        let far = 8.0 * tree.root_side;
        for id in tree.leaf_ids() {
            let n = &tree.nodes[id];
            let expect: Vec<usize> = (0..cams.len())
                .filter(|&i| frustum_intersects_aabb(&cams[i], &n.aabb(), far))
                .collect();
            assert_eq!(n.visible_cams, expect, "leaf {id}");
        }
    }

    #[test]
    fn face_pairs_single_leaf_empty() {
        // One camera very far from the region center relative to lambda*side
        // cannot exist at the root (root always contains cameras), so force
        // max_depth 0 for a single-leaf tree.
        let cams = ring_cameras(4, 1.0);
        let mut tree = build_octree(&cams, 3.0, 4, 0).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        tree.nodes[0].warp_id = Some(0);
        assert!(tree.leaf_face_pairs().is_empty());
    }

    #[test]
    fn face_pairs_eight_leaves() {
        let cams = ring_cameras(4, 1.0);
        let mut tree = build_octree(&cams, 3.0, 4, 1).unwrap();
        assert_eq!(tree.nodes.len(), 9);
        for id in tree.leaf_ids() {
            tree.nodes[id].warp_id = Some(0);
        }
        let pairs = tree.leaf_face_pairs();
        // A 2x2x2 split has 12 interior faces.
        assert_eq!(pairs.len(), 12);
        for p in &pairs {
            let e = p.face.extents();
            let zero_axes = (0..3).filter(|&k| e[k] == 0.0).count();
            assert_eq!(zero_axes, 1, "face must be collapsed on exactly one axis");
            assert!(p.area() > 0.0);
        }
    }

    #[test]
    fn face_pairs_skip_unwarped() {
        let cams = ring_cameras(4, 1.0);
        let mut tree = build_octree(&cams, 3.0, 4, 1).unwrap();
        let leaves = tree.leaf_ids();
        for &id in &leaves[..4] {
            tree.nodes[id].warp_id = Some(0);
        }
        let pairs = tree.leaf_face_pairs();
        for p in &pairs {
            assert!(tree.nodes[p.leaf_a].warp_id.is_some());
            assert!(tree.nodes[p.leaf_b].warp_id.is_some());
        }
    }

    #[test]
    fn json_roundtrip_byte_identical() {
        let cams = ring_cameras(5, 1.0);
        let tree = build_octree(&cams, 3.0, 4, 5).unwrap();
        let json = tree.to_json().unwrap();
        let back = Octree::from_json(&json).unwrap();
        assert_eq!(tree, back);
        assert_eq!(json, back.to_json().unwrap());
    }
}
