//! Per-leaf perspective warp functions: a region is described by the stacked
//! image projections of its points, PCA compresses those coordinates to three
//! axes, and per-axis scales align unit warp steps with unit pixel motion.
//!
//! Leaves seeing a single camera fall back to an NDC-like warp (image
//! coordinates plus inverse distance); the no-warp ablation mode uses an
//! identity warp over the root box.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Camera};
use crate::linalg::symmetric_eigen;

/// Fraction of lattice samples that must survive projection for a region to
/// be considered warpable.
pub const MIN_SURVIVAL_FRACTION: f64 = 0.1;
/// Third-to-first eigenvalue ratio below which PCA is declared degenerate.
pub const DEGENERATE_EIG_RATIO: f64 = 1e-12;
/// Componentwise clamp for the axis scales.
pub const SCALE_CLAMP: (f64, f64) = (1e-3, 1e3);

/// PCA-based warp over `m >= 2` rectified cameras:
/// `F(x) = S * M' * (G(x) - mean)` with `G` the stacked projections.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerspectiveWarp {
    pub cams: Vec<Camera>,
    /// Mean projected coordinate, length 2m.
    pub mean: DVector<f64>,
    /// Rows are the top-3 eigenvectors of the projection covariance (3 x 2m).
    pub basis: DMatrix<f64>,
    /// Diagonal of S.
    pub scales: Vector3<f64>,
    /// Bounding box of the warped construction samples.
    pub bbox: Aabb,
}

/// Fallback for leaves seeing one camera: `F(x) = (u, v, -r / |x - c|)`,
/// `r` being the rectification distance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SingleCameraWarp {
    pub cam: Camera,
    pub r: f64,
    pub bbox: Aabb,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Warp {
    Perspective(PerspectiveWarp),
    SingleCamera(SingleCameraWarp),
    /// No-warp ablation: F(x) = x over a fixed box.
    Identity { bbox: Aabb },
}

/// Stacked projection G(x) over all cameras; `None` if any camera rejects x.
pub fn project_stack(cams: &[Camera], x: &Vector3<f64>) -> Option<DVector<f64>> {
    let mut out = DVector::zeros(2 * cams.len());
    for (i, cam) in cams.iter().enumerate() {
        let p = cam.project(x)?;
        out[2 * i] = p.x;
        out[2 * i + 1] = p.y;
    }
    Some(out)
}

/// Stacked 2m x 3 projection Jacobian.
pub fn projection_jacobian_stack(cams: &[Camera], x: &Vector3<f64>) -> Result<DMatrix<f64>> {
    let mut j = DMatrix::zeros(2 * cams.len(), 3);
    for (i, cam) in cams.iter().enumerate() {
        let ji = cam.project_jacobian(x)?;
        for k in 0..3 {
            j[(2 * i, k)] = ji[(0, k)];
            j[(2 * i + 1, k)] = ji[(1, k)];
        }
    }
    Ok(j)
}

/// Regular inclusive lattice of `n_per_axis^3` points spanning the box.
pub fn sample_region_points(region: &Aabb, n_per_axis: usize) -> Vec<Vector3<f64>> {
    assert!(n_per_axis >= 2, "need at least two lattice points per axis");
    let n = n_per_axis;
    let e = region.extents();
    let mut out = Vec::with_capacity(n * n * n);
    for iz in 0..n {
        for iy in 0..n {
            for ix in 0..n {
                out.push(Vector3::new(
                    region.min.x + e.x * ix as f64 / (n - 1) as f64,
                    region.min.y + e.y * iy as f64 / (n - 1) as f64,
                    region.min.z + e.z * iz as f64 / (n - 1) as f64,
                ));
            }
        }
    }
    out
}

/// PCA over stacked projection coordinates: mean, the top-3 eigenvector rows
/// (sign-fixed so each row's largest-magnitude entry is positive), and the
/// corresponding eigenvalues in descending order. The covariance is the
/// unnormalized scatter matrix (K - mean)(K - mean)^T.
pub fn pca_project(coords: &[DVector<f64>]) -> Result<(DVector<f64>, DMatrix<f64>, Vector3<f64>)> {
    if coords.len() < 4 {
        return Err(Error::DegenerateRegion(format!(
            "PCA needs at least 4 coordinates, got {}",
            coords.len()
        )));
    }
    let dim = coords[0].len();
    if dim < 3 {
        return Err(Error::DimensionMismatch(format!(
            "PCA needs dimension >= 3, got {dim}"
        )));
    }
    let mut mean = DVector::zeros(dim);
    for c in coords {
        mean += c;
    }
    mean /= coords.len() as f64;

    let mut cov = DMatrix::zeros(dim, dim);
    for c in coords {
        let d = c - &mean;
        // cov += d d^T, symmetric accumulate
        for i in 0..dim {
            for j in i..dim {
                cov[(i, j)] += d[i] * d[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            cov[(i, j)] = cov[(j, i)];
        }
    }

    let (eigvals, eigvecs) = symmetric_eigen(&cov);
    let mut basis = DMatrix::zeros(3, dim);
    for row in 0..3 {
        let mut v = eigvecs.column(row).clone_owned();
        // Sign fix: the largest-magnitude entry (lowest index on ties) is positive.
        let mut arg = 0;
        for k in 1..dim {
            if v[k].abs() > v[arg].abs() {
                arg = k;
            }
        }
        if v[arg] < 0.0 {
            v = -v;
        }
        basis.set_row(row, &v.transpose());
    }
    Ok((mean, basis, Vector3::new(eigvals[0], eigvals[1], eigvals[2])))
}

/// Residual of representing the centered coordinates by the 3-row basis:
/// sum_j || B^T B (y_j - mean) - (y_j - mean) ||^2.
pub fn projection_residual(
    basis: &DMatrix<f64>,
    mean: &DVector<f64>,
    coords: &[DVector<f64>],
) -> f64 {
    let mut total = 0.0;
    for y in coords {
        let d = y - mean;
        let z = basis * &d;
        let back = basis.transpose() * z;
        total += (back - d).norm_squared();
    }
    total
}

/// Per-axis scale parameters: for each probe the warp-to-image Jacobian
/// `J_OI (S M' J_OI)^-1` is constrained to have unit column maxima, which
/// solves to `s_k = max_j |B[j,k]|` with `B = J_OI (M' J_OI)^-1`; the result
/// is the probe average, clamped componentwise.
pub fn compute_axis_scales(
    basis: &DMatrix<f64>,
    cams: &[Camera],
    probes: &[Vector3<f64>],
) -> Result<Vector3<f64>> {
    let mut acc = Vector3::zeros();
    let mut used = 0usize;
    for x in probes {
        if cams.iter().any(|c| c.project(x).is_none()) {
            continue;
        }
        let j_oi = projection_jacobian_stack(cams, x)?;
        let a_dyn = basis * &j_oi;
        let a = Matrix3::from_fn(|r, c| a_dyn[(r, c)]);
        let det = a.determinant();
        let frob = a.norm();
        if det.abs() < 1e-12 * frob.powi(3) {
            continue;
        }
        let a_inv = a.try_inverse().expect("checked determinant");
        let b = &j_oi * DMatrix::from_fn(3, 3, |r, c| a_inv[(r, c)]);
        for k in 0..3 {
            let mut m = 0.0f64;
            for j in 0..b.nrows() {
                m = m.max(b[(j, k)].abs());
            }
            acc[k] += m;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::DegenerateRegion(
            "all scale probes were skipped (degenerate camera geometry)".into(),
        ));
    }
    let mut s = acc / used as f64;
    for k in 0..3 {
        s[k] = s[k].clamp(SCALE_CLAMP.0, SCALE_CLAMP.1);
    }
    Ok(s)
}

/// Builds the warp for a region from its (rectified) cameras. Lattice
/// samples behind any camera's near plane are dropped; fewer than 10%
/// survivors or a rank-deficient projection cloud is an error.
pub fn construct_warp(region: &Aabb, cams: &[Camera], n_per_axis: usize) -> Result<Warp> {
    if cams.is_empty() {
        return Err(Error::EmptyCameras);
    }
    let lattice = sample_region_points(region, n_per_axis);

    if cams.len() == 1 {
        let cam = cams[0].clone();
        let r = (cam.center - region.center()).norm();
        if r < 1e-9 {
            return Err(Error::CameraAtRegionCenter);
        }
        let warped: Vec<Vector3<f64>> = lattice
            .iter()
            .filter_map(|x| single_camera_point(&cam, r, x).ok())
            .collect();
        if (warped.len() as f64) < MIN_SURVIVAL_FRACTION * lattice.len() as f64 {
            return Err(Error::DegenerateRegion(format!(
                "only {} of {} samples visible to the single camera",
                warped.len(),
                lattice.len()
            )));
        }
        let bbox = Aabb::from_points(&warped).unwrap();
        return Ok(Warp::SingleCamera(SingleCameraWarp { cam, r, bbox }));
    }

    let mut survivors: Vec<Vector3<f64>> = Vec::with_capacity(lattice.len());
    let mut coords: Vec<DVector<f64>> = Vec::with_capacity(lattice.len());
    for x in &lattice {
        if let Some(y) = project_stack(cams, x) {
            survivors.push(*x);
            coords.push(y);
        }
    }
    if (coords.len() as f64) < MIN_SURVIVAL_FRACTION * lattice.len() as f64 {
        return Err(Error::DegenerateRegion(format!(
            "only {} of {} samples visible to all cameras",
            coords.len(),
            lattice.len()
        )));
    }

    let (mean, basis, eigvals) = pca_project(&coords)?;
    if eigvals[2] < DEGENERATE_EIG_RATIO * eigvals[0].max(1e-300) {
        return Err(Error::DegenerateRegion(format!(
            "degenerate PCA: eigenvalues {:?}",
            eigvals
        )));
    }
    let scales = compute_axis_scales(&basis, cams, &survivors)?;

    let warp = PerspectiveWarp {
        cams: cams.to_vec(),
        mean,
        basis,
        scales,
        bbox: Aabb::new(Vector3::zeros(), Vector3::zeros()), // filled below
    };
    let warped: Vec<Vector3<f64>> = coords
        .iter()
        .map(|y| warp.apply_to_stack(y))
        .collect();
    let bbox = Aabb::from_points(&warped).unwrap();
    Ok(Warp::Perspective(PerspectiveWarp { bbox, ..warp }))
}

fn single_camera_point(cam: &Camera, r: f64, x: &Vector3<f64>) -> Result<Vector3<f64>> {
    let p = cam.project(x).ok_or(Error::BehindNearPlane)?;
    let dist = (x - cam.center).norm();
    Ok(Vector3::new(p.x, p.y, -r / dist))
}

/// Stack-buffer capacity for the allocation-free evaluation path; leaves
/// select at most n_c = 4 cameras, so 8 is already generous.
const STACK_CAMS: usize = 8;

impl PerspectiveWarp {
    fn apply_to_stack(&self, y: &DVector<f64>) -> Vector3<f64> {
        let z = &self.basis * (y - &self.mean);
        Vector3::new(
            self.scales.x * z[0],
            self.scales.y * z[1],
            self.scales.z * z[2],
        )
    }

    /// Allocation-free F(x) for the marching/field hot path.
    #[inline]
    fn point_fast(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        let dim = 2 * self.cams.len();
        debug_assert!(dim <= 2 * STACK_CAMS);
        let mut centered = [0.0f64; 2 * STACK_CAMS];
        for (i, cam) in self.cams.iter().enumerate() {
            let p = cam.project(x).ok_or(Error::BehindNearPlane)?;
            centered[2 * i] = p.x - self.mean[2 * i];
            centered[2 * i + 1] = p.y - self.mean[2 * i + 1];
        }
        // basis is column-major: entry (r, k) sits at k * 3 + r.
        let b = self.basis.as_slice();
        let mut z = Vector3::zeros();
        for r in 0..3 {
            let mut acc = 0.0;
            for (k, c) in centered[..dim].iter().enumerate() {
                acc += b[k * 3 + r] * c;
            }
            z[r] = acc * self.scales[r];
        }
        Ok(z)
    }

    /// Allocation-free fused F(x) and Jacobian.
    #[inline]
    fn point_and_jacobian_fast(&self, x: &Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let dim = 2 * self.cams.len();
        debug_assert!(dim <= 2 * STACK_CAMS);
        let mut centered = [0.0f64; 2 * STACK_CAMS];
        let mut rows = [[0.0f64; 3]; 2 * STACK_CAMS];
        for (i, cam) in self.cams.iter().enumerate() {
            let p = cam.project(x).ok_or(Error::BehindNearPlane)?;
            centered[2 * i] = p.x - self.mean[2 * i];
            centered[2 * i + 1] = p.y - self.mean[2 * i + 1];
            let j = cam.project_jacobian(x)?;
            for c in 0..3 {
                rows[2 * i][c] = j[(0, c)];
                rows[2 * i + 1][c] = j[(1, c)];
            }
        }
        let b = self.basis.as_slice();
        let mut z = Vector3::zeros();
        let mut jac = Matrix3::zeros();
        for r in 0..3 {
            let s = self.scales[r];
            let mut acc = 0.0;
            let mut jr = [0.0f64; 3];
            for k in 0..dim {
                let w = b[k * 3 + r];
                acc += w * centered[k];
                for c in 0..3 {
                    jr[c] += w * rows[k][c];
                }
            }
            z[r] = acc * s;
            for c in 0..3 {
                jac[(r, c)] = jr[c] * s;
            }
        }
        Ok((z, jac))
    }
}

impl Warp {
    pub fn bbox(&self) -> &Aabb {
        match self {
            Warp::Perspective(w) => &w.bbox,
            Warp::SingleCamera(w) => &w.bbox,
            Warp::Identity { bbox } => bbox,
        }
    }

    /// F(x). Errors if any camera of the warp cannot see `x`.
    pub fn point(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        match self {
            Warp::Perspective(w) => {
                if w.cams.len() <= STACK_CAMS {
                    return w.point_fast(x);
                }
                let y = project_stack(&w.cams, x).ok_or(Error::BehindNearPlane)?;
                Ok(w.apply_to_stack(&y))
            }
            Warp::SingleCamera(w) => single_camera_point(&w.cam, w.r, x),
            Warp::Identity { .. } => Ok(*x),
        }
    }

    /// 3x3 Jacobian of F at `x`.
    pub fn jacobian(&self, x: &Vector3<f64>) -> Result<Matrix3<f64>> {
        Ok(self.point_and_jacobian(x)?.1)
    }

    /// F(x) and its Jacobian in one pass (projections are shared).
    pub fn point_and_jacobian(&self, x: &Vector3<f64>) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        match self {
            Warp::Perspective(w) => {
                if w.cams.len() <= STACK_CAMS {
                    return w.point_and_jacobian_fast(x);
                }
                let y = project_stack(&w.cams, x).ok_or(Error::BehindNearPlane)?;
                let j_oi = projection_jacobian_stack(&w.cams, x)?;
                let m = &w.basis * &j_oi;
                let mut jac = Matrix3::from_fn(|r, c| m[(r, c)]);
                for r in 0..3 {
                    for c in 0..3 {
                        jac[(r, c)] *= w.scales[r];
                    }
                }
                Ok((w.apply_to_stack(&y), jac))
            }
            Warp::SingleCamera(w) => {
                let z = single_camera_point(&w.cam, w.r, x)?;
                let j_img = w.cam.project_jacobian(x)?;
                let d = x - w.cam.center;
                let dist = d.norm();
                let row3 = d * (w.r / dist.powi(3));
                let jac = Matrix3::from_rows(&[
                    j_img.row(0).clone_owned(),
                    j_img.row(1).clone_owned(),
                    row3.transpose(),
                ]);
                Ok((z, jac))
            }
            Warp::Identity { .. } => Ok((*x, Matrix3::identity())),
        }
    }
}
