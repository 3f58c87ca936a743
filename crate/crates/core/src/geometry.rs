//! Pinhole cameras, rays, axis-aligned boxes, frustum/box intersection, and
//! the camera rectification and selection steps that precede warp construction.
//!
//! Convention used throughout: the camera looks along +z in its own frame,
//! image x to the right, image y down. `rotation` maps world to camera.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinhole camera: rigid pose plus intrinsics. Focal lengths and principal
/// point are in pixels, `center` and `near` in world units.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Camera {
    /// World-to-camera rotation; rows are the camera axes in world coordinates.
    pub rotation: Matrix3<f64>,
    pub center: Vector3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub near: f64,
}

impl Camera {
    /// Validates the orthonormality and intrinsics invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rotation: Matrix3<f64>,
        center: Vector3<f64>,
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        near: f64,
    ) -> Result<Self> {
        let cam = Self {
            rotation,
            center,
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            near,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let rtr = self.rotation.transpose() * self.rotation;
        if (rtr - Matrix3::identity()).abs().max() > 1e-6 {
            return Err(Error::InvalidCamera("rotation is not orthonormal".into()));
        }
        if (self.rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidCamera("rotation determinant is not +1".into()));
        }
        if !(self.fx > 0.0 && self.fy > 0.0 && self.near > 0.0) {
            return Err(Error::InvalidCamera("fx, fy, near must be positive".into()));
        }
        if !(0.0..=self.width as f64).contains(&self.cx)
            || !(0.0..=self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidCamera(
                "principal point outside the image".into(),
            ));
        }
        Ok(())
    }

    /// Camera placed at `eye` with +z toward `target`; `up_hint` fixes roll.
    /// Image y ends up pointing against `up_hint` (y-down convention).
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up_hint: Vector3<f64>,
        fx: f64,
        fy: f64,
        width: u32,
        height: u32,
        near: f64,
    ) -> Result<Self> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("look_at target equals eye".into()))?;
        let mut x = z.cross(&up_hint);
        if x.norm() < 1e-9 {
            // Looking straight along the hint; fall back to fixed axes.
            for alt in [Vector3::x(), Vector3::y(), Vector3::z()] {
                x = z.cross(&alt);
                if x.norm() >= 1e-9 {
                    break;
                }
            }
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Camera::new(
            rotation,
            eye,
            fx,
            fy,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            near,
        )
    }

    /// World point expressed in the camera frame.
    pub fn to_camera_frame(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * (x - self.center)
    }

    /// Pinhole projection. `None` if the camera-frame depth is below `near`.
    /// Points outside the image rectangle still project; clipping is a
    /// frustum concern, not a projection one.
    pub fn project(&self, x: &Vector3<f64>) -> Option<Vector2<f64>> {
        let p = self.to_camera_frame(x);
        if p.z < self.near {
            return None;
        }
        Some(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Analytic derivative of `project` with respect to the world point.
    /// Row order (du/dx, dv/dx).
    pub fn project_jacobian(&self, x: &Vector3<f64>) -> Result<Matrix2x3<f64>> {
        let p = self.to_camera_frame(x);
        if p.z < self.near {
            return Err(Error::BehindNearPlane);
        }
        let iz = 1.0 / p.z;
        let j_cam = Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz * iz,
        );
        Ok(j_cam * self.rotation)
    }

    /// Ray from the camera center through the center of pixel (u, v).
    pub fn generate_ray(&self, u: u32, v: u32) -> Ray {
        let px = u as f64 + 0.5;
        let py = v as f64 + 0.5;
        let dir_cam = Vector3::new((px - self.cx) / self.fx, (py - self.cy) / self.fy, 1.0);
        let dir_world = self.rotation.transpose() * dir_cam;
        Ray::new(self.center, dir_world)
    }

    /// Row-major camera-to-world 4x4 matrix.
    pub fn to_c2w(&self) -> [f64; 16] {
        let r = self.rotation.transpose();
        let c = self.center;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            c.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            c.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            c.z,
            0.0,
            0.0,
            0.0,
            1.0,
        ]
    }

    /// Inverse of [`Camera::to_c2w`]; validates the rotation block.
    #[allow(clippy::too_many_arguments)]
    pub fn from_c2w(
        m: &[f64; 16],
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        near: f64,
    ) -> Result<Self> {
        let r_c2w = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let center = Vector3::new(m[3], m[7], m[11]);
        Camera::new(r_c2w.transpose(), center, fx, fy, cx, cy, width, height, near)
    }
}

/// Ray with unit direction.
#[derive(Clone, Debug)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

/// Axis-aligned box, `min <= max` componentwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

impl Aabb {
    pub fn new(min: Vector3<f64>, max: Vector3<f64>) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Self { min, max }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut min = first;
        let mut max = first;
        for p in it {
            min = min.inf(p);
            max = max.sup(p);
        }
        Some(Self { min, max })
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn extents(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extents().norm()
    }

    /// Closed membership test.
    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        (0..3).all(|k| x[k] >= self.min[k] && x[k] <= self.max[k])
    }

    /// Half-open membership test `[min, max)`, the octree cell convention.
    pub fn contains_half_open(&self, x: &Vector3<f64>) -> bool {
        (0..3).all(|k| x[k] >= self.min[k] && x[k] < self.max[k])
    }

    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let mut out = [Vector3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            *c = Vector3::new(
                if i & 1 == 0 { self.min.x } else { self.max.x },
                if i & 2 == 0 { self.min.y } else { self.max.y },
                if i & 4 == 0 { self.min.z } else { self.max.z },
            );
        }
        out
    }

    /// Slab intersection; returns the (entry, exit) parameters if the ray
    /// meets the box with exit > 0.
    pub fn intersect_ray(&self, ray: &Ray) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for k in 0..3 {
            let d = ray.direction[k];
            if d.abs() < 1e-300 {
                if ray.origin[k] < self.min[k] || ray.origin[k] > self.max[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (a, b) = ((self.min[k] - ray.origin[k]) * inv, (self.max[k] - ray.origin[k]) * inv);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            t0 = t0.max(lo);
            t1 = t1.min(hi);
            if t0 > t1 {
                return None;
            }
        }
        if t1 <= 0.0 {
            return None;
        }
        Some((t0, t1))
    }
}

/// Corners of the truncated view pyramid between `near` and `far`.
pub fn frustum_corners(cam: &Camera, far: f64) -> [Vector3<f64>; 8] {
    let mut out = [Vector3::zeros(); 8];
    let pixel_corners = [
        (0.0, 0.0),
        (cam.width as f64, 0.0),
        (cam.width as f64, cam.height as f64),
        (0.0, cam.height as f64),
    ];
    for (i, &(px, py)) in pixel_corners.iter().enumerate() {
        let dir = Vector3::new((px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0);
        let world_dir = cam.rotation.transpose() * dir;
        out[i] = cam.center + world_dir * cam.near;
        out[i + 4] = cam.center + world_dir * far;
    }
    out
}

/// Separating-axis test between the truncated view frustum and a box.
/// Conservative: touching or near-missing within ~1e-6 counts as intersecting.
pub fn frustum_intersects_aabb(cam: &Camera, aabb: &Aabb, far: f64) -> bool {
    debug_assert!(far > cam.near);
    let frustum = frustum_corners(cam, far);
    let box_pts = aabb.corners();

    let z_axis = cam.rotation.row(2).transpose();
    let x_axis = cam.rotation.row(0).transpose();
    let y_axis = cam.rotation.row(1).transpose();
    // Slant edge directions of the pyramid.
    let slants: Vec<Vector3<f64>> = (0..4).map(|i| frustum[i + 4] - frustum[i]).collect();

    let mut axes: Vec<Vector3<f64>> = vec![Vector3::x(), Vector3::y(), Vector3::z(), z_axis];
    // Side plane normals: cross of adjacent slant edges.
    for i in 0..4 {
        axes.push(slants[i].cross(&slants[(i + 1) % 4]));
    }
    // Edge-edge cross products: box axes x frustum edges.
    let frustum_edges: Vec<Vector3<f64>> = slants
        .iter()
        .cloned()
        .chain([x_axis, y_axis])
        .collect();
    for box_axis in [Vector3::x(), Vector3::y(), Vector3::z()] {
        for e in &frustum_edges {
            axes.push(box_axis.cross(e));
        }
    }

    for axis in axes {
        let n = axis.norm();
        if n < 1e-12 {
            continue;
        }
        let axis = axis / n;
        let project = |pts: &[Vector3<f64>]| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for p in pts {
                let v = axis.dot(p);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        };
        let (a_lo, a_hi) = project(&frustum);
        let (b_lo, b_hi) = project(&box_pts);
        let eps = 1e-6 * (1.0 + a_hi.abs().max(a_lo.abs()).max(b_hi.abs()).max(b_lo.abs()));
        if a_lo > b_hi + eps || b_lo > a_hi + eps {
            return false;
        }
    }
    true
}

/// Re-derives each camera so it looks at `region_center` from a common
/// distance r, the mean distance of the nearest quarter of the inputs.
/// The up direction is completed from each camera's original y axis.
pub fn rectify_cameras(cams: &[Camera], region_center: &Vector3<f64>) -> Result<Vec<Camera>> {
    if cams.is_empty() {
        return Err(Error::EmptyCameras);
    }
    let mut dists: Vec<f64> = Vec::with_capacity(cams.len());
    for cam in cams {
        let d = (cam.center - region_center).norm();
        if d < 1e-9 {
            return Err(Error::CameraAtRegionCenter);
        }
        dists.push(d);
    }
    let mut sorted = dists.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let k = ((cams.len() + 3) / 4).max(1); // ceil(n/4), at least one
    let r = sorted[..k].iter().sum::<f64>() / k as f64;

    let mut out = Vec::with_capacity(cams.len());
    for (cam, &d) in cams.iter().zip(&dists) {
        let dir = (cam.center - region_center) / d;
        let new_center = region_center + dir * r;
        let z = -dir; // toward the region center
        let old_y = cam.rotation.row(1).transpose();
        let mut y = old_y - z * old_y.dot(&z);
        if y.norm() < 1e-6 {
            y = Vector3::y() - z * z.y;
            if y.norm() < 1e-6 {
                y = Vector3::x() - z * z.x;
            }
        }
        let y = y.normalize();
        let x = y.cross(&z);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        out.push(Camera {
            rotation,
            center: new_center,
            ..cam.clone()
        });
    }
    Ok(out)
}

/// Farthest-point selection over camera centers. Seeded at the camera
/// farthest from the centroid (a deterministic replacement for a random
/// seed that keeps the selected set spread out), then greedily maximizing
/// the minimum distance to the selected set; ties break to the lowest index.
pub fn select_cameras(cams: &[Camera], n_c: usize) -> Result<Vec<usize>> {
    if cams.is_empty() {
        return Err(Error::EmptyCameras);
    }
    debug_assert!(n_c >= 1);
    if cams.len() <= n_c {
        return Ok((0..cams.len()).collect());
    }
    let centroid: Vector3<f64> =
        cams.iter().map(|c| c.center).sum::<Vector3<f64>>() / cams.len() as f64;
    let mut seed = 0;
    let mut best = f64::NEG_INFINITY;
    for (i, cam) in cams.iter().enumerate() {
        let d = (cam.center - centroid).norm();
        if d > best {
            best = d;
            seed = i;
        }
    }
    let mut selected = vec![seed];
    let mut min_dist: Vec<f64> = cams
        .iter()
        .map(|c| (c.center - cams[seed].center).norm())
        .collect();
    while selected.len() < n_c {
        let mut pick = usize::MAX;
        let mut pick_d = f64::NEG_INFINITY;
        for (i, &d) in min_dist.iter().enumerate() {
            if selected.contains(&i) {
                continue;
            }
            if d > pick_d {
                pick_d = d;
                pick = i;
            }
        }
        selected.push(pick);
        for (i, d) in min_dist.iter_mut().enumerate() {
            let nd = (cams[i].center - cams[pick].center).norm();
            if nd < *d {
                *d = nd;
            }
        }
    }
    Ok(selected)
}
