//! Camera trajectory generators for the three capture regimes: forward-facing
//! plane, object-centric orbit, and a free path threading between objects.

use nalgebra::Vector3;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::scenes::SphereScene;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryKind {
    ForwardFacing,
    Orbit,
    Free,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectoryParams {
    pub n_poses: usize,
    pub width: u32,
    pub height: u32,
    pub fov_deg: f64,
    pub near: f64,
    pub seed: u64,
    /// Position jitter for the forward-facing grid, world units.
    pub jitter: f64,
    /// Camera standoff as a multiple of the scene bounding radius.
    pub standoff: f64,
    /// Orbit elevation above the horizontal plane.
    pub elevation_deg: f64,
    /// Aim at the first `focus` spheres only (0 = all); lets a scene carry
    /// backdrop geometry without dragging cameras away from the foreground.
    pub focus: usize,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            n_poses: 24,
            width: 64,
            height: 64,
            fov_deg: 50.0,
            near: 0.05,
            seed: 0,
            jitter: 0.05,
            standoff: 2.5,
            elevation_deg: 18.0,
            focus: 0,
        }
    }
}

impl TrajectoryParams {
    pub fn focal(&self) -> f64 {
        0.5 * self.width as f64 / (0.5 * self.fov_deg.to_radians()).tan()
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub kind: TrajectoryKind,
    pub poses: Vec<Camera>,
}

pub fn gen_trajectory(
    kind: TrajectoryKind,
    params: &TrajectoryParams,
    scene: &SphereScene,
) -> Result<Trajectory> {
    if params.n_poses < 2 {
        return Err(Error::InvalidArgument("need at least 2 poses".into()));
    }
    if params.fov_deg <= 0.0 || params.fov_deg >= 180.0 || params.near <= 0.0 {
        return Err(Error::InvalidArgument("bad fov/near".into()));
    }
    let focused = scene.focused(params.focus);
    let poses = match kind {
        TrajectoryKind::ForwardFacing => forward_facing(params, &focused)?,
        TrajectoryKind::Orbit => orbit(params, &focused)?,
        TrajectoryKind::Free => free_path(params, &focused)?,
    };
    Ok(Trajectory { kind, poses })
}

fn make_cam(params: &TrajectoryParams, eye: Vector3<f64>, target: Vector3<f64>) -> Result<Camera> {
    let f = params.focal();
    Camera::look_at(
        eye,
        target,
        Vector3::y(),
        f,
        f,
        params.width,
        params.height,
        params.near,
    )
}

/// Jittered grid of positions on a plane, all sharing one view direction
/// toward the scene (a common far target).
fn forward_facing(params: &TrajectoryParams, scene: &SphereScene) -> Result<Vec<Camera>> {
    let mut rng = StdRng::seed_from_u64(params.seed);
    let centroid = scene.centroid();
    let radius = scene.bounding_radius();
    let standoff = params.standoff * radius;
    let plane_center = centroid - Vector3::z() * standoff;
    let dir = (centroid - plane_center).normalize();
    let cols = (params.n_poses as f64).sqrt().ceil() as usize;
    let span = 0.8 * radius;
    let mut poses = Vec::with_capacity(params.n_poses);
    for i in 0..params.n_poses {
        let gx = (i % cols) as f64 / (cols - 1).max(1) as f64 - 0.5;
        let gy = (i / cols) as f64 / (cols - 1).max(1) as f64 - 0.5;
        let jitter = Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ) * params.jitter;
        let eye = plane_center + Vector3::new(gx * 2.0 * span, gy * 2.0 * span, 0.0) + jitter;
        poses.push(make_cam(params, eye, eye + dir)?);
    }
    Ok(poses)
}

/// Ring at fixed elevation looking at the scene centroid.
fn orbit(params: &TrajectoryParams, scene: &SphereScene) -> Result<Vec<Camera>> {
    let centroid = scene.centroid();
    let r = params.standoff * scene.bounding_radius();
    let elev = params.elevation_deg.to_radians();
    let mut poses = Vec::with_capacity(params.n_poses);
    for i in 0..params.n_poses {
        let a = i as f64 / params.n_poses as f64 * std::f64::consts::TAU;
        let eye = centroid
            + Vector3::new(
                r * elev.cos() * a.cos(),
                r * elev.sin(),
                r * elev.cos() * a.sin(),
            );
        poses.push(make_cam(params, eye, centroid)?);
    }
    Ok(poses)
}

fn catmull_rom(p: &[Vector3<f64>], t: f64) -> Vector3<f64> {
    let n_seg = p.len() - 3;
    let s = (t * n_seg as f64).min(n_seg as f64 - 1e-9);
    let seg = s.floor() as usize;
    let u = s - seg as f64;
    let (p0, p1, p2, p3) = (p[seg], p[seg + 1], p[seg + 2], p[seg + 3]);
    let u2 = u * u;
    let u3 = u2 * u;
    (p1 * 2.0
        + (p2 - p0) * u
        + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * u2
        + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * u3)
        * 0.5
}

/// Piecewise-cubic path threading between the spheres, looking at the
/// nearest sphere ahead of the camera.
fn free_path(params: &TrajectoryParams, scene: &SphereScene) -> Result<Vec<Camera>> {
    if scene.spheres.is_empty() {
        return Err(Error::InvalidArgument("free path needs spheres".into()));
    }
    let mut rng = StdRng::seed_from_u64(params.seed);
    let mut waypoints: Vec<Vector3<f64>> = Vec::new();
    for (i, s) in scene.spheres.iter().enumerate() {
        let side = if i % 2 == 0 { 1.0 } else { -1.0 };
        let offset = Vector3::new(
            rng.gen_range(-0.2..0.2),
            0.6 + rng.gen_range(0.0..0.3),
            side * (2.5 * s.radius + 0.5 + rng.gen_range(0.0..0.3)),
        );
        waypoints.push(s.center + offset);
    }
    if waypoints.len() == 1 {
        let w = waypoints[0];
        waypoints.push(w + Vector3::new(1.0, 0.0, 0.5));
    }
    // Phantom endpoints for the spline.
    let first = waypoints[0] * 2.0 - waypoints[1];
    let last = *waypoints.last().unwrap() * 2.0 - waypoints[waypoints.len() - 2];
    let mut ctrl = vec![first];
    ctrl.extend_from_slice(&waypoints);
    ctrl.push(last);

    let mut poses = Vec::with_capacity(params.n_poses);
    for i in 0..params.n_poses {
        let t = i as f64 / (params.n_poses - 1) as f64;
        let eye = catmull_rom(&ctrl, t);
        let ahead = catmull_rom(&ctrl, (t + 1e-4).min(1.0));
        let tangent = (ahead - eye).normalize();
        // Nearest sphere ahead of the camera; fall back to nearest overall.
        let mut target = None;
        let mut best = f64::INFINITY;
        for s in &scene.spheres {
            let to = s.center - eye;
            if to.dot(&tangent) > 0.0 && to.norm() < best {
                best = to.norm();
                target = Some(s.center);
            }
        }
        let target = target.unwrap_or_else(|| {
            scene
                .spheres
                .iter()
                .min_by(|a, b| {
                    (a.center - eye).norm().total_cmp(&(b.center - eye).norm())
                })
                .unwrap()
                .center
        });
        poses.push(make_cam(params, eye, target)?);
    }
    Ok(poses)
}
