//! Synthetic constant-density sphere scenes with a closed-form volume
//! renderer. The oracle shares no code with the learned rendering path,
//! which is what makes end-to-end training tests meaningful. Also PSNR.

pub mod dataset;
pub mod trajectory;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, Ray};
use crate::image_buf::ImageBuf;

pub use dataset::{read_dataset, write_dataset, Dataset, PoseManifest};
pub use trajectory::{gen_trajectory, Trajectory, TrajectoryKind, TrajectoryParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub sigma: f64,
    pub rgb: [f64; 3],
}

/// Constant-density spheres over a black background. Inside overlaps the
/// sphere with the nearest center wins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereScene {
    pub spheres: Vec<Sphere>,
}

impl SphereScene {
    pub fn validate(&self) -> Result<()> {
        for s in &self.spheres {
            if !(s.radius > 0.0 && s.sigma >= 0.0) || !s.center.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidArgument("invalid sphere".into()));
            }
        }
        Ok(())
    }

    pub fn centroid(&self) -> Vector3<f64> {
        if self.spheres.is_empty() {
            return Vector3::zeros();
        }
        self.spheres.iter().map(|s| s.center).sum::<Vector3<f64>>() / self.spheres.len() as f64
    }

    pub fn bounding_radius(&self) -> f64 {
        let c = self.centroid();
        self.spheres
            .iter()
            .map(|s| (s.center - c).norm() + s.radius)
            .fold(1.0, f64::max)
    }

    /// Three colored foreground spheres strung along a line, surrounded by
    /// large muted backdrop spheres so nearly every ray ends in supervised
    /// content instead of empty blackness. Foreground spheres come first;
    /// trajectory generators focus on that prefix.
    pub fn three_spheres() -> Self {
        SphereScene {
            spheres: vec![
                Sphere {
                    center: Vector3::new(-3.0, 0.0, 0.0),
                    radius: 1.0,
                    sigma: 4.0,
                    rgb: [0.9, 0.15, 0.1],
                },
                Sphere {
                    center: Vector3::new(0.0, 0.4, 0.6),
                    radius: 0.8,
                    sigma: 6.0,
                    rgb: [0.1, 0.8, 0.2],
                },
                Sphere {
                    center: Vector3::new(3.0, -0.2, -0.4),
                    radius: 1.2,
                    sigma: 3.0,
                    rgb: [0.15, 0.25, 0.95],
                },
                // Backdrops: far enough that foreground centers always win
                // the nearest-center rule inside the foreground spheres.
                Sphere {
                    center: Vector3::new(0.0, 2.0, 26.0),
                    radius: 12.0,
                    sigma: 2.0,
                    rgb: [0.25, 0.35, 0.55],
                },
                Sphere {
                    center: Vector3::new(-20.0, 4.0, 14.0),
                    radius: 11.0,
                    sigma: 2.0,
                    rgb: [0.4, 0.45, 0.2],
                },
                Sphere {
                    center: Vector3::new(20.0, 3.0, 12.0),
                    radius: 11.0,
                    sigma: 2.0,
                    rgb: [0.5, 0.3, 0.2],
                },
                Sphere {
                    center: Vector3::new(0.0, 1.0, -26.0),
                    radius: 12.0,
                    sigma: 2.0,
                    rgb: [0.35, 0.28, 0.4],
                },
                Sphere {
                    center: Vector3::new(0.0, -24.0, 0.0),
                    radius: 14.0,
                    sigma: 3.0,
                    rgb: [0.35, 0.3, 0.22],
                },
                Sphere {
                    center: Vector3::new(2.0, 26.0, -2.0),
                    radius: 13.0,
                    sigma: 1.5,
                    rgb: [0.5, 0.55, 0.65],
                },
            ],
        }
        .with_wall_studs(72, 40)
    }

    /// Scatters small bright spheres onto the backdrop walls so the far
    /// field carries detail a coarse global grid cannot represent. A stud
    /// sits just proud of its wall; its center is much closer than the
    /// wall's, so it wins the nearest-center rule where they overlap.
    fn with_wall_studs(mut self, count: usize, seed: u64) -> Self {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(seed);
        let origin = self.focused(3).centroid();
        let walls: Vec<Sphere> = self.spheres[3..].to_vec();
        let mut placed = 0usize;
        let mut guard = 0usize;
        while placed < count && guard < count * 64 {
            guard += 1;
            let dir = Vector3::new(
                rng.gen_range(-1.0f64..1.0),
                rng.gen_range(-1.0f64..1.0),
                rng.gen_range(-1.0f64..1.0),
            );
            if dir.norm() < 1e-3 {
                continue;
            }
            let dir = dir.normalize();
            // Nearest wall entry along this direction.
            let mut hit: Option<f64> = None;
            for w in &walls {
                let oc = origin - w.center;
                let b = dir.dot(&oc);
                let disc = b * b - (oc.norm_squared() - w.radius * w.radius);
                if disc <= 0.0 {
                    continue;
                }
                let t = -b - disc.sqrt();
                if t > 5.0 && hit.map_or(true, |h| t < h) {
                    hit = Some(t);
                }
            }
            let Some(t) = hit else { continue };
            let radius = rng.gen_range(0.7..1.5);
            let center = origin + dir * (t + 0.3 * radius);
            // Keep studs apart so they read as distinct detail.
            if self.spheres[3..]
                .iter()
                .skip(walls.len())
                .any(|s| (s.center - center).norm() < s.radius + radius + 0.5)
            {
                continue;
            }
            self.spheres.push(Sphere {
                center,
                radius,
                sigma: rng.gen_range(4.0..8.0),
                rgb: [
                    rng.gen_range(0.1..0.95),
                    rng.gen_range(0.1..0.95),
                    rng.gen_range(0.1..0.95),
                ],
            });
            placed += 1;
        }
        self
    }

    /// The subset a trajectory should look at: the first `focus` spheres, or
    /// everything when `focus` is 0.
    pub fn focused(&self, focus: usize) -> SphereScene {
        if focus == 0 || focus >= self.spheres.len() {
            return self.clone();
        }
        SphereScene {
            spheres: self.spheres[..focus].to_vec(),
        }
    }
}

/// Exact pixel value: ray-sphere interval intersections are split into
/// constant-density segments (including overlap-bisector crossings, where
/// the nearest center changes) and composited in closed form.
pub(crate) fn integrate_ray(scene: &SphereScene, ray: &Ray, extra_breakpoints: &[f64]) -> [f64; 3] {
    let mut cuts: Vec<f64> = vec![0.0];
    cuts.extend_from_slice(extra_breakpoints);
    for s in &scene.spheres {
        let oc = ray.origin - s.center;
        let b = ray.direction.dot(&oc);
        let c0 = oc.norm_squared() - s.radius * s.radius;
        let disc = b * b - c0;
        if disc <= 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        let (t0, t1) = (-b - sq, -b + sq);
        if t1 <= 0.0 {
            continue;
        }
        cuts.push(t0.max(0.0));
        cuts.push(t1);
    }
    // Inside overlaps the winning sphere flips where the ray crosses the
    // perpendicular bisector plane of two centers. Only geometrically
    // overlapping pairs can ever cover a point jointly.
    let n = scene.spheres.len();
    for i in 0..n {
        for j in i + 1..n {
            let (si, sj) = (&scene.spheres[i], &scene.spheres[j]);
            let (ci, cj) = (si.center, sj.center);
            if (cj - ci).norm_squared() >= (si.radius + sj.radius).powi(2) {
                continue;
            }
            let d = ray.direction.dot(&(cj - ci));
            if d.abs() < 1e-300 {
                continue;
            }
            let t = (0.5 * (cj.norm_squared() - ci.norm_squared())
                - ray.origin.dot(&(cj - ci)))
                / d;
            if t > 0.0 && t.is_finite() {
                cuts.push(t);
            }
        }
    }
    cuts.sort_by(|a, b| a.total_cmp(b));

    let mut color = [0.0f64; 3];
    let mut transmittance = 1.0f64;
    for w in cuts.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let len = tb - ta;
        if len <= 0.0 {
            continue;
        }
        let mid = ray.at(0.5 * (ta + tb));
        let mut winner: Option<(f64, usize)> = None;
        for (k, s) in scene.spheres.iter().enumerate() {
            let d = (mid - s.center).norm();
            if d <= s.radius && winner.map_or(true, |(bd, _)| d < bd) {
                winner = Some((d, k));
            }
        }
        if let Some((_, k)) = winner {
            let s = &scene.spheres[k];
            let absorb = (-s.sigma * len).exp();
            let alpha = 1.0 - absorb;
            for c in 0..3 {
                color[c] += transmittance * alpha * s.rgb[c];
            }
            transmittance *= absorb;
        }
    }
    color
}

pub fn oracle_pixel(scene: &SphereScene, ray: &Ray) -> [f64; 3] {
    integrate_ray(scene, ray, &[])
}

/// Ground-truth image: closed-form compositing per pixel, black background.
pub fn oracle_render(scene: &SphereScene, cam: &Camera) -> ImageBuf {
    let mut img = ImageBuf::new(cam.width, cam.height);
    let width = cam.width;
    img.data
        .par_chunks_mut((width * 3) as usize)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..width {
                let ray = cam.generate_ray(x, y as u32);
                let rgb = oracle_pixel(scene, &ray);
                let i = (x * 3) as usize;
                row[i..i + 3].copy_from_slice(&rgb);
            }
        });
    img
}

/// Peak signal-to-noise ratio in dB over [0,1] images; identical images
/// report the 99 dB cap.
pub fn psnr(a: &ImageBuf, b: &ImageBuf) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(99.0);
    }
    Ok((-10.0 * mse.log10()).min(99.0))
}
