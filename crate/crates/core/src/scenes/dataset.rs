//! Dataset directory layout: `images/NNNN.png`, `poses.json` (the pose
//! manifest), and `scene.json`. Every 8th image (index 7 mod 8) is held out
//! for testing.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Camera;
use crate::image_buf::ImageBuf;
use crate::scenes::{oracle_render, SphereScene, Trajectory};

/// Pose manifest: shared intrinsics plus per-frame camera-to-world matrices
/// (row-major 4x4).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PoseManifest {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub near: f64,
    pub frames: Vec<Frame>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Frame {
    pub c2w: Vec<f64>,
}

impl PoseManifest {
    pub fn from_cameras(cams: &[Camera]) -> Result<Self> {
        let first = cams.first().ok_or(Error::EmptyCameras)?;
        Ok(Self {
            width: first.width,
            height: first.height,
            fx: first.fx,
            fy: first.fy,
            cx: first.cx,
            cy: first.cy,
            near: first.near,
            frames: cams
                .iter()
                .map(|c| Frame {
                    c2w: c.to_c2w().to_vec(),
                })
                .collect(),
        })
    }

    pub fn cameras(&self) -> Result<Vec<Camera>> {
        self.frames
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let m: [f64; 16] = f
                    .c2w
                    .as_slice()
                    .try_into()
                    .map_err(|_| Error::Schema(format!("frame {i}: c2w must have 16 entries")))?;
                Camera::from_c2w(
                    &m,
                    self.fx,
                    self.fy,
                    self.cx,
                    self.cy,
                    self.width,
                    self.height,
                    self.near,
                )
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub cameras: Vec<Camera>,
    pub images: Vec<ImageBuf>,
    pub scene: Option<SphereScene>,
}

impl Dataset {
    /// Every 8th image is a test view, the rest train.
    pub fn split(&self) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for i in 0..self.cameras.len() {
            if i % 8 == 7 {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }
}

/// Renders all poses with the oracle and writes images + manifests.
pub fn write_dataset(scene: &SphereScene, traj: &Trajectory, dir: &Path) -> Result<()> {
    scene.validate()?;
    std::fs::create_dir_all(dir.join("images"))?;
    let images: Vec<ImageBuf> = traj
        .poses
        .par_iter()
        .map(|cam| oracle_render(scene, cam))
        .collect();
    for (i, img) in images.iter().enumerate() {
        img.save_png(&dir.join("images").join(format!("{i:04}.png")))?;
    }
    let manifest = PoseManifest::from_cameras(&traj.poses)?;
    std::fs::write(
        dir.join("poses.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    std::fs::write(
        dir.join("scene.json"),
        serde_json::to_string_pretty(scene)?,
    )?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_text = std::fs::read_to_string(dir.join("poses.json"))
        .map_err(|e| Error::Schema(format!("poses.json: {e}")))?;
    let manifest: PoseManifest = serde_json::from_str(&manifest_text)
        .map_err(|e| Error::Schema(format!("poses.json: {e}")))?;
    let cameras = manifest.cameras()?;
    let mut images = Vec::with_capacity(cameras.len());
    for i in 0..cameras.len() {
        images.push(ImageBuf::load_png(
            &dir.join("images").join(format!("{i:04}.png")),
        )?);
    }
    let scene = match std::fs::read_to_string(dir.join("scene.json")) {
        Ok(text) => Some(
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("scene.json: {e}")))?,
        ),
        Err(_) => None,
    };
    Ok(Dataset {
        cameras,
        images,
        scene,
    })
}
