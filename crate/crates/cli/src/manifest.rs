//! The run manifest: a complete, stable snapshot of everything needed to
//! reproduce a training run. Written before training begins; timings go to a
//! separate stats file so reruns produce identical manifests.

use serde::{Deserialize, Serialize};
use std::path::Path;

use warpnerf::field::FieldConfig;
use warpnerf::model::SpaceConfig;
use warpnerf::renderer::{LossWeights, TrainConfig};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub git: String,
    pub dataset: String,
    pub seed: u64,
    pub space: SpaceConfig,
    pub field: FieldConfig,
    pub train: TrainConfig,
    pub weights: LossWeights,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunStats {
    pub build_seconds: f64,
    pub train_seconds: f64,
    pub steps: usize,
    pub warped_leaves: usize,
    pub octree_nodes: usize,
    pub final_recon: f64,
}
