//! Versioned binary checkpoints: magic, JSON header (spatial model and
//! configs), then the trainable parameters as little-endian f32. Parameters
//! train in f64 and are quantized to f32 on save.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::FieldConfig;
use crate::model::SpaceModel;
use crate::renderer::{LossWeights, TrainConfig, TrainState};

const MAGIC: &[u8; 8] = b"WNERFCKP";
const VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    model: SpaceModel,
    field_cfg: FieldConfig,
    train_cfg: TrainConfig,
    weights: LossWeights,
    step: usize,
    param_count: u64,
}

/// Everything needed to render or evaluate from disk.
pub struct Checkpoint {
    pub model: SpaceModel,
    pub field_cfg: FieldConfig,
    pub train_cfg: TrainConfig,
    pub weights: LossWeights,
    pub step: usize,
    pub params: Vec<f64>,
}

pub fn save_checkpoint(
    path: &Path,
    state: &TrainState,
    train_cfg: &TrainConfig,
    weights: &LossWeights,
) -> Result<()> {
    let header = Header {
        model: state.model.clone(),
        field_cfg: state.field_cfg.clone(),
        train_cfg: train_cfg.clone(),
        weights: *weights,
        step: state.step,
        param_count: state.params.len() as u64,
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(header_json.len() as u64).to_le_bytes())?;
    out.write_all(&header_json)?;
    for p in &state.params {
        out.write_all(&(*p as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let mut word = [0u8; 4];
    file.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut len8 = [0u8; 8];
    file.read_exact(&mut len8)?;
    let header_len = u64::from_le_bytes(len8) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
    let expected = header.field_cfg.layout().total as u64;
    if header.param_count != expected {
        return Err(Error::Checkpoint(format!(
            "param count {} does not match the config ({expected})",
            header.param_count
        )));
    }
    let mut params = Vec::with_capacity(header.param_count as usize);
    let mut buf = [0u8; 4];
    for _ in 0..header.param_count {
        file.read_exact(&mut buf)?;
        params.push(f32::from_le_bytes(buf) as f64);
    }
    Ok(Checkpoint {
        model: header.model,
        field_cfg: header.field_cfg,
        train_cfg: header.train_cfg,
        weights: header.weights,
        step: header.step,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldConfig, HashGridConfig, HashMode};
    use crate::geometry::Camera;
    use crate::model::{SpaceConfig, SpaceModel};
    use nalgebra::Vector3;

    fn tiny_state() -> (TrainState, TrainConfig, LossWeights) {
        let cams: Vec<Camera> = (0..4)
            .map(|i| {
                let a = i as f64 / 4.0 * std::f64::consts::TAU;
                Camera::look_at(
                    Vector3::new(a.cos(), 0.2, a.sin()),
                    Vector3::zeros(),
                    Vector3::y(),
                    30.0,
                    30.0,
                    32,
                    32,
                    0.05,
                )
                .unwrap()
            })
            .collect();
        let model = SpaceModel::build(
            &cams,
            &SpaceConfig {
                max_depth: 3,
                lattice: 8,
                ..SpaceConfig::default()
            },
        )
        .unwrap();
        let field_cfg = FieldConfig {
            grid: HashGridConfig {
                levels: 4,
                table_len: 256,
                feat_dim: 2,
                base_res: 4,
                max_res: 32,
                mode: HashMode::Single,
            },
            hidden: 8,
            density_out: 16,
            sh_dim: 16,
        };
        let state = TrainState::new(model, field_cfg, 7);
        (state, TrainConfig::default(), LossWeights::default())
    }

    #[test]
    fn roundtrip_at_f32_precision() {
        let (state, cfg, weights) = tiny_state();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(&path, &state, &cfg, &weights).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.step, state.step);
        assert_eq!(back.params.len(), state.params.len());
        for (a, b) in state.params.iter().zip(&back.params) {
            assert_eq!(*a as f32, *b as f32, "f32 quantization must round-trip");
        }
        assert_eq!(back.model.warps.len(), state.model.warps.len());
        assert_eq!(back.model.tree.nodes.len(), state.model.tree.nodes.len());
    }

    #[test]
    fn rejects_bad_magic() {
        let (state, cfg, weights) = tiny_state();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save_checkpoint(&path, &state, &cfg, &weights).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::Checkpoint(_))
        ));
    }
}
