//! Checkpoint directories: one weight and one bias XMAT per layer plus a
//! manifest recording the architecture, progress, and resolved config.
//! Stored values are f32, so a resumed run starts from slightly rounded
//! weights; epoch numbering and the data order are unaffected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xclr_core::encoder::{EncoderParams, Layer};
use xclr_core::numerics::Matrix;

use crate::config::ExperimentConfig;
use crate::dataset::{read_json, write_json};
use crate::error::{CliError, Result};

pub const CHECKPOINT_MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub layer_dims: Vec<usize>,
    pub backbone_layers: usize,
    pub epochs_completed: usize,
    pub config: ExperimentConfig,
}

fn weight_file(dir: &Path, layer: usize) -> PathBuf {
    dir.join(format!("layer{layer}_w.xmat"))
}

fn bias_file(dir: &Path, layer: usize) -> PathBuf {
    dir.join(format!("layer{layer}_b.xmat"))
}

pub fn save_checkpoint(
    dir: &Path,
    params: &EncoderParams,
    manifest: &CheckpointManifest,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for (i, layer) in params.layers().iter().enumerate() {
        crate::xmat::write_xmat(&weight_file(dir, i), &layer.weight)?;
        let bias = Matrix::from_vec(1, layer.bias.len(), layer.bias.clone())?;
        crate::xmat::write_xmat(&bias_file(dir, i), &bias)?;
    }
    write_json(&dir.join(CHECKPOINT_MANIFEST_FILE), manifest)
}

pub fn load_checkpoint(dir: &Path) -> Result<(EncoderParams, CheckpointManifest)> {
    let manifest_path = dir.join(CHECKPOINT_MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(CliError::Config(format!(
            "checkpoint {} has no {CHECKPOINT_MANIFEST_FILE}",
            dir.display()
        )));
    }
    let manifest: CheckpointManifest = read_json(&manifest_path)?;
    if manifest.layer_dims.len() < 2 {
        return Err(CliError::Manifest {
            path: manifest_path,
            detail: "layer_dims must list input and at least one layer".into(),
        });
    }
    let mut layers = Vec::with_capacity(manifest.layer_dims.len() - 1);
    for i in 0..manifest.layer_dims.len() - 1 {
        let weight = crate::xmat::read_xmat(&weight_file(dir, i))?;
        let bias_m = crate::xmat::read_xmat(&bias_file(dir, i))?;
        let expected = (manifest.layer_dims[i], manifest.layer_dims[i + 1]);
        if (weight.rows(), weight.cols()) != expected {
            return Err(CliError::Manifest {
                path: manifest_path,
                detail: format!(
                    "layer {i} weight is {}x{}, manifest says {}x{}",
                    weight.rows(),
                    weight.cols(),
                    expected.0,
                    expected.1
                ),
            });
        }
        if bias_m.rows() != 1 || bias_m.cols() != expected.1 {
            return Err(CliError::Manifest {
                path: manifest_path,
                detail: format!("layer {i} bias shape does not match the manifest"),
            });
        }
        layers.push(Layer {
            weight,
            bias: bias_m.data().to_vec(),
        });
    }
    let params = EncoderParams::from_layers(layers, manifest.backbone_layers)?;
    Ok((params, manifest))
}
