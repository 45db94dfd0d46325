//! On-disk dataset layout: `features.xmat`, `captions.xmat`, `labels.csv`,
//! and `manifest.json` describing how they were generated.

use std::path::Path;

use serde::{Deserialize, Serialize};
use xclr_core::synth::{gen_synthetic, synth_caption_embeddings, SyntheticDataset};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::labels::{load_labels_csv, write_labels_csv};
use crate::xmat::{read_xmat, write_xmat};

pub const FEATURES_FILE: &str = "features.xmat";
pub const CAPTIONS_FILE: &str = "captions.xmat";
pub const LABELS_FILE: &str = "labels.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub n_samples: usize,
    pub superclasses: usize,
    pub subs_per_super: usize,
    pub samples_per_sub: usize,
    pub feature_dim: usize,
    pub caption_dim: usize,
    pub caption_noise: f64,
    pub within_sigma: f64,
    pub sub_spread: f64,
    pub super_spread: f64,
    pub seed: u64,
}

/// Generates the dataset described by `config` and writes all four files
/// into `dir`. Identical configs produce byte-identical outputs.
pub fn generate_dataset(config: &ExperimentConfig, dir: &Path) -> Result<DatasetManifest> {
    let mut dataset = gen_synthetic(
        config.superclasses,
        config.subs_per_super,
        config.samples_per_sub,
        config.feature_dim,
        config.separation(),
        config.data_seed,
    )?;
    // Captions draw from their own seed so feature and caption noise stay
    // decoupled when sweeping one of them.
    let captions = synth_caption_embeddings(
        &dataset,
        config.caption_dim,
        config.caption_noise,
        config.data_seed.wrapping_add(1),
    )?;
    dataset.set_captions(captions)?;

    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_xmat(&dir.join(FEATURES_FILE), dataset.features())?;
    write_xmat(&dir.join(CAPTIONS_FILE), dataset.captions().unwrap())?;
    write_labels_csv(
        &dir.join(LABELS_FILE),
        dataset.subclass(),
        dataset.superclass(),
    )?;
    let manifest = DatasetManifest {
        n_samples: dataset.n(),
        superclasses: config.superclasses,
        subs_per_super: config.subs_per_super,
        samples_per_sub: config.samples_per_sub,
        feature_dim: config.feature_dim,
        caption_dim: config.caption_dim,
        caption_noise: config.caption_noise,
        within_sigma: config.within_sigma,
        sub_spread: config.sub_spread,
        super_spread: config.super_spread,
        seed: config.data_seed,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Loads a dataset directory produced by [`generate_dataset`].
pub fn load_dataset(dir: &Path) -> Result<(SyntheticDataset, DatasetManifest)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = read_json(&manifest_path)?;
    let features = read_xmat(&dir.join(FEATURES_FILE))?;
    let (subclass, superclass) = load_labels_csv(&dir.join(LABELS_FILE))?;
    if features.rows() != manifest.n_samples || subclass.len() != manifest.n_samples {
        return Err(CliError::Manifest {
            path: manifest_path,
            detail: format!(
                "manifest says {} samples, features has {} rows and labels {} rows",
                manifest.n_samples,
                features.rows(),
                subclass.len()
            ),
        });
    }
    let n_subclasses = manifest.superclasses * manifest.subs_per_super;
    let mut dataset = SyntheticDataset::new(
        features,
        subclass,
        superclass,
        n_subclasses,
        manifest.superclasses,
    )?;
    let captions = read_xmat(&dir.join(CAPTIONS_FILE))?;
    dataset.set_captions(captions)?;
    Ok((dataset, manifest))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Manifest {
        path: path.into(),
        detail: e.to_string(),
    })
}
