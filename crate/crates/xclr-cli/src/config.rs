//! Experiment configuration: one JSON document covering dataset generation,
//! training, and evaluation. Command-line flags override individual fields.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use xclr_core::encoder::{LrSchedule, OptimizerKind, TrainConfig};
use xclr_core::synth::SeparationParams;

use crate::error::{CliError, Result};

/// Objectives `simclr` and `supcon` pin the target temperature here; the
/// competing-entry weights underflow to zero and the targets become exactly
/// one-hot (or uniform over the class).
pub const LIMIT_TAU_S: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Xclr,
    Simclr,
    Supcon,
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "xclr" => Ok(Objective::Xclr),
            "simclr" => Ok(Objective::Simclr),
            "supcon" => Ok(Objective::Supcon),
            other => Err(format!(
                "unknown objective {other:?}, expected xclr, simclr, or supcon"
            )),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Xclr => "xclr",
            Objective::Simclr => "simclr",
            Objective::Supcon => "supcon",
        })
    }
}

/// Where batch targets come from when the objective is `xclr`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GraphChoice {
    Class,
    Caption,
    Hierarchy,
    RandomClass,
    RandomSample,
    Augmentation,
    Table(PathBuf),
}

impl FromStr for GraphChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "class" => Ok(GraphChoice::Class),
            "caption" => Ok(GraphChoice::Caption),
            "hierarchy" => Ok(GraphChoice::Hierarchy),
            "random-class" => Ok(GraphChoice::RandomClass),
            "random-sample" => Ok(GraphChoice::RandomSample),
            "augmentation" => Ok(GraphChoice::Augmentation),
            other => match other.strip_prefix("table:") {
                Some(path) if !path.is_empty() => Ok(GraphChoice::Table(PathBuf::from(path))),
                _ => Err(format!(
                    "unknown graph {other:?}, expected class, caption, hierarchy, \
                     random-class, random-sample, augmentation, or table:<path>"
                )),
            },
        }
    }
}

impl fmt::Display for GraphChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphChoice::Class => f.write_str("class"),
            GraphChoice::Caption => f.write_str("caption"),
            GraphChoice::Hierarchy => f.write_str("hierarchy"),
            GraphChoice::RandomClass => f.write_str("random-class"),
            GraphChoice::RandomSample => f.write_str("random-sample"),
            GraphChoice::Augmentation => f.write_str("augmentation"),
            GraphChoice::Table(path) => write!(f, "table:{}", path.display()),
        }
    }
}

impl TryFrom<String> for GraphChoice {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<GraphChoice> for String {
    fn from(g: GraphChoice) -> String {
        g.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerChoice {
    Sgd,
    Lars,
}

impl FromStr for OptimizerChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "sgd" => Ok(OptimizerChoice::Sgd),
            "lars" => Ok(OptimizerChoice::Lars),
            other => Err(format!("unknown optimizer {other:?}, expected sgd or lars")),
        }
    }
}

impl fmt::Display for OptimizerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerChoice::Sgd => "sgd",
            OptimizerChoice::Lars => "lars",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleChoice {
    Constant,
    Cosine,
}

impl FromStr for ScheduleChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "constant" => Ok(ScheduleChoice::Constant),
            "cosine" => Ok(ScheduleChoice::Cosine),
            other => Err(format!(
                "unknown schedule {other:?}, expected constant or cosine"
            )),
        }
    }
}

impl fmt::Display for ScheduleChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleChoice::Constant => "constant",
            ScheduleChoice::Cosine => "cosine",
        })
    }
}

/// Full experiment description. Every field has a desk-scale default, so an
/// empty JSON object `{}` is a valid config. Unknown keys are rejected.
///
/// Desk defaults (batch 64, 30 epochs, lr 0.05) finish in seconds on one
/// core; the large-scale settings (batch 1024, 100 epochs, lr 0.075) are
/// reachable through the same fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    // Dataset generation.
    pub superclasses: usize,
    pub subs_per_super: usize,
    pub samples_per_sub: usize,
    pub feature_dim: usize,
    pub caption_dim: usize,
    pub caption_noise: f64,
    pub within_sigma: f64,
    pub sub_spread: f64,
    pub super_spread: f64,
    pub data_seed: u64,
    // Training.
    pub objective: Objective,
    pub graph: GraphChoice,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerChoice,
    pub schedule: ScheduleChoice,
    pub tau: f64,
    pub tau_s: f64,
    pub noise_sigma: f64,
    pub dropout_prob: f64,
    pub seed: u64,
    // Evaluation.
    pub knn_ks: Vec<usize>,
    pub probe_iterations: usize,
    pub probe_learning_rate: f64,
    pub probe_l2: f64,
    pub pair_samples: usize,
    pub eval_seed: u64,
    pub histogram_bins: usize,
    // Locations; commands require these as flags when absent here.
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let sep = SeparationParams::default();
        ExperimentConfig {
            superclasses: xclr_core::synth::DEFAULT_SUPERCLASSES,
            subs_per_super: xclr_core::synth::DEFAULT_SUBS_PER_SUPER,
            samples_per_sub: xclr_core::synth::DEFAULT_SAMPLES_PER_SUB,
            feature_dim: xclr_core::synth::DEFAULT_FEATURE_DIM,
            caption_dim: xclr_core::synth::DEFAULT_CAPTION_DIM,
            caption_noise: xclr_core::synth::DEFAULT_CAPTION_NOISE,
            within_sigma: sep.within_sigma,
            sub_spread: sep.sub_spread,
            super_spread: sep.super_spread,
            data_seed: 0,
            objective: Objective::Xclr,
            graph: GraphChoice::Caption,
            batch_size: train.batch_size,
            epochs: train.epochs,
            learning_rate: train.learning_rate,
            momentum: train.momentum,
            weight_decay: train.weight_decay,
            optimizer: OptimizerChoice::Sgd,
            schedule: ScheduleChoice::Constant,
            tau: train.tau,
            tau_s: train.tau_s,
            noise_sigma: train.noise_sigma,
            dropout_prob: train.dropout_prob,
            seed: train.seed,
            knn_ks: vec![1, 5, 10, 20],
            probe_iterations: 500,
            probe_learning_rate: 0.1,
            probe_l2: 0.0,
            pair_samples: 200,
            eval_seed: 0,
            histogram_bins: 40,
            data_dir: None,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses a JSON config file. Unknown keys fail here.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!("{}: {e}", path.display()))
        })
    }

    /// Checks field ranges and that referenced paths exist.
    pub fn validate(&self) -> Result<()> {
        if self.superclasses == 0 || self.subs_per_super == 0 || self.samples_per_sub == 0 {
            return Err(CliError::Config(
                "superclasses, subs_per_super, and samples_per_sub must be >= 1".into(),
            ));
        }
        if self.feature_dim < 2 || self.caption_dim < 2 {
            return Err(CliError::Config(
                "feature_dim and caption_dim must be >= 2".into(),
            ));
        }
        if !self.caption_noise.is_finite() || self.caption_noise < 0.0 {
            return Err(CliError::Config("caption_noise must be >= 0".into()));
        }
        self.separation()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.train_config()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.knn_ks.is_empty() || self.knn_ks.contains(&0) {
            return Err(CliError::Config("knn_ks must list values >= 1".into()));
        }
        if self.probe_iterations == 0 {
            return Err(CliError::Config("probe_iterations must be >= 1".into()));
        }
        if !self.probe_learning_rate.is_finite() || self.probe_learning_rate <= 0.0 {
            return Err(CliError::Config("probe_learning_rate must be > 0".into()));
        }
        if !self.probe_l2.is_finite() || self.probe_l2 < 0.0 {
            return Err(CliError::Config("probe_l2 must be >= 0".into()));
        }
        if self.pair_samples == 0 {
            return Err(CliError::Config("pair_samples must be >= 1".into()));
        }
        if self.histogram_bins == 0 {
            return Err(CliError::Config("histogram_bins must be >= 1".into()));
        }
        if let GraphChoice::Table(path) = &self.graph {
            if !path.is_file() {
                return Err(CliError::Config(format!(
                    "graph table {} does not exist",
                    path.display()
                )));
            }
        }
        if let Some(dir) = &self.data_dir {
            if !dir.is_dir() {
                return Err(CliError::Config(format!(
                    "data_dir {} does not exist",
                    dir.display()
                )));
            }
        }
        Ok(())
    }

    pub fn separation(&self) -> SeparationParams {
        SeparationParams {
            within_sigma: self.within_sigma,
            sub_spread: self.sub_spread,
            super_spread: self.super_spread,
        }
    }

    /// Training hyperparameters with the objective coupling applied:
    /// `simclr` and `supcon` are the small-temperature limits, so they run
    /// at `tau_s = LIMIT_TAU_S` regardless of the configured value.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            optimizer: match self.optimizer {
                OptimizerChoice::Sgd => OptimizerKind::SgdMomentum,
                OptimizerChoice::Lars => OptimizerKind::Lars,
            },
            schedule: match self.schedule {
                ScheduleChoice::Constant => LrSchedule::Constant,
                ScheduleChoice::Cosine => LrSchedule::Cosine,
            },
            tau: self.tau,
            tau_s: match self.objective {
                Objective::Xclr => self.tau_s,
                Objective::Simclr | Objective::Supcon => LIMIT_TAU_S,
            },
            noise_sigma: self.noise_sigma,
            dropout_prob: self.dropout_prob,
            seed: self.seed,
        }
    }

    pub fn probe_config(&self) -> xclr_core::eval::ProbeConfig {
        xclr_core::eval::ProbeConfig {
            iterations: self.probe_iterations,
            learning_rate: self.probe_learning_rate,
            l2: self.probe_l2,
        }
    }
}
