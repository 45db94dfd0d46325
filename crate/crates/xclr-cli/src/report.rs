//! Evaluation report structures. Serialization is deterministic (fixed field
//! order, no timestamps), so re-running eval on the same checkpoint writes
//! byte-identical JSON.

use serde::{Deserialize, Serialize};
use xclr_core::eval::{ClassPairSimilarity, GraphMetrics, ProbeReport};

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeJson {
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub class_counts: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
}

impl From<&ProbeReport> for ProbeJson {
    fn from(report: &ProbeReport) -> Self {
        ProbeJson {
            accuracy: report.accuracy,
            per_class: report.per_class.clone(),
            class_counts: report.class_counts.clone(),
            initial_loss: report.initial_loss,
            final_loss: report.final_loss,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnRow {
    pub k: usize,
    pub subclass_accuracy: f64,
    pub superclass_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPairJson {
    pub n_classes: usize,
    pub samples_used: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

impl From<&ClassPairSimilarity> for ClassPairJson {
    fn from(pairs: &ClassPairSimilarity) -> Self {
        let n = pairs.n_classes();
        let values = (0..n)
            .map(|a| (0..n).map(|b| pairs.get(a, b)).collect())
            .collect();
        ClassPairJson {
            n_classes: n,
            samples_used: pairs.samples_used().to_vec(),
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMetricsJson {
    pub label_error: f64,
    pub intra_class_connectivity: f64,
    pub denominator_floored: bool,
}

impl From<&GraphMetrics> for GraphMetricsJson {
    fn from(m: &GraphMetrics) -> Self {
        GraphMetricsJson {
            label_error: m.label_error,
            intra_class_connectivity: m.intra_class_connectivity,
            denominator_floored: m.denominator_floored,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitJson {
    pub eval_seed: u64,
    pub probe_train: usize,
    pub probe_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointJson {
    pub layer_dims: Vec<usize>,
    pub backbone_layers: usize,
    pub epochs_completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbesJson {
    pub subclass: ProbeJson,
    pub superclass: ProbeJson,
}

/// Full evaluation output for one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub checkpoint: CheckpointJson,
    pub split: SplitJson,
    pub probes: ProbesJson,
    pub knn: Vec<KnnRow>,
    pub class_pairs: ClassPairJson,
    pub graph_metrics: GraphMetricsJson,
}

impl EvalReport {
    /// Every numeric field the report carries, for finiteness checks.
    pub fn all_values(&self) -> Vec<f64> {
        let mut out = vec![self.probes.subclass.accuracy, self.probes.superclass.accuracy];
        for probe in [&self.probes.subclass, &self.probes.superclass] {
            out.extend(&probe.per_class);
            out.extend(probe.initial_loss);
            out.extend(probe.final_loss);
        }
        for row in &self.knn {
            out.push(row.subclass_accuracy);
            out.push(row.superclass_accuracy);
        }
        for row in &self.class_pairs.values {
            out.extend(row);
        }
        out.push(self.graph_metrics.label_error);
        out.push(self.graph_metrics.intra_class_connectivity);
        out
    }
}
