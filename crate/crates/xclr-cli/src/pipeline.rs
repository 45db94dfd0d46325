//! Command implementations, free of argument parsing so tests can drive
//! them directly.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use xclr_core::encoder::{
    default_layer_dims, forward, train_from, EncoderParams, EpochMetrics,
    DEFAULT_BACKBONE_LAYERS,
};
use xclr_core::eval::{
    class_pair_similarity, even_split, graph_metrics, knn_accuracy, linear_probe,
    similarity_histogram, SimilarityHistogram,
};
use xclr_core::graph::{
    build_caption_graph, build_class_graph, build_random_graph, build_hierarchy_graph,
    diagonal_mass, table_lookup_graph, CaptionSource, ClassSimilarityTable, GraphSource,
    HierarchyTree, InstanceSource, RandomGraphMode, SimilarityGraph,
};
use xclr_core::numerics::Matrix;
use xclr_core::synth::{subsample_indices_per_class, subsample_per_class, SyntheticDataset};

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest};
use crate::config::{ExperimentConfig, GraphChoice, Objective};
use crate::dataset::{load_dataset, write_json};
use crate::error::{CliError, Result};
use crate::report::{
    CheckpointJson, EvalReport, KnnRow, ProbesJson, SplitJson,
};
use crate::xmat::read_xmat;

pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_FILE: &str = "report.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const DIAGONAL_MASS_FILE: &str = "diagonal_mass.csv";
pub const CLASS_PAIRS_FILE: &str = "class_pairs.csv";

/// Temperature grid for the diagonal-mass curve file.
pub const ANALYZE_TAU_S_GRID: [f64; 6] = [0.01, 0.03, 0.1, 0.3, 1.0, 3.0];
/// Half-batch grid for the diagonal-mass curve file.
pub const ANALYZE_HALF_BATCH_GRID: [usize; 5] = [2, 8, 64, 256, 1024];

/// Owned similarity source selected from objective and graph settings.
pub enum SourceBox {
    Caption(CaptionSource),
    Instance(InstanceSource),
    Dense(SimilarityGraph),
}

impl GraphSource for SourceBox {
    fn n_samples(&self) -> usize {
        match self {
            SourceBox::Caption(s) => s.n_samples(),
            SourceBox::Instance(s) => s.n_samples(),
            SourceBox::Dense(s) => s.n_samples(),
        }
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        match self {
            SourceBox::Caption(s) => s.similarity(i, j),
            SourceBox::Instance(s) => s.similarity(i, j),
            SourceBox::Dense(s) => s.similarity(i, j),
        }
    }
}

/// Picks the training-target source. The objective wins over the graph
/// setting: `simclr` always trains against instance identity and `supcon`
/// against the subclass graph; only `xclr` honors `graph`.
pub fn build_source(
    dataset: &SyntheticDataset,
    objective: Objective,
    graph: &GraphChoice,
    seed: u64,
) -> Result<SourceBox> {
    let n = dataset.n();
    match objective {
        Objective::Simclr => Ok(SourceBox::Instance(InstanceSource::new(n)?)),
        Objective::Supcon => Ok(SourceBox::Dense(build_class_graph(dataset.subclass())?)),
        Objective::Xclr => match graph {
            GraphChoice::Class => Ok(SourceBox::Dense(build_class_graph(dataset.subclass())?)),
            GraphChoice::Caption => {
                let captions = dataset
                    .captions()
                    .ok_or_else(|| CliError::Config("dataset has no captions".into()))?;
                Ok(SourceBox::Caption(CaptionSource::new(captions)?))
            }
            GraphChoice::Hierarchy => Ok(SourceBox::Dense(hierarchy_graph_for(dataset)?)),
            GraphChoice::RandomClass => Ok(SourceBox::Dense(build_random_graph(
                n,
                Some(dataset.subclass()),
                RandomGraphMode::PerClassPair,
                seed,
            )?)),
            GraphChoice::RandomSample => Ok(SourceBox::Dense(build_random_graph(
                n,
                None,
                RandomGraphMode::PerSamplePair,
                seed,
            )?)),
            // Across originals the view graph is the identity; the sibling
            // view is pinned when targets are built, never looked up here.
            GraphChoice::Augmentation => Ok(SourceBox::Instance(InstanceSource::new(n)?)),
            GraphChoice::Table(path) => {
                let table = ClassSimilarityTable::from_matrix(read_xmat(path)?)?;
                Ok(SourceBox::Dense(table_lookup_graph(
                    &table,
                    dataset.subclass(),
                )?))
            }
        },
    }
}

/// Two-level taxonomy graph: subclasses are leaves under their superclass,
/// superclasses hang off a single root.
pub fn hierarchy_graph_for(dataset: &SyntheticDataset) -> Result<SimilarityGraph> {
    let parents = dataset.subclass_parents()?;
    let n_super = dataset.n_superclasses() as u32;
    let mut edges = Vec::new();
    for s in 0..n_super {
        edges.push((1 + s, 0u32));
    }
    let mut leaves = Vec::with_capacity(parents.len());
    for (k, &p) in parents.iter().enumerate() {
        let leaf = 1 + n_super + k as u32;
        edges.push((leaf, 1 + p as u32));
        leaves.push(leaf);
    }
    let tree = HierarchyTree::new(&edges, &leaves)?;
    Ok(build_hierarchy_graph(&tree, dataset.subclass())?)
}

/// Dense graph over all samples for inspection commands.
pub fn dense_graph(
    dataset: &SyntheticDataset,
    choice: &GraphChoice,
    seed: u64,
) -> Result<SimilarityGraph> {
    let n = dataset.n();
    match choice {
        GraphChoice::Class => Ok(build_class_graph(dataset.subclass())?),
        GraphChoice::Caption => {
            let captions = dataset
                .captions()
                .ok_or_else(|| CliError::Config("dataset has no captions".into()))?;
            Ok(build_caption_graph(captions)?)
        }
        GraphChoice::Hierarchy => hierarchy_graph_for(dataset),
        GraphChoice::RandomClass => Ok(build_random_graph(
            n,
            Some(dataset.subclass()),
            RandomGraphMode::PerClassPair,
            seed,
        )?),
        GraphChoice::RandomSample => Ok(build_random_graph(
            n,
            None,
            RandomGraphMode::PerSamplePair,
            seed,
        )?),
        GraphChoice::Augmentation => {
            let mut m = Matrix::zeros(n, n);
            for i in 0..n {
                m.set(i, i, 1.0);
            }
            Ok(SimilarityGraph::from_matrix(m)?)
        }
        GraphChoice::Table(path) => {
            let table = ClassSimilarityTable::from_matrix(read_xmat(path)?)?;
            Ok(table_lookup_graph(&table, dataset.subclass())?)
        }
    }
}

pub fn select_rows(m: &Matrix, idx: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(idx.len(), m.cols());
    for (k, &i) in idx.iter().enumerate() {
        out.row_mut(k).copy_from_slice(m.row(i));
    }
    out
}

fn select_labels(labels: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| labels[i]).collect()
}

/// Elements present in both inputs; each must be strictly ascending.
fn sorted_intersection(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Projector-free representation of every sample; all evaluation reads
/// this space.
pub fn backbone_features(params: &EncoderParams, features: &Matrix) -> Result<Matrix> {
    let (backbone, _, _) = forward(params, features)?;
    Ok(backbone)
}

#[derive(Debug)]
pub struct TrainArtifacts {
    pub history: Vec<EpochMetrics>,
    pub wall_seconds: f64,
}

/// Trains (or resumes) an encoder and writes `metrics.csv` plus a checkpoint
/// into `out_dir`. The metrics file holds only epoch numbers and mean losses
/// so identical runs write identical bytes; wall time is returned for the
/// console instead.
pub fn run_train(
    config: &ExperimentConfig,
    data_dir: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainArtifacts> {
    config.validate()?;
    let (dataset, _) = load_dataset(data_dir)?;
    let train_config = config.train_config();
    if train_config.batch_size > dataset.n() {
        return Err(CliError::Config(format!(
            "batch_size {} exceeds the dataset's {} samples",
            train_config.batch_size,
            dataset.n()
        )));
    }
    let source = build_source(&dataset, config.objective, &config.graph, config.seed)?;
    let (params, start_epoch) = match resume {
        Some(dir) => {
            let (params, manifest) = load_checkpoint(dir)?;
            if params.input_dim() != dataset.dim() {
                return Err(CliError::Config(format!(
                    "checkpoint expects {}-dim input, dataset provides {}",
                    params.input_dim(),
                    dataset.dim()
                )));
            }
            if manifest.epochs_completed >= train_config.epochs {
                return Err(CliError::Config(format!(
                    "checkpoint already covers {} epochs; set epochs above that to continue",
                    manifest.epochs_completed
                )));
            }
            (params, manifest.epochs_completed)
        }
        None => (
            EncoderParams::he_init(
                &default_layer_dims(dataset.dim()),
                DEFAULT_BACKBONE_LAYERS,
                config.seed,
            )?,
            0,
        ),
    };

    let started = Instant::now();
    let output = train_from(params, start_epoch, dataset.features(), &source, &train_config)?;
    let wall_seconds = started.elapsed().as_secs_f64();

    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    write_metrics_csv(&out_dir.join(METRICS_FILE), &output.history)?;
    let manifest = CheckpointManifest {
        layer_dims: output.params.layer_dims(),
        backbone_layers: output.params.backbone_layers(),
        epochs_completed: train_config.epochs,
        config: config.clone(),
    };
    save_checkpoint(out_dir, &output.params, &manifest)?;
    Ok(TrainArtifacts {
        history: output.history,
        wall_seconds,
    })
}

/// Epoch numbers are written 1-based; a resumed run's rows pick up where the
/// checkpoint stopped.
fn write_metrics_csv(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    writer
        .write_record(["epoch", "mean_loss"])
        .map_err(|e| csv_io(path, e))?;
    for m in history {
        writer
            .write_record([(m.epoch + 1).to_string(), m.mean_loss.to_string()])
            .map_err(|e| csv_io(path, e))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}

fn csv_io(path: &Path, error: csv::Error) -> CliError {
    match error.into_kind() {
        csv::ErrorKind::Io(e) => CliError::io(path, e),
        kind => CliError::Config(format!("{}: {kind:?}", path.display())),
    }
}

/// Evaluates a checkpoint: linear probes at both label levels, a KNN sweep,
/// the class-pair similarity table, and graph diagnostics, all computed on
/// backbone features.
pub fn run_eval(
    config: &ExperimentConfig,
    data_dir: &Path,
    checkpoint_dir: &Path,
) -> Result<EvalReport> {
    config.validate()?;
    let (dataset, _) = load_dataset(data_dir)?;
    let (params, ckpt) = load_checkpoint(checkpoint_dir)?;
    if params.input_dim() != dataset.dim() {
        return Err(CliError::Config(format!(
            "checkpoint expects {}-dim input, dataset provides {}",
            params.input_dim(),
            dataset.dim()
        )));
    }
    let backbone = backbone_features(&params, dataset.features())?;
    let checkpoint_json = CheckpointJson {
        layer_dims: ckpt.layer_dims.clone(),
        backbone_layers: ckpt.backbone_layers,
        epochs_completed: ckpt.epochs_completed,
    };
    evaluate_features(config, &dataset, &backbone, checkpoint_json)
}

/// Shared by `run_eval` and tests that evaluate raw features.
pub fn evaluate_features(
    config: &ExperimentConfig,
    dataset: &SyntheticDataset,
    features: &Matrix,
    checkpoint: CheckpointJson,
) -> Result<EvalReport> {
    let n = dataset.n();
    let (train_idx, test_idx) = even_split(n, config.eval_seed);
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(CliError::Config(
            "dataset is too small for an even probe split".into(),
        ));
    }
    for &k in &config.knn_ks {
        if k > train_idx.len() {
            return Err(CliError::Config(format!(
                "knn k {k} exceeds the probe training half ({} rows)",
                train_idx.len()
            )));
        }
    }
    let train_feats = select_rows(features, &train_idx);
    let test_feats = select_rows(features, &test_idx);
    let train_sub = select_labels(dataset.subclass(), &train_idx);
    let test_sub = select_labels(dataset.subclass(), &test_idx);
    let train_super = select_labels(dataset.superclass(), &train_idx);
    let test_super = select_labels(dataset.superclass(), &test_idx);

    let probe_config = config.probe_config();
    let subclass_probe = linear_probe(
        &train_feats,
        &train_sub,
        &test_feats,
        &test_sub,
        probe_config,
    )?;
    let superclass_probe = linear_probe(
        &train_feats,
        &train_super,
        &test_feats,
        &test_super,
        probe_config,
    )?;

    let mut knn = Vec::with_capacity(config.knn_ks.len());
    for &k in &config.knn_ks {
        let sub = knn_accuracy(&train_feats, &train_sub, &test_feats, &test_sub, k)?;
        let sup = knn_accuracy(&train_feats, &train_super, &test_feats, &test_super, k)?;
        knn.push(KnnRow {
            k,
            subclass_accuracy: sub.accuracy,
            superclass_accuracy: sup.accuracy,
        });
    }

    let pairs = class_pair_similarity(
        features,
        dataset.subclass(),
        config.pair_samples,
        config.eval_seed,
    )?;
    let metrics = graph_metrics(features, dataset.subclass())?;

    let report = EvalReport {
        config: config.clone(),
        checkpoint,
        split: SplitJson {
            eval_seed: config.eval_seed,
            probe_train: train_idx.len(),
            probe_test: test_idx.len(),
        },
        probes: ProbesJson {
            subclass: (&subclass_probe).into(),
            superclass: (&superclass_probe).into(),
        },
        knn,
        class_pairs: (&pairs).into(),
        graph_metrics: (&metrics).into(),
    };
    if report.all_values().iter().any(|v| !v.is_finite()) {
        return Err(xclr_core::Error::NonFinite("evaluation report").into());
    }
    Ok(report)
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    write_json(path, report)
}

pub struct AnalyzeArtifacts {
    pub histogram: SimilarityHistogram,
    pub files: Vec<PathBuf>,
}

/// Writes three inspection CSVs into `out_dir`: the strict-upper-triangle
/// similarity histogram of the configured graph, sibling-mass curves over a
/// temperature and batch grid, and the class-pair similarity table (from
/// checkpoint backbone features when given, caption embeddings otherwise).
pub fn run_analyze(
    config: &ExperimentConfig,
    data_dir: &Path,
    checkpoint: Option<&Path>,
    offdiag: f64,
    out_dir: &Path,
) -> Result<AnalyzeArtifacts> {
    config.validate()?;
    if !offdiag.is_finite() || !(-1.0..=1.0).contains(&offdiag) {
        return Err(CliError::Config("offdiag must lie in [-1, 1]".into()));
    }
    let (dataset, _) = load_dataset(data_dir)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut files = Vec::new();

    let graph = dense_graph(&dataset, &config.graph, config.seed)?;
    let histogram = similarity_histogram(&graph, config.histogram_bins)?;
    let histogram_path = out_dir.join(HISTOGRAM_FILE);
    {
        let mut writer = csv::Writer::from_path(&histogram_path)
            .map_err(|e| csv_io(&histogram_path, e))?;
        writer
            .write_record(["bin_start", "bin_end", "count"])
            .map_err(|e| csv_io(&histogram_path, e))?;
        for (b, &count) in histogram.counts.iter().enumerate() {
            writer
                .write_record([
                    histogram.edges[b].to_string(),
                    histogram.edges[b + 1].to_string(),
                    count.to_string(),
                ])
                .map_err(|e| csv_io(&histogram_path, e))?;
        }
        writer.flush().map_err(|e| CliError::io(&histogram_path, e))?;
    }
    files.push(histogram_path);

    let mass_path = out_dir.join(DIAGONAL_MASS_FILE);
    {
        let mut writer =
            csv::Writer::from_path(&mass_path).map_err(|e| csv_io(&mass_path, e))?;
        writer
            .write_record(["tau_s", "half_batch", "offdiag", "mass"])
            .map_err(|e| csv_io(&mass_path, e))?;
        for &tau_s in &ANALYZE_TAU_S_GRID {
            for &half in &ANALYZE_HALF_BATCH_GRID {
                let mass = diagonal_mass(tau_s, half, offdiag)?;
                writer
                    .write_record([
                        tau_s.to_string(),
                        half.to_string(),
                        offdiag.to_string(),
                        mass.to_string(),
                    ])
                    .map_err(|e| csv_io(&mass_path, e))?;
            }
        }
        writer.flush().map_err(|e| CliError::io(&mass_path, e))?;
    }
    files.push(mass_path);

    let backbone;
    let pair_feats: &Matrix = match checkpoint {
        Some(dir) => {
            let (params, _) = load_checkpoint(dir)?;
            if params.input_dim() != dataset.dim() {
                return Err(CliError::Config(format!(
                    "checkpoint expects {}-dim input, dataset provides {}",
                    params.input_dim(),
                    dataset.dim()
                )));
            }
            backbone = backbone_features(&params, dataset.features())?;
            &backbone
        }
        None => dataset
            .captions()
            .ok_or_else(|| CliError::Config("dataset has no captions".into()))?,
    };
    let pairs = class_pair_similarity(
        pair_feats,
        dataset.subclass(),
        config.pair_samples,
        config.eval_seed,
    )?;
    let pairs_path = out_dir.join(CLASS_PAIRS_FILE);
    {
        let mut writer =
            csv::Writer::from_path(&pairs_path).map_err(|e| csv_io(&pairs_path, e))?;
        let mut header = vec!["class".to_string()];
        header.extend((0..pairs.n_classes()).map(|c| c.to_string()));
        writer
            .write_record(&header)
            .map_err(|e| csv_io(&pairs_path, e))?;
        for a in 0..pairs.n_classes() {
            let mut row = vec![a.to_string()];
            row.extend((0..pairs.n_classes()).map(|b| pairs.get(a, b).to_string()));
            writer
                .write_record(&row)
                .map_err(|e| csv_io(&pairs_path, e))?;
        }
        writer.flush().map_err(|e| CliError::io(&pairs_path, e))?;
    }
    files.push(pairs_path);

    Ok(AnalyzeArtifacts { histogram, files })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    TauS,
    SamplesPerClass,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "tau-s" => Ok(SweepAxis::TauS),
            "samples-per-class" => Ok(SweepAxis::SamplesPerClass),
            other => Err(format!(
                "unknown sweep axis {other:?}, expected tau-s or samples-per-class"
            )),
        }
    }
}

impl std::fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SweepAxis::TauS => "tau-s",
            SweepAxis::SamplesPerClass => "samples-per-class",
        })
    }
}

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub axis: SweepAxis,
    /// Axis values; `None` selects the axis defaults.
    pub values: Option<Vec<String>>,
    /// Objectives compared per value; `None` selects the axis defaults.
    pub objectives: Option<Vec<Objective>>,
    pub seeds: usize,
    /// Optimizer-step budget per run. Epoch counts are derived from it so
    /// runs on subsampled data see as many updates as runs on full data.
    pub train_steps: usize,
    pub knn_k: usize,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub objective: String,
    pub seed: u64,
    pub ssl_samples: usize,
    pub labeled_samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub subclass_probe: f64,
    pub superclass_probe: f64,
    pub subclass_knn: f64,
    pub superclass_knn: f64,
}

enum AxisValue {
    TauS(f64),
    SamplesPerClass(usize),
}

fn parse_axis_values(options: &SweepOptions) -> Result<Vec<(String, AxisValue)>> {
    let raw: Vec<String> = match &options.values {
        Some(values) if !values.is_empty() => values.clone(),
        Some(_) => return Err(CliError::Config("values list is empty".into())),
        None => match options.axis {
            SweepAxis::TauS => ["0.01", "0.05", "0.1", "0.3"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            SweepAxis::SamplesPerClass => ["5", "10", "50", "200"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        },
    };
    raw.iter()
        .map(|text| match options.axis {
            SweepAxis::TauS => {
                let v: f64 = text.trim().parse().map_err(|_| {
                    CliError::Config(format!("tau-s value {text:?} is not a number"))
                })?;
                if !v.is_finite() || v <= 0.0 {
                    return Err(CliError::Config(format!(
                        "tau-s value {v} must be positive"
                    )));
                }
                Ok((v.to_string(), AxisValue::TauS(v)))
            }
            SweepAxis::SamplesPerClass => {
                let v: usize = text.trim().parse().map_err(|_| {
                    CliError::Config(format!(
                        "samples-per-class value {text:?} is not a positive integer"
                    ))
                })?;
                if v == 0 {
                    return Err(CliError::Config(
                        "samples-per-class values must be >= 1".into(),
                    ));
                }
                Ok((v.to_string(), AxisValue::SamplesPerClass(v)))
            }
        })
        .collect()
}

/// Trains and evaluates one encoder per (value, objective, seed) cell and
/// writes one CSV row each. Seeds pair up across objectives: row seed is
/// `config.seed + seed_index`, so compared runs share data subsets and
/// augmentation draws.
///
/// Probes respect the run's data budget: labels come from the SSL subset's
/// share of the split's train half, while the test half always spans the
/// full dataset. At full subsampling the protocol matches `run_eval`.
pub fn run_sweep(
    config: &ExperimentConfig,
    data_dir: &Path,
    options: &SweepOptions,
    out_csv: &Path,
) -> Result<Vec<SweepRow>> {
    config.validate()?;
    if options.seeds == 0 {
        return Err(CliError::Config("seeds must be >= 1".into()));
    }
    if options.train_steps == 0 {
        return Err(CliError::Config("train-steps must be >= 1".into()));
    }
    if options.knn_k == 0 {
        return Err(CliError::Config("knn-k must be >= 1".into()));
    }
    let values = parse_axis_values(options)?;
    let objectives = match &options.objectives {
        Some(list) if !list.is_empty() => list.clone(),
        Some(_) => return Err(CliError::Config("objectives list is empty".into())),
        None => match options.axis {
            SweepAxis::TauS => vec![Objective::Xclr],
            SweepAxis::SamplesPerClass => vec![Objective::Simclr, Objective::Xclr],
        },
    };
    let (dataset, _) = load_dataset(data_dir)?;

    let mut rows = Vec::new();
    for (value_text, value) in &values {
        for &objective in &objectives {
            for seed_index in 0..options.seeds {
                let row_seed = config.seed.wrapping_add(seed_index as u64);
                let subset;
                let ssl_idx: Vec<usize>;
                let ssl: &SyntheticDataset = match value {
                    AxisValue::SamplesPerClass(k) => {
                        ssl_idx = subsample_indices_per_class(&dataset, *k, row_seed)?;
                        subset = subsample_per_class(&dataset, *k, row_seed)?;
                        &subset
                    }
                    AxisValue::TauS(_) => {
                        ssl_idx = (0..dataset.n()).collect();
                        &dataset
                    }
                };
                let mut run_config = config.clone();
                run_config.seed = row_seed;
                run_config.objective = objective;
                if let AxisValue::TauS(v) = value {
                    run_config.tau_s = *v;
                }
                run_config.batch_size = run_config.batch_size.min(ssl.n());
                let batches_per_epoch = ssl.n().div_ceil(run_config.batch_size);
                run_config.epochs = options.train_steps.div_ceil(batches_per_epoch);

                let train_config = run_config.train_config();
                let source =
                    build_source(ssl, objective, &run_config.graph, row_seed)?;
                let params = EncoderParams::he_init(
                    &default_layer_dims(ssl.dim()),
                    DEFAULT_BACKBONE_LAYERS,
                    row_seed,
                )?;
                let output =
                    train_from(params, 0, ssl.features(), &source, &train_config)?;

                // The test half spans the full dataset; probe labels are
                // capped at the rows the encoder trained on.
                let backbone = backbone_features(&output.params, dataset.features())?;
                let (split_train, test_idx) = even_split(dataset.n(), row_seed);
                let train_idx = sorted_intersection(&ssl_idx, &split_train);
                if options.knn_k > train_idx.len() {
                    return Err(CliError::Config(format!(
                        "knn-k {} exceeds the {} labeled probe rows",
                        options.knn_k,
                        train_idx.len()
                    )));
                }
                let train_feats = select_rows(&backbone, &train_idx);
                let test_feats = select_rows(&backbone, &test_idx);
                let train_sub = select_labels(dataset.subclass(), &train_idx);
                let test_sub = select_labels(dataset.subclass(), &test_idx);
                let train_super = select_labels(dataset.superclass(), &train_idx);
                let test_super = select_labels(dataset.superclass(), &test_idx);
                let degenerate = |e: xclr_core::Error| match e {
                    xclr_core::Error::SingleClass => CliError::Config(format!(
                        "{value_text} {} leaves a single-class probe set; raise the value or use more data",
                        options.axis
                    )),
                    other => other.into(),
                };
                let probe_config = config.probe_config();
                let subclass_probe = linear_probe(
                    &train_feats,
                    &train_sub,
                    &test_feats,
                    &test_sub,
                    probe_config,
                )
                .map_err(degenerate)?;
                let superclass_probe = linear_probe(
                    &train_feats,
                    &train_super,
                    &test_feats,
                    &test_super,
                    probe_config,
                )
                .map_err(degenerate)?;
                let subclass_knn = knn_accuracy(
                    &train_feats,
                    &train_sub,
                    &test_feats,
                    &test_sub,
                    options.knn_k,
                )?;
                let superclass_knn = knn_accuracy(
                    &train_feats,
                    &train_super,
                    &test_feats,
                    &test_super,
                    options.knn_k,
                )?;

                rows.push(SweepRow {
                    axis: options.axis.to_string(),
                    value: value_text.clone(),
                    objective: objective.to_string(),
                    seed: row_seed,
                    ssl_samples: ssl.n(),
                    labeled_samples: train_idx.len(),
                    epochs: run_config.epochs,
                    batch_size: run_config.batch_size,
                    subclass_probe: subclass_probe.accuracy,
                    superclass_probe: superclass_probe.accuracy,
                    subclass_knn: subclass_knn.accuracy,
                    superclass_knn: superclass_knn.accuracy,
                });
            }
        }
    }

    write_sweep_csv(out_csv, &rows)?;
    Ok(rows)
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
    }
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    writer
        .write_record([
            "axis",
            "value",
            "objective",
            "seed",
            "ssl_samples",
            "labeled_samples",
            "epochs",
            "batch_size",
            "subclass_probe",
            "superclass_probe",
            "subclass_knn",
            "superclass_knn",
        ])
        .map_err(|e| csv_io(path, e))?;
    for row in rows {
        writer
            .write_record([
                row.axis.clone(),
                row.value.clone(),
                row.objective.clone(),
                row.seed.to_string(),
                row.ssl_samples.to_string(),
                row.labeled_samples.to_string(),
                row.epochs.to_string(),
                row.batch_size.to_string(),
                row.subclass_probe.to_string(),
                row.superclass_probe.to_string(),
                row.subclass_knn.to_string(),
                row.superclass_knn.to_string(),
            ])
            .map_err(|e| csv_io(path, e))?;
    }
    writer.flush().map_err(|e| CliError::io(path, e))
}
