//! Evaluation of frozen representations: exact KNN, a linear probe,
//! class-pair similarity tables, learned-graph metrics, and similarity
//! histograms.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::numerics::{dot, l2_normalize_rows, norm, Matrix, MIN_NORM};

/// Linear-probe hyperparameters. The probe is multinomial logistic
/// regression trained by full-batch gradient descent from zero init, so a
/// fixed config makes it fully deterministic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            iterations: 500,
            learning_rate: 0.1,
            l2: 0.0,
        }
    }
}

/// Which evaluator produced a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeKind {
    Knn { k: usize },
    Linear(ProbeConfig),
}

/// Probe output. `accuracy` always equals the class-count-weighted mean of
/// `per_class`; classes absent from the test split get weight 0 and a 0.0
/// placeholder entry.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub kind: ProbeKind,
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub class_counts: Vec<usize>,
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
}

fn report_from_predictions(
    kind: ProbeKind,
    predictions: &[usize],
    test_labels: &[usize],
    n_classes: usize,
    initial_loss: Option<f64>,
    final_loss: Option<f64>,
) -> ProbeReport {
    let mut correct = vec![0usize; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (&p, &t) in predictions.iter().zip(test_labels.iter()) {
        counts[t] += 1;
        if p == t {
            correct[t] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    let hits: usize = correct.iter().sum();
    let per_class = correct
        .iter()
        .zip(counts.iter())
        .map(|(&c, &n)| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    ProbeReport {
        kind,
        accuracy: hits as f64 / total as f64,
        per_class,
        class_counts: counts,
        initial_loss,
        final_loss,
    }
}

fn class_count(label_sets: &[&[usize]]) -> usize {
    1 + label_sets
        .iter()
        .flat_map(|l| l.iter())
        .copied()
        .max()
        .unwrap_or(0)
}

/// Exact k-nearest-neighbor classification under cosine distance. Neighbor
/// order is the total order (distance, train index); vote ties go to the
/// smallest class id.
pub fn knn_accuracy(
    train_feats: &Matrix,
    train_labels: &[usize],
    test_feats: &Matrix,
    test_labels: &[usize],
    k: usize,
) -> Result<ProbeReport> {
    if train_feats.rows() == 0 || test_feats.rows() == 0 {
        return Err(Error::EmptySplit);
    }
    if train_feats.rows() != train_labels.len() || test_feats.rows() != test_labels.len() {
        return Err(Error::SizeMismatch {
            left: train_feats.rows(),
            right: train_labels.len(),
        });
    }
    if k == 0 || k > train_feats.rows() {
        return Err(Error::KOutOfRange {
            k,
            train: train_feats.rows(),
        });
    }
    let train = l2_normalize_rows(train_feats)?;
    let test = l2_normalize_rows(test_feats)?;
    let n_classes = class_count(&[train_labels, test_labels]);

    let mut predictions = Vec::with_capacity(test.rows());
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(train.rows());
    for t in 0..test.rows() {
        scored.clear();
        for i in 0..train.rows() {
            let d = 1.0 - dot(test.row(t), train.row(i));
            scored.push((d, i));
        }
        let order = |a: &(f64, usize), b: &(f64, usize)| {
            a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
        };
        scored.select_nth_unstable_by(k - 1, order);
        let mut votes = vec![0usize; n_classes];
        for &(_, i) in &scored[..k] {
            votes[train_labels[i]] += 1;
        }
        let best = votes.iter().max().copied().unwrap_or(0);
        let label = votes.iter().position(|&v| v == best).unwrap_or(0);
        predictions.push(label);
    }
    Ok(report_from_predictions(
        ProbeKind::Knn { k },
        &predictions,
        test_labels,
        n_classes,
        None,
        None,
    ))
}

/// Row-normalized features with a trailing bias-1 column. Rows of
/// (near-)zero norm stay zero instead of erroring; only the bias feeds
/// them.
fn probe_design(feats: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(feats.rows(), feats.cols() + 1);
    for i in 0..feats.rows() {
        let row = feats.row(i);
        let n = norm(row);
        let dst = out.row_mut(i);
        if n >= MIN_NORM {
            for (d, &v) in dst.iter_mut().zip(row.iter()) {
                *d = v / n;
            }
        }
        dst[feats.cols()] = 1.0;
    }
    out
}

fn softmax_rows_inplace(logits: &mut Matrix) {
    for r in 0..logits.rows() {
        let row = logits.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = libm::exp(*v - max);
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

fn mean_ce(logits: &Matrix, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for r in 0..logits.rows() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + libm::log(row.iter().map(|&v| libm::exp(v - max)).sum::<f64>());
        total += lse - row[labels[r]];
    }
    total / logits.rows() as f64
}

fn argmax_smallest(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Multinomial logistic regression on frozen features: full-batch gradient
/// descent from zero weights for a fixed iteration count. Internally L2
/// normalizes feature rows (bounding the curvature so the default step
/// size converges monotonically) and appends a bias column. Prediction
/// ties go to the smallest class id.
pub fn linear_probe(
    train_feats: &Matrix,
    train_labels: &[usize],
    test_feats: &Matrix,
    test_labels: &[usize],
    config: ProbeConfig,
) -> Result<ProbeReport> {
    if train_feats.rows() == 0 || test_feats.rows() == 0 {
        return Err(Error::EmptySplit);
    }
    if train_feats.rows() != train_labels.len() || test_feats.rows() != test_labels.len() {
        return Err(Error::SizeMismatch {
            left: train_feats.rows(),
            right: train_labels.len(),
        });
    }
    if config.iterations == 0
        || !config.learning_rate.is_finite()
        || config.learning_rate <= 0.0
        || !config.l2.is_finite()
        || config.l2 < 0.0
    {
        return Err(Error::InvalidArgument("probe config out of range"));
    }
    let first = train_labels[0];
    if train_labels.iter().all(|&l| l == first) {
        return Err(Error::SingleClass);
    }
    let n_classes = class_count(&[train_labels, test_labels]);
    let x = probe_design(train_feats);
    let n = x.rows() as f64;
    let mut w = Matrix::zeros(x.cols(), n_classes);
    let mut initial_loss = None;
    let mut final_loss = 0.0;
    for _ in 0..config.iterations {
        let mut p = x.matmul(&w)?;
        let loss = mean_ce(&p, train_labels);
        if initial_loss.is_none() {
            initial_loss = Some(loss);
        }
        softmax_rows_inplace(&mut p);
        for (r, &label) in train_labels.iter().enumerate() {
            p.row_mut(r)[label] -= 1.0;
        }
        let mut grad = x.transpose().matmul(&p)?;
        grad.scale(1.0 / n);
        if config.l2 > 0.0 {
            grad.add_scaled(&w, config.l2)?;
        }
        w.add_scaled(&grad, -config.learning_rate)?;
        final_loss = mean_ce(&x.matmul(&w)?, train_labels);
    }

    let xt = probe_design(test_feats);
    let logits = xt.matmul(&w)?;
    let predictions: Vec<usize> = (0..logits.rows())
        .map(|r| argmax_smallest(logits.row(r)))
        .collect();
    Ok(report_from_predictions(
        ProbeKind::Linear(config),
        &predictions,
        test_labels,
        n_classes,
        initial_loss,
        Some(final_loss),
    ))
}

/// c x c table of mean pairwise cosine similarity between per-class sample
/// sets. The diagonal averages the full Cartesian product of a class with
/// itself, self-pairs included, so it is not forced to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPairSimilarity {
    values: Matrix,
    samples_used: Vec<usize>,
}

impl ClassPairSimilarity {
    #[must_use]
    pub fn n_classes(&self) -> usize {
        self.values.rows()
    }

    #[must_use]
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    #[must_use]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values.get(a, b)
    }

    /// How many samples each class contributed after subsampling.
    #[must_use]
    pub fn samples_used(&self) -> &[usize] {
        &self.samples_used
    }

    /// Strictly-upper-triangular entries in row-major order.
    #[must_use]
    pub fn off_diagonal(&self) -> Vec<f64> {
        let c = self.n_classes();
        let mut out = Vec::with_capacity(c * (c - 1) / 2);
        for a in 0..c {
            for b in a + 1..c {
                out.push(self.values.get(a, b));
            }
        }
        out
    }
}

pub fn class_pair_similarity(
    feats: &Matrix,
    labels: &[usize],
    samples_per_class: usize,
    seed: u64,
) -> Result<ClassPairSimilarity> {
    if feats.rows() != labels.len() {
        return Err(Error::SizeMismatch {
            left: feats.rows(),
            right: labels.len(),
        });
    }
    if feats.rows() == 0 {
        return Err(Error::EmptySplit);
    }
    if samples_per_class == 0 {
        return Err(Error::InvalidArgument("samples_per_class must be >= 1"));
    }
    let n_classes = class_count(&[labels]);
    let normalized = l2_normalize_rows(feats)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut sums = Matrix::zeros(n_classes, feats.cols());
    let mut used = vec![0usize; n_classes];
    for class in 0..n_classes {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            return Err(Error::InvalidArgument(
                "every class needs at least one sample",
            ));
        }
        let picked: Vec<usize> = if members.len() <= samples_per_class {
            members
        } else {
            let idx = rand::seq::index::sample(&mut rng, members.len(), samples_per_class);
            idx.iter().map(|j| members[j]).collect()
        };
        used[class] = picked.len();
        for &i in &picked {
            for (s, &v) in sums.row_mut(class).iter_mut().zip(normalized.row(i)) {
                *s += v;
            }
        }
    }
    // Mean over the Cartesian product equals the dot of per-class sums
    // over the product of counts; unit rows make this exact.
    let mut values = Matrix::zeros(n_classes, n_classes);
    for a in 0..n_classes {
        for b in a..n_classes {
            let v = dot(sums.row(a), sums.row(b)) / (used[a] * used[b]) as f64;
            values.set(a, b, v);
            values.set(b, a, v);
        }
    }
    Ok(ClassPairSimilarity {
        values,
        samples_used: used,
    })
}

const CONNECTIVITY_FLOOR: f64 = 1e-6;

/// Learned-graph summary: mean cross-class similarity, and the ratio of
/// the mean within-class similarity to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphMetrics {
    pub label_error: f64,
    pub intra_class_connectivity: f64,
    pub denominator_floored: bool,
}

pub fn graph_metrics(feats: &Matrix, labels: &[usize]) -> Result<GraphMetrics> {
    if feats.rows() != labels.len() {
        return Err(Error::SizeMismatch {
            left: feats.rows(),
            right: labels.len(),
        });
    }
    let n_classes = if labels.is_empty() { 0 } else { class_count(&[labels]) };
    if n_classes < 2 {
        return Err(Error::DegenerateClasses("need at least two classes"));
    }
    let mut counts = vec![0usize; n_classes];
    for &l in labels {
        counts[l] += 1;
    }
    if counts.iter().any(|&c| c < 2) {
        return Err(Error::DegenerateClasses(
            "every class needs at least two samples",
        ));
    }
    let normalized = l2_normalize_rows(feats)?;
    // Pair-sum identity on unit rows: sum over distinct pairs inside a set
    // equals (|sum vector|^2 - set size) / 2.
    let mut class_sums = Matrix::zeros(n_classes, feats.cols());
    for (i, &l) in labels.iter().enumerate() {
        for (s, &v) in class_sums.row_mut(l).iter_mut().zip(normalized.row(i)) {
            *s += v;
        }
    }
    let mut total_sum = vec![0.0; feats.cols()];
    for l in 0..n_classes {
        for (t, &v) in total_sum.iter_mut().zip(class_sums.row(l)) {
            *t += v;
        }
    }
    let n = labels.len();
    let all_pairs_sum = (dot(&total_sum, &total_sum) - n as f64) / 2.0;
    let mut within_sum = 0.0;
    let mut within_pairs = 0usize;
    for l in 0..n_classes {
        within_sum += (dot(class_sums.row(l), class_sums.row(l)) - counts[l] as f64) / 2.0;
        within_pairs += counts[l] * (counts[l] - 1) / 2;
    }
    let cross_pairs = n * (n - 1) / 2 - within_pairs;
    let label_error = (all_pairs_sum - within_sum) / cross_pairs as f64;
    let within_mean = within_sum / within_pairs as f64;
    let floored = label_error < CONNECTIVITY_FLOOR;
    let denom = if floored { CONNECTIVITY_FLOOR } else { label_error };
    Ok(GraphMetrics {
        label_error,
        intra_class_connectivity: within_mean / denom,
        denominator_floored: floored,
    })
}

/// Histogram over the strictly-upper-triangular entries of a similarity
/// graph: uniform bins over [-1, 1], value 1 landing in the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityHistogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
}

pub fn similarity_histogram(graph: &SimilarityGraph, bins: usize) -> Result<SimilarityHistogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be >= 1"));
    }
    let edges: Vec<f64> = (0..=bins)
        .map(|b| -1.0 + 2.0 * b as f64 / bins as f64)
        .collect();
    let mut counts = vec![0usize; bins];
    let n = graph.n();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let v = graph.get(i, j);
            let bin = (((v + 1.0) / 2.0 * bins as f64) as usize).min(bins - 1);
            counts[bin] += 1;
            sum += v;
            pairs += 1;
        }
    }
    let mean = if pairs == 0 { 0.0 } else { sum / pairs as f64 };
    Ok(SimilarityHistogram {
        edges,
        counts,
        mean,
    })
}

/// Random split of `0..n` into two disjoint halves (first half gets the
/// extra item when `n` is odd); both sides come back sorted.
#[must_use]
pub fn even_split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let cut = n.div_ceil(2);
    let mut first = order[..cut].to_vec();
    let mut second = order[cut..].to_vec();
    first.sort_unstable();
    second.sort_unstable();
    (first, second)
}
