//! Similarity graphs over dataset samples and the soft targets derived
//! from them.
//!
//! A graph assigns every ordered sample pair a similarity in `[-1, 1]`.
//! Materialized graphs store the full matrix; [`GraphSource`] lets batch
//! target construction read similarities lazily (per-class tables, caption
//! embeddings) without building an `n x n` matrix first.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, ProbRow};

/// Materialized pairwise similarity over `n` samples.
///
/// Invariants: square, symmetric within 1e-9, unit diagonal, entries in
/// `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    values: Matrix,
}

impl SimilarityGraph {
    /// Validates and wraps an explicit similarity matrix.
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        if values.rows() != values.cols() {
            return Err(Error::DimMismatch {
                left: (values.rows(), values.cols()),
                right: (values.cols(), values.rows()),
            });
        }
        let n = values.rows();
        for i in 0..n {
            if values.get(i, i) != 1.0 {
                return Err(Error::InvalidArgument("graph diagonal must be exactly 1"));
            }
            for j in 0..n {
                let v = values.get(i, j);
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument("graph entry outside [-1, 1]"));
                }
                if (v - values.get(j, i)).abs() > 1e-9 {
                    return Err(Error::InvalidArgument("graph must be symmetric"));
                }
            }
        }
        Ok(SimilarityGraph { values })
    }

    #[must_use]
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    #[must_use]
    pub fn values(&self) -> &Matrix {
        &self.values
    }

    #[inline]
    #[must_use]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }
}

/// Pairwise similarity readable by sample index without materialization.
pub trait GraphSource {
    fn n_samples(&self) -> usize;
    /// Similarity of the ordered pair `(i, j)`; must be symmetric.
    fn similarity(&self, i: usize, j: usize) -> f64;
}

impl GraphSource for SimilarityGraph {
    fn n_samples(&self) -> usize {
        self.n()
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        self.get(i, j)
    }
}

/// Class-by-class similarity lookup table.
///
/// Invariants mirror [`SimilarityGraph`]: square, symmetric within 1e-9,
/// unit diagonal, entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSimilarityTable {
    values: Matrix,
}

impl ClassSimilarityTable {
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        // Same shape contract as a sample graph, just over classes.
        let graph = SimilarityGraph::from_matrix(values)?;
        Ok(ClassSimilarityTable {
            values: graph.values,
        })
    }

    #[must_use]
    pub fn n_classes(&self) -> usize {
        self.values.rows()
    }

    #[inline]
    #[must_use]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values.get(a, b)
    }

    #[must_use]
    pub fn values(&self) -> &Matrix {
        &self.values
    }
}

/// Lazy graph: samples are similar according to their classes' table entry.
pub struct ClassTableSource<'a> {
    table: &'a ClassSimilarityTable,
    labels: &'a [usize],
}

impl<'a> ClassTableSource<'a> {
    pub fn new(table: &'a ClassSimilarityTable, labels: &'a [usize]) -> Result<Self> {
        for &l in labels {
            if l >= table.n_classes() {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    classes: table.n_classes(),
                });
            }
        }
        Ok(ClassTableSource { table, labels })
    }
}

impl GraphSource for ClassTableSource<'_> {
    fn n_samples(&self) -> usize {
        self.labels.len()
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        self.table.get(self.labels[i], self.labels[j])
    }
}

/// Lazy graph: cosine similarity between per-sample embedding rows.
pub struct CaptionSource {
    normalized: Matrix,
}

impl CaptionSource {
    /// Rows of `embeddings` must have nonzero norm.
    pub fn new(embeddings: &Matrix) -> Result<Self> {
        Ok(CaptionSource {
            normalized: numerics::l2_normalize_rows(embeddings)?,
        })
    }
}

impl GraphSource for CaptionSource {
    fn n_samples(&self) -> usize {
        self.normalized.rows()
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        numerics::dot(self.normalized.row(i), self.normalized.row(j)).clamp(-1.0, 1.0)
    }
}

/// Lazy identity graph: distinct samples share no similarity. Feeding this
/// to the soft-target builder at a small temperature recovers one-hot
/// targets.
pub struct InstanceSource {
    n: usize,
}

impl InstanceSource {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("instance graph needs n >= 1"));
        }
        Ok(InstanceSource { n })
    }
}

impl GraphSource for InstanceSource {
    fn n_samples(&self) -> usize {
        self.n
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            0.0
        }
    }
}

/// Lazy class graph: 1 iff two samples share a label.
pub struct ClassGraphSource<'a> {
    labels: &'a [usize],
}

impl<'a> ClassGraphSource<'a> {
    pub fn new(labels: &'a [usize]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::MissingLabels);
        }
        Ok(ClassGraphSource { labels })
    }
}

impl GraphSource for ClassGraphSource<'_> {
    fn n_samples(&self) -> usize {
        self.labels.len()
    }

    fn similarity(&self, i: usize, j: usize) -> f64 {
        if self.labels[i] == self.labels[j] {
            1.0
        } else {
            0.0
        }
    }
}

/// Block-diagonal view graph: entry 1 iff two slots come from the same
/// original sample, i.e. `floor(i / views) == floor(j / views)`.
pub fn build_augmentation_graph(n_originals: usize, views: usize) -> Result<SimilarityGraph> {
    if n_originals == 0 || views == 0 {
        return Err(Error::InvalidArgument(
            "augmentation graph needs n_originals >= 1 and views >= 1",
        ));
    }
    let n = n_originals * views;
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        let block = i / views;
        for j in block * views..(block + 1) * views {
            m.set(i, j, 1.0);
        }
    }
    SimilarityGraph::from_matrix(m)
}

/// Binary graph: entry 1 iff two samples share a label.
pub fn build_class_graph(labels: &[usize]) -> Result<SimilarityGraph> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("class graph needs at least one label"));
    }
    let n = labels.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                m.set(i, j, 1.0);
            }
        }
    }
    SimilarityGraph::from_matrix(m)
}

/// Dense cosine graph over per-sample embedding rows, diagonal forced to 1.
pub fn build_caption_graph(embeddings: &Matrix) -> Result<SimilarityGraph> {
    if embeddings.rows() == 0 {
        return Err(Error::InvalidArgument("caption graph needs at least one row"));
    }
    let mut m = numerics::cosine_similarity_matrix(embeddings, embeddings)?;
    // Exact symmetry and unit diagonal; cosine rounding stays within 1e-16
    // but the graph contract wants these exact.
    for i in 0..m.rows() {
        m.set(i, i, 1.0);
        for j in 0..i {
            let v = m.get(i, j);
            m.set(j, i, v);
        }
    }
    SimilarityGraph::from_matrix(m)
}

/// Rooted tree over class labels, used to grade similarity by ancestry.
///
/// `parent_edges` lists `(child, parent)` node pairs; `class_leaf[c]` names
/// the leaf node for class `c`.
#[derive(Debug, Clone)]
pub struct HierarchyTree {
    parent: BTreeMap<u32, u32>,
    class_leaf: Vec<u32>,
    root: u32,
}

impl HierarchyTree {
    pub fn new(parent_edges: &[(u32, u32)], class_leaf: &[u32]) -> Result<Self> {
        if class_leaf.is_empty() {
            return Err(Error::DegenerateTree("no classes mapped"));
        }
        let mut parent = BTreeMap::new();
        let mut nodes = BTreeSet::new();
        for &(child, par) in parent_edges {
            if parent.insert(child, par).is_some() {
                return Err(Error::DegenerateTree("node has two parents"));
            }
            nodes.insert(child);
            nodes.insert(par);
        }
        for &leaf in class_leaf {
            nodes.insert(leaf);
        }
        let mut roots = nodes.iter().filter(|n| !parent.contains_key(n));
        let root = match (roots.next(), roots.next()) {
            (Some(&r), None) => r,
            _ => return Err(Error::DegenerateTree("tree must have exactly one root")),
        };
        // Every node must reach the root without revisiting anything.
        let budget = nodes.len();
        for &start in &nodes {
            let mut cur = start;
            let mut steps = 0;
            while cur != root {
                cur = *parent.get(&cur).expect("non-root node has a parent");
                steps += 1;
                if steps > budget {
                    return Err(Error::DegenerateTree("cycle in parent edges"));
                }
            }
        }
        let children: BTreeSet<u32> = parent.values().copied().collect();
        for &leaf in class_leaf {
            if children.contains(&leaf) {
                return Err(Error::DegenerateTree("class mapped to an internal node"));
            }
        }
        Ok(HierarchyTree {
            parent,
            class_leaf: class_leaf.to_vec(),
            root,
        })
    }

    #[must_use]
    pub fn n_classes(&self) -> usize {
        self.class_leaf.len()
    }

    fn depth(&self, mut node: u32) -> usize {
        let mut d = 0;
        while node != self.root {
            node = self.parent[&node];
            d += 1;
        }
        d
    }

    /// Tree path length in edges between two classes' leaves.
    pub fn class_distance(&self, a: usize, b: usize) -> Result<usize> {
        let la = *self
            .class_leaf
            .get(a)
            .ok_or(Error::LabelOutOfRange { label: a, classes: self.n_classes() })?;
        let lb = *self
            .class_leaf
            .get(b)
            .ok_or(Error::LabelOutOfRange { label: b, classes: self.n_classes() })?;
        let (mut x, mut y) = (la, lb);
        let (mut dx, mut dy) = (self.depth(x), self.depth(y));
        let mut dist = 0;
        while dx > dy {
            x = self.parent[&x];
            dx -= 1;
            dist += 1;
        }
        while dy > dx {
            y = self.parent[&y];
            dy -= 1;
            dist += 1;
        }
        while x != y {
            x = self.parent[&x];
            y = self.parent[&y];
            dist += 2;
        }
        Ok(dist)
    }

    /// Largest leaf-to-leaf distance over the mapped classes.
    pub fn diameter(&self) -> Result<usize> {
        let mut d_max = 0;
        for a in 0..self.n_classes() {
            for b in (a + 1)..self.n_classes() {
                d_max = d_max.max(self.class_distance(a, b)?);
            }
        }
        Ok(d_max)
    }
}

/// Graded graph: entry `1 - d(i, j) / d_max` over leaf path distances.
///
/// `d_max` is the diameter over all mapped classes, so the graph does not
/// depend on which samples happen to be present. A zero diameter with more
/// than one distinct label in use is rejected.
pub fn build_hierarchy_graph(tree: &HierarchyTree, labels: &[usize]) -> Result<SimilarityGraph> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument(
            "hierarchy graph needs at least one label",
        ));
    }
    for &l in labels {
        if l >= tree.n_classes() {
            return Err(Error::LabelOutOfRange {
                label: l,
                classes: tree.n_classes(),
            });
        }
    }
    let d_max = tree.diameter()?;
    let distinct: BTreeSet<usize> = labels.iter().copied().collect();
    if d_max == 0 && distinct.len() > 1 {
        return Err(Error::DegenerateTree(
            "zero diameter with multiple distinct classes",
        ));
    }
    let n = labels.len();
    let c = tree.n_classes();
    // Class-pair distances first; the sample graph just indexes them.
    let mut sim = Matrix::zeros(c, c);
    for a in 0..c {
        for b in 0..c {
            let v = if d_max == 0 {
                1.0
            } else {
                1.0 - tree.class_distance(a, b)? as f64 / d_max as f64
            };
            sim.set(a, b, v);
        }
    }
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, sim.get(labels[i], labels[j]));
        }
    }
    for i in 0..n {
        m.set(i, i, 1.0);
    }
    SimilarityGraph::from_matrix(m)
}

/// How [`build_random_graph`] assigns its control similarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomGraphMode {
    /// One uniform draw per unordered class pair, shared by all samples of
    /// those classes. Requires labels.
    PerClassPair,
    /// One uniform draw per unordered sample pair.
    PerSamplePair,
}

/// Control graph with random similarities in `[0, 1)`, unit diagonal.
pub fn build_random_graph(
    n: usize,
    labels: Option<&[usize]>,
    mode: RandomGraphMode,
    seed: u64,
) -> Result<SimilarityGraph> {
    if n == 0 {
        return Err(Error::InvalidArgument("random graph needs n >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Matrix::zeros(n, n);
    match mode {
        RandomGraphMode::PerClassPair => {
            let labels = labels.ok_or(Error::MissingLabels)?;
            if labels.len() != n {
                return Err(Error::SizeMismatch {
                    left: n,
                    right: labels.len(),
                });
            }
            let classes = labels.iter().copied().max().unwrap_or(0) + 1;
            let mut table = Matrix::zeros(classes, classes);
            for a in 0..classes {
                for b in a..classes {
                    let v: f64 = rng.gen();
                    table.set(a, b, v);
                    table.set(b, a, v);
                }
            }
            for i in 0..n {
                for j in 0..n {
                    m.set(i, j, table.get(labels[i], labels[j]));
                }
            }
        }
        RandomGraphMode::PerSamplePair => {
            for i in 0..n {
                for j in (i + 1)..n {
                    let v: f64 = rng.gen();
                    m.set(i, j, v);
                    m.set(j, i, v);
                }
            }
        }
    }
    for i in 0..n {
        m.set(i, i, 1.0);
    }
    SimilarityGraph::from_matrix(m)
}

/// Materializes a per-class table into a sample graph via labels.
pub fn table_lookup_graph(
    table: &ClassSimilarityTable,
    labels: &[usize],
) -> Result<SimilarityGraph> {
    if labels.is_empty() {
        return Err(Error::InvalidArgument("lookup graph needs at least one label"));
    }
    let source = ClassTableSource::new(table, labels)?;
    let n = labels.len();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, source.similarity(i, j));
        }
    }
    for i in 0..n {
        m.set(i, i, 1.0);
    }
    SimilarityGraph::from_matrix(m)
}

/// Soft target distributions for one batch of paired views.
///
/// Row `i` is a distribution over batch slots with slot `i` excluded;
/// `pair_index` maps each slot to its sibling view and is an involution
/// without fixed points.
#[derive(Debug, Clone)]
pub struct TargetBatch {
    rows: Vec<ProbRow>,
    pair_index: Vec<usize>,
}

fn validate_pairing(pair_index: &[usize]) -> Result<()> {
    let n = pair_index.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::BadPairing("batch must hold a positive even slot count"));
    }
    for (i, &p) in pair_index.iter().enumerate() {
        if p >= n {
            return Err(Error::BadPairing("pair index out of range"));
        }
        if p == i {
            return Err(Error::BadPairing("slot paired with itself"));
        }
        if pair_index[p] != i {
            return Err(Error::BadPairing("pairing is not an involution"));
        }
    }
    Ok(())
}

impl TargetBatch {
    /// Validating constructor for explicit rows.
    pub fn from_rows(rows: Vec<ProbRow>, pair_index: Vec<usize>) -> Result<Self> {
        validate_pairing(&pair_index)?;
        if rows.len() != pair_index.len() {
            return Err(Error::SizeMismatch {
                left: rows.len(),
                right: pair_index.len(),
            });
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != rows.len() || row.excluded_index() != Some(i) {
                return Err(Error::SupportMismatch);
            }
        }
        Ok(TargetBatch { rows, pair_index })
    }

    /// Hard targets: all mass on the sibling view of each slot.
    pub fn one_hot(pair_index: &[usize]) -> Result<Self> {
        validate_pairing(pair_index)?;
        let n = pair_index.len();
        let mut rows = Vec::with_capacity(n);
        for (i, &p) in pair_index.iter().enumerate() {
            let mut v = vec![0.0; n];
            v[p] = 1.0;
            rows.push(ProbRow::new(v, Some(i))?);
        }
        Ok(TargetBatch {
            rows,
            pair_index: pair_index.to_vec(),
        })
    }

    /// Uniform targets over all same-label slots other than the anchor.
    ///
    /// Paired views must carry the same label, which also guarantees every
    /// anchor has at least one positive.
    pub fn supcon(labels: &[usize], pair_index: &[usize]) -> Result<Self> {
        validate_pairing(pair_index)?;
        if labels.len() != pair_index.len() {
            return Err(Error::SizeMismatch {
                left: labels.len(),
                right: pair_index.len(),
            });
        }
        for (i, &p) in pair_index.iter().enumerate() {
            if labels[i] != labels[p] {
                return Err(Error::BadPairing("paired views must share a label"));
            }
        }
        let n = labels.len();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let mut v = vec![0.0; n];
            let mut count = 0usize;
            for j in 0..n {
                if j != i && labels[j] == labels[i] {
                    count += 1;
                }
            }
            let p = 1.0 / count as f64;
            for (j, slot) in v.iter_mut().enumerate() {
                if j != i && labels[j] == labels[i] {
                    *slot = p;
                }
            }
            rows.push(ProbRow::new(v, Some(i))?);
        }
        Ok(TargetBatch {
            rows,
            pair_index: pair_index.to_vec(),
        })
    }

    #[must_use]
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    #[must_use]
    pub fn rows(&self) -> &[ProbRow] {
        &self.rows
    }

    #[inline]
    #[must_use]
    pub fn row(&self, i: usize) -> &ProbRow {
        &self.rows[i]
    }

    #[must_use]
    pub fn pair_index(&self) -> &[usize] {
        &self.pair_index
    }
}

/// Soft targets for a batch drawn from a similarity source.
///
/// `batch_indices` lists the original sample index of each slot; every
/// original must appear exactly twice (its two views). The sibling slot's
/// logit is pinned to 1, all other logits come from the source, and the row
/// is a temperature softmax at `tau_s` with the anchor excluded.
pub fn batch_targets(
    source: &dyn GraphSource,
    batch_indices: &[usize],
    tau_s: f64,
) -> Result<TargetBatch> {
    if tau_s.is_nan() || tau_s <= 0.0 {
        return Err(Error::NonPositiveTemperature(tau_s));
    }
    let n = batch_indices.len();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::BadPairing("batch must hold a positive even slot count"));
    }
    let mut slots: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (slot, &orig) in batch_indices.iter().enumerate() {
        if orig >= source.n_samples() {
            return Err(Error::IndexOutOfRange {
                index: orig,
                len: source.n_samples(),
            });
        }
        slots.entry(orig).or_default().push(slot);
    }
    let mut pair_index = vec![0usize; n];
    for s in slots.values() {
        if s.len() != 2 {
            return Err(Error::BadPairing("each original must appear exactly twice"));
        }
        pair_index[s[0]] = s[1];
        pair_index[s[1]] = s[0];
    }
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let mut logits = vec![0.0; n];
        for j in 0..n {
            if j == i {
                continue;
            }
            logits[j] = if j == pair_index[i] {
                1.0
            } else {
                source.similarity(batch_indices[i], batch_indices[j])
            };
        }
        rows.push(numerics::row_softmax(&logits, tau_s, Some(i))?);
    }
    Ok(TargetBatch { rows, pair_index })
}

/// Closed-form target mass on the sibling view when every non-sibling
/// similarity equals `offdiag`: `e^{1/t} / (e^{1/t} + (2 N_b - 2) e^{o/t})`.
///
/// Evaluated in shifted form so small `tau_s` cannot overflow.
pub fn diagonal_mass(tau_s: f64, half_batch: usize, offdiag: f64) -> Result<f64> {
    if tau_s.is_nan() || tau_s <= 0.0 {
        return Err(Error::NonPositiveTemperature(tau_s));
    }
    if half_batch == 0 {
        return Err(Error::InvalidArgument("half_batch must be >= 1"));
    }
    if !offdiag.is_finite() || !(-1.0..=1.0).contains(&offdiag) {
        return Err(Error::InvalidArgument("offdiag must lie in [-1, 1]"));
    }
    let others = (2 * half_batch - 2) as f64;
    Ok(1.0 / (1.0 + others * libm::exp((offdiag - 1.0) / tau_s)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn instance_source_matches_identity_graph() {
        let source = InstanceSource::new(5).unwrap();
        let dense = build_augmentation_graph(5, 1).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(source.similarity(i, j), dense.get(i, j));
            }
        }
        assert!(InstanceSource::new(0).is_err());
    }

    #[test]
    fn class_graph_source_matches_dense_builder() {
        let labels = [0usize, 1, 0, 2, 1];
        let source = ClassGraphSource::new(&labels).unwrap();
        let dense = build_class_graph(&labels).unwrap();
        for i in 0..labels.len() {
            for j in 0..labels.len() {
                assert_eq!(source.similarity(i, j), dense.get(i, j));
            }
        }
        assert!(ClassGraphSource::new(&[]).is_err());
    }

    fn assert_valid_graph(g: &SimilarityGraph) {
        let n = g.n();
        for i in 0..n {
            assert_eq!(g.get(i, i), 1.0);
            for j in 0..n {
                assert!(close(g.get(i, j), g.get(j, i), 1e-9));
                assert!((-1.0..=1.0).contains(&g.get(i, j)));
            }
        }
    }

    #[test]
    fn augmentation_graph_blocks() {
        let g = build_augmentation_graph(2, 2).unwrap();
        assert_valid_graph(&g);
        let expect = [
            [1.0, 1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 1.0],
            [0.0, 0.0, 1.0, 1.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(g.get(i, j), expect[i][j]);
            }
        }
    }

    #[test]
    fn augmentation_graph_single_view_is_identity() {
        let g = build_augmentation_graph(3, 1).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.get(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn augmentation_graph_rejects_zero() {
        assert!(build_augmentation_graph(0, 2).is_err());
        assert!(build_augmentation_graph(2, 0).is_err());
    }

    #[test]
    fn class_graph_example() {
        let g = build_class_graph(&[0, 0, 1]).unwrap();
        assert_valid_graph(&g);
        assert_eq!(g.get(0, 1), 1.0);
        assert_eq!(g.get(0, 2), 0.0);
        assert_eq!(g.get(1, 2), 0.0);
    }

    #[test]
    fn caption_graph_matches_cosine_with_exact_diagonal() {
        let e = Matrix::from_vec(3, 2, vec![1.0, 0.0, 1.0, 1.0, 0.0, 2.0]).unwrap();
        let g = build_caption_graph(&e).unwrap();
        assert_valid_graph(&g);
        assert!(close(g.get(0, 1), core::f64::consts::FRAC_1_SQRT_2, 1e-12));
        assert!(close(g.get(0, 2), 0.0, 1e-12));
        assert!(close(g.get(1, 2), core::f64::consts::FRAC_1_SQRT_2, 1e-12));
    }

    fn two_level_tree() -> HierarchyTree {
        // root 0 -> {1, 2}; 1 -> {3, 4}; 2 -> {5, 6}. Classes map to 3..=6.
        HierarchyTree::new(
            &[(1, 0), (2, 0), (3, 1), (4, 1), (5, 2), (6, 2)],
            &[3, 4, 5, 6],
        )
        .unwrap()
    }

    #[test]
    fn hierarchy_distances_and_graph() {
        let tree = two_level_tree();
        assert_eq!(tree.class_distance(0, 0).unwrap(), 0);
        assert_eq!(tree.class_distance(0, 1).unwrap(), 2);
        assert_eq!(tree.class_distance(0, 2).unwrap(), 4);
        assert_eq!(tree.diameter().unwrap(), 4);

        let g = build_hierarchy_graph(&tree, &[0, 1, 2, 3]).unwrap();
        assert_valid_graph(&g);
        assert!(close(g.get(0, 1), 0.5, 1e-12));
        assert!(close(g.get(0, 2), 0.0, 1e-12));
        assert!(close(g.get(2, 3), 0.5, 1e-12));
    }

    #[test]
    fn hierarchy_same_leaf_for_all_labels_gives_ones() {
        let tree = HierarchyTree::new(&[(1, 0)], &[1]).unwrap();
        let g = build_hierarchy_graph(&tree, &[0, 0, 0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(g.get(i, j), 1.0);
            }
        }
    }

    #[test]
    fn hierarchy_rejects_cycle_and_double_root() {
        assert!(matches!(
            HierarchyTree::new(&[(1, 2), (2, 1)], &[1]),
            Err(Error::DegenerateTree(_))
        ));
        assert!(matches!(
            HierarchyTree::new(&[(1, 0), (3, 2)], &[1, 3]),
            Err(Error::DegenerateTree(_))
        ));
    }

    #[test]
    fn hierarchy_rejects_zero_diameter_with_distinct_classes() {
        // Two classes mapped onto one shared leaf.
        let tree = HierarchyTree::new(&[(1, 0)], &[1, 1]).unwrap();
        assert!(matches!(
            build_hierarchy_graph(&tree, &[0, 1]),
            Err(Error::DegenerateTree(_))
        ));
    }

    #[test]
    fn random_graph_deterministic_and_classwise_constant() {
        let labels = [0usize, 0, 1, 1, 2];
        let a = build_random_graph(5, Some(&labels), RandomGraphMode::PerClassPair, 7).unwrap();
        let b = build_random_graph(5, Some(&labels), RandomGraphMode::PerClassPair, 7).unwrap();
        assert_eq!(a.values().data(), b.values().data());
        assert_valid_graph(&a);
        // Same class pair, same value.
        assert_eq!(a.get(0, 2), a.get(1, 3));
        assert_eq!(a.get(0, 2), a.get(0, 3));

        let c = build_random_graph(5, Some(&labels), RandomGraphMode::PerClassPair, 8).unwrap();
        assert_ne!(a.values().data(), c.values().data());
    }

    #[test]
    fn random_graph_per_sample_and_missing_labels() {
        let g = build_random_graph(4, None, RandomGraphMode::PerSamplePair, 3).unwrap();
        assert_valid_graph(&g);
        assert_eq!(
            build_random_graph(4, None, RandomGraphMode::PerClassPair, 3),
            Err(Error::MissingLabels)
        );
    }

    #[test]
    fn table_lookup_graph_example() {
        let table = ClassSimilarityTable::from_matrix(
            Matrix::from_vec(2, 2, vec![1.0, 0.3, 0.3, 1.0]).unwrap(),
        )
        .unwrap();
        let g = table_lookup_graph(&table, &[0, 1, 0]).unwrap();
        assert_valid_graph(&g);
        assert!(close(g.get(0, 1), 0.3, 1e-12));
        assert_eq!(g.get(0, 2), 1.0);
        assert!(matches!(
            table_lookup_graph(&table, &[0, 2]),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn batch_targets_rows_are_distributions_with_pair_mass() {
        // Identity graph over originals: every non-sibling logit is 0.
        let g = build_augmentation_graph(4, 1).unwrap();
        let batch = [0usize, 0, 1, 1];
        let t = batch_targets(&g, &batch, 0.1).unwrap();
        assert_eq!(t.size(), 4);
        assert_eq!(t.pair_index(), &[1, 0, 3, 2]);
        for i in 0..4 {
            let row = t.row(i);
            assert_eq!(row.excluded_index(), Some(i));
            let sum: f64 = row.values().iter().sum();
            assert!(close(sum, 1.0, 1e-9));
            // Frozen: 1 / (1 + 2 e^{-10}).
            assert!(close(row.get(t.pair_index()[i]), 0.999_909_208_384_3, 1e-11));
        }
    }

    #[test]
    fn batch_targets_match_diagonal_mass_for_constant_offdiag() {
        let n = 6usize;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, if i == j { 1.0 } else { 0.35 });
            }
        }
        let g = SimilarityGraph::from_matrix(m).unwrap();
        let batch = [0usize, 0, 1, 1, 2, 2];
        for &tau_s in &[0.05, 0.1, 0.5, 2.0] {
            let t = batch_targets(&g, &batch, tau_s).unwrap();
            let expect = diagonal_mass(tau_s, 3, 0.35).unwrap();
            for i in 0..batch.len() {
                assert!(
                    close(t.row(i).get(t.pair_index()[i]), expect, 1e-12),
                    "tau_s = {tau_s}"
                );
            }
        }
    }

    #[test]
    fn batch_targets_rejects_bad_batches() {
        let g = build_augmentation_graph(4, 1).unwrap();
        assert!(matches!(
            batch_targets(&g, &[0, 0, 1], 0.1),
            Err(Error::BadPairing(_))
        ));
        assert!(matches!(
            batch_targets(&g, &[0, 1, 2, 3], 0.1),
            Err(Error::BadPairing(_))
        ));
        assert!(matches!(
            batch_targets(&g, &[0, 0, 9, 9], 0.1),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            batch_targets(&g, &[0, 0, 1, 1], 0.0),
            Err(Error::NonPositiveTemperature(_))
        ));
    }

    #[test]
    fn diagonal_mass_frozen_value() {
        // e / (e + 2), frozen at full precision.
        let v = diagonal_mass(1.0, 2, 0.0).unwrap();
        assert!(close(v, 0.576_116_884_765_829_1, 1e-12));
    }

    #[test]
    fn diagonal_mass_limits_and_monotonicity() {
        // Small temperature saturates to 1.
        assert!(close(diagonal_mass(1e-3, 4, 0.5).unwrap(), 1.0, 1e-12));
        // Large temperature approaches uniform 1 / (2 N_b - 1).
        assert!(close(diagonal_mass(1e6, 2, 0.5).unwrap(), 1.0 / 3.0, 1e-5));
        // Strictly decreasing in tau_s when offdiag < 1.
        let taus = [0.01, 0.05, 0.1, 0.5, 1.0, 5.0, 50.0];
        let mut prev = f64::INFINITY;
        for &t in &taus {
            let v = diagonal_mass(t, 8, 0.3).unwrap();
            assert!(v < prev);
            prev = v;
        }
        // Constant in tau_s when offdiag == 1 (all logits equal).
        for &t in &taus {
            assert!(close(diagonal_mass(t, 2, 1.0).unwrap(), 1.0 / 3.0, 1e-12));
        }
    }

    #[test]
    fn diagonal_mass_rejects_bad_arguments() {
        assert!(diagonal_mass(0.0, 2, 0.0).is_err());
        assert!(diagonal_mass(0.1, 0, 0.0).is_err());
        assert!(diagonal_mass(0.1, 2, 1.5).is_err());
    }

    #[test]
    fn one_hot_targets() {
        let t = TargetBatch::one_hot(&[1, 0, 3, 2]).unwrap();
        assert_eq!(t.row(0).get(1), 1.0);
        assert_eq!(t.row(2).get(3), 1.0);
        assert_eq!(t.row(2).get(0), 0.0);
        assert!(TargetBatch::one_hot(&[0, 1]).is_err());
        assert!(TargetBatch::one_hot(&[1, 0, 1, 2]).is_err());
    }

    #[test]
    fn supcon_targets_uniform_over_label_mates() {
        let labels = [0usize, 0, 0, 0, 1, 1];
        let pair = [1usize, 0, 3, 2, 5, 4];
        let t = TargetBatch::supcon(&labels, &pair).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.0 } else { 1.0 / 3.0 };
                assert!(close(t.row(i).get(j), expect, 1e-12));
            }
            assert_eq!(t.row(i).get(4), 0.0);
        }
        assert!(close(t.row(4).get(5), 1.0, 1e-12));
        // Pairs crossing labels are rejected.
        let bad = TargetBatch::supcon(&[0, 1], &[1, 0]);
        assert!(matches!(bad, Err(Error::BadPairing(_))));
    }

    #[test]
    fn class_table_source_reads_table() {
        let table = ClassSimilarityTable::from_matrix(
            Matrix::from_vec(2, 2, vec![1.0, 0.4, 0.4, 1.0]).unwrap(),
        )
        .unwrap();
        let labels = [0usize, 1, 1];
        let s = ClassTableSource::new(&table, &labels).unwrap();
        assert_eq!(s.n_samples(), 3);
        assert_eq!(s.similarity(0, 1), 0.4);
        assert_eq!(s.similarity(1, 2), 1.0);
        assert!(ClassTableSource::new(&table, &[0, 5]).is_err());
    }

    #[test]
    fn graph_from_matrix_validates() {
        let bad_diag = Matrix::from_vec(2, 2, vec![0.9, 0.0, 0.0, 1.0]).unwrap();
        assert!(SimilarityGraph::from_matrix(bad_diag).is_err());
        let asym = Matrix::from_vec(2, 2, vec![1.0, 0.3, 0.5, 1.0]).unwrap();
        assert!(SimilarityGraph::from_matrix(asym).is_err());
        let oob = Matrix::from_vec(2, 2, vec![1.0, 1.5, 1.5, 1.0]).unwrap();
        assert!(SimilarityGraph::from_matrix(oob).is_err());
    }
}
