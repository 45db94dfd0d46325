//! Synthetic hierarchical datasets and synthetic caption embeddings.
//!
//! Samples are drawn from a two-level Gaussian mixture: superclass centers,
//! subclass centers around them, samples around those. Caption embeddings
//! mirror the hierarchy on the unit sphere so that same-subclass captions
//! are more alike than same-superclass ones, which beat cross-superclass
//! ones.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::{norm, Matrix, MIN_NORM};

pub const DEFAULT_SUPERCLASSES: usize = 4;
pub const DEFAULT_SUBS_PER_SUPER: usize = 3;
pub const DEFAULT_SAMPLES_PER_SUB: usize = 200;
pub const DEFAULT_FEATURE_DIM: usize = 32;
pub const DEFAULT_CAPTION_DIM: usize = 16;
pub const DEFAULT_CAPTION_NOISE: f64 = 0.1;

// Caption geometry: every superclass direction shares a common component
// (keeps the global mean off-diagonal similarity in the mid 0.3s), and
// subclass anchors perturb their superclass direction. Random components
// are drawn orthogonal to their base so the pairwise similarities
// concentrate at the design values.
const CAPTION_SHARED_WEIGHT: f64 = 0.5;
const CAPTION_SUB_PERTURBATION: f64 = 0.4;

/// Spread knobs for [`gen_synthetic`]: sample noise around subclass
/// centers, subclass-center spread around superclass centers, and
/// superclass-center spread around the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationParams {
    pub within_sigma: f64,
    pub sub_spread: f64,
    pub super_spread: f64,
}

impl Default for SeparationParams {
    fn default() -> Self {
        SeparationParams {
            within_sigma: 2.5,
            sub_spread: 0.7,
            super_spread: 1.0,
        }
    }
}

impl SeparationParams {
    pub fn validate(&self) -> Result<()> {
        for v in [self.within_sigma, self.sub_spread, self.super_spread] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(
                    "separation params must be finite and >= 0",
                ));
            }
        }
        Ok(())
    }
}

/// Labeled feature matrix with an optional caption-embedding matrix
/// attached. Subclass labels refine superclass labels: every subclass id
/// maps to exactly one superclass id across the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    features: Matrix,
    subclass: Vec<usize>,
    superclass: Vec<usize>,
    captions: Option<Matrix>,
    n_subclasses: usize,
    n_superclasses: usize,
}

impl SyntheticDataset {
    pub fn new(
        features: Matrix,
        subclass: Vec<usize>,
        superclass: Vec<usize>,
        n_subclasses: usize,
        n_superclasses: usize,
    ) -> Result<Self> {
        let n = features.rows();
        if subclass.len() != n || superclass.len() != n {
            return Err(Error::SizeMismatch {
                left: n,
                right: subclass.len().max(superclass.len()),
            });
        }
        let mut sub_to_super = vec![usize::MAX; n_subclasses];
        for i in 0..n {
            if subclass[i] >= n_subclasses {
                return Err(Error::LabelOutOfRange {
                    label: subclass[i],
                    classes: n_subclasses,
                });
            }
            if superclass[i] >= n_superclasses {
                return Err(Error::LabelOutOfRange {
                    label: superclass[i],
                    classes: n_superclasses,
                });
            }
            let slot = &mut sub_to_super[subclass[i]];
            if *slot == usize::MAX {
                *slot = superclass[i];
            } else if *slot != superclass[i] {
                return Err(Error::InvalidArgument(
                    "subclass maps to more than one superclass",
                ));
            }
        }
        Ok(SyntheticDataset {
            features,
            subclass,
            superclass,
            captions: None,
            n_subclasses,
            n_superclasses,
        })
    }

    /// Attaches per-sample caption embeddings; rows must line up with the
    /// features and have positive norm.
    pub fn set_captions(&mut self, captions: Matrix) -> Result<()> {
        if captions.rows() != self.n() {
            return Err(Error::SizeMismatch {
                left: self.n(),
                right: captions.rows(),
            });
        }
        if captions.cols() == 0 {
            return Err(Error::InvalidArgument("caption dim must be >= 1"));
        }
        for i in 0..captions.rows() {
            if norm(captions.row(i)) < MIN_NORM {
                return Err(Error::ZeroNormRow(i));
            }
        }
        self.captions = Some(captions);
        Ok(())
    }

    #[must_use]
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    #[must_use]
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    #[must_use]
    pub fn features(&self) -> &Matrix {
        &self.features
    }

    #[must_use]
    pub fn subclass(&self) -> &[usize] {
        &self.subclass
    }

    #[must_use]
    pub fn superclass(&self) -> &[usize] {
        &self.superclass
    }

    #[must_use]
    pub fn captions(&self) -> Option<&Matrix> {
        self.captions.as_ref()
    }

    #[must_use]
    pub fn n_subclasses(&self) -> usize {
        self.n_subclasses
    }

    #[must_use]
    pub fn n_superclasses(&self) -> usize {
        self.n_superclasses
    }

    /// Superclass id for each subclass id. Errors if some subclass never
    /// occurs, since its parent would be unknown.
    pub fn subclass_parents(&self) -> Result<Vec<usize>> {
        let mut map = vec![usize::MAX; self.n_subclasses];
        for i in 0..self.n() {
            map[self.subclass[i]] = self.superclass[i];
        }
        if map.contains(&usize::MAX) {
            return Err(Error::InvalidArgument(
                "every subclass needs at least one sample",
            ));
        }
        Ok(map)
    }

    /// New dataset keeping only `rows`, in the given order.
    fn select(&self, rows: &[usize]) -> Self {
        let mut features = Matrix::zeros(rows.len(), self.dim());
        let mut subclass = Vec::with_capacity(rows.len());
        let mut superclass = Vec::with_capacity(rows.len());
        for (k, &i) in rows.iter().enumerate() {
            features.row_mut(k).copy_from_slice(self.features.row(i));
            subclass.push(self.subclass[i]);
            superclass.push(self.superclass[i]);
        }
        let captions = self.captions.as_ref().map(|c| {
            let mut m = Matrix::zeros(rows.len(), c.cols());
            for (k, &i) in rows.iter().enumerate() {
                m.row_mut(k).copy_from_slice(c.row(i));
            }
            m
        });
        SyntheticDataset {
            features,
            subclass,
            superclass,
            captions,
            n_subclasses: self.n_subclasses,
            n_superclasses: self.n_superclasses,
        }
    }
}

fn fill_gaussian(rng: &mut ChaCha8Rng, out: &mut [f64], sigma: f64) {
    for v in out.iter_mut() {
        let g: f64 = rng.sample(StandardNormal);
        *v = sigma * g;
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    // Zero norm has probability zero; resample rather than error.
    loop {
        let mut v = vec![0.0; dim];
        fill_gaussian(rng, &mut v, 1.0);
        let n = norm(&v);
        if n >= MIN_NORM {
            for x in &mut v {
                *x /= n;
            }
            return v;
        }
    }
}

fn orthonormal_to(rng: &mut ChaCha8Rng, base: &[f64]) -> Vec<f64> {
    // Unit vector orthogonal to `base` (itself unit norm). A draw parallel
    // to base has probability zero; resample.
    loop {
        let raw = unit_vector(rng, base.len());
        let t: f64 = raw.iter().zip(base.iter()).map(|(&r, &b)| r * b).sum();
        let proj: Vec<f64> = raw
            .iter()
            .zip(base.iter())
            .map(|(&r, &b)| r - t * b)
            .collect();
        let n = norm(&proj);
        if n >= MIN_NORM {
            return proj.into_iter().map(|x| x / n).collect();
        }
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = norm(&v);
    // Callers only pass vectors built from a unit vector plus noise, so
    // the norm is bounded away from zero except on a null set.
    debug_assert!(n >= MIN_NORM);
    for x in &mut v {
        *x /= n;
    }
    v
}

/// Draws a hierarchical Gaussian dataset: superclass centers at
/// `super_spread`, subclass centers offset by `sub_spread`, samples offset
/// by `within_sigma`. Subclass ids enumerate `(superclass, child)` pairs in
/// superclass-major order; samples are laid out subclass-major, so class
/// blocks are contiguous and ascending.
pub fn gen_synthetic(
    n_super: usize,
    n_sub_per_super: usize,
    samples_per_sub: usize,
    d: usize,
    separation: SeparationParams,
    seed: u64,
) -> Result<SyntheticDataset> {
    if n_super == 0 || n_sub_per_super == 0 || samples_per_sub == 0 {
        return Err(Error::InvalidArgument("class and sample counts must be >= 1"));
    }
    if d < 2 {
        return Err(Error::InvalidArgument("feature dim must be >= 2"));
    }
    separation.validate()?;

    let n_sub_total = n_super * n_sub_per_super;
    let n = n_sub_total * samples_per_sub;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Draw order is part of the format: super centers, then sub centers,
    // then samples, each superclass-major.
    let mut super_centers = Matrix::zeros(n_super, d);
    for s in 0..n_super {
        fill_gaussian(&mut rng, super_centers.row_mut(s), separation.super_spread);
    }
    let mut sub_centers = Matrix::zeros(n_sub_total, d);
    for s in 0..n_super {
        for c in 0..n_sub_per_super {
            let k = s * n_sub_per_super + c;
            fill_gaussian(&mut rng, sub_centers.row_mut(k), separation.sub_spread);
            for (v, &base) in sub_centers.row_mut(k).iter_mut().zip(super_centers.row(s)) {
                *v += base;
            }
        }
    }
    let mut features = Matrix::zeros(n, d);
    let mut subclass = Vec::with_capacity(n);
    let mut superclass = Vec::with_capacity(n);
    let mut noise = vec![0.0; d];
    for k in 0..n_sub_total {
        for m in 0..samples_per_sub {
            let i = k * samples_per_sub + m;
            fill_gaussian(&mut rng, &mut noise, separation.within_sigma);
            for ((v, &center), &eps) in features
                .row_mut(i)
                .iter_mut()
                .zip(sub_centers.row(k))
                .zip(noise.iter())
            {
                *v = center + eps;
            }
            subclass.push(k);
            superclass.push(k / n_sub_per_super);
        }
    }
    SyntheticDataset::new(features, subclass, superclass, n_sub_total, n_super)
}

/// Synthesizes unit-norm caption embeddings for a dataset. Each subclass
/// gets an anchor direction (its superclass direction plus a perturbation);
/// each sample embeds as its anchor plus isotropic noise at `caption_noise`,
/// renormalized. With zero noise every sample of a subclass embeds
/// identically.
pub fn synth_caption_embeddings(
    dataset: &SyntheticDataset,
    e: usize,
    caption_noise: f64,
    seed: u64,
) -> Result<Matrix> {
    if e < 2 {
        return Err(Error::InvalidArgument("caption dim must be >= 2"));
    }
    if !caption_noise.is_finite() || caption_noise < 0.0 {
        return Err(Error::InvalidArgument("caption noise must be >= 0"));
    }
    let parents = dataset.subclass_parents()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let shared = unit_vector(&mut rng, e);
    let resid = libm::sqrt(1.0 - CAPTION_SHARED_WEIGHT * CAPTION_SHARED_WEIGHT);
    let mut super_dirs: Vec<Vec<f64>> = Vec::with_capacity(dataset.n_superclasses());
    for _ in 0..dataset.n_superclasses() {
        let own = orthonormal_to(&mut rng, &shared);
        let mixed: Vec<f64> = shared
            .iter()
            .zip(own.iter())
            .map(|(&g, &o)| CAPTION_SHARED_WEIGHT * g + resid * o)
            .collect();
        super_dirs.push(normalized(mixed));
    }
    let mut anchors: Vec<Vec<f64>> = Vec::with_capacity(dataset.n_subclasses());
    for parent in &parents {
        let bump = orthonormal_to(&mut rng, &super_dirs[*parent]);
        let raw: Vec<f64> = super_dirs[*parent]
            .iter()
            .zip(bump.iter())
            .map(|(&u, &h)| u + CAPTION_SUB_PERTURBATION * h)
            .collect();
        anchors.push(normalized(raw));
    }
    let mut out = Matrix::zeros(dataset.n(), e);
    let mut noise = vec![0.0; e];
    for i in 0..dataset.n() {
        let anchor = &anchors[dataset.subclass()[i]];
        fill_gaussian(&mut rng, &mut noise, caption_noise);
        let raw: Vec<f64> = anchor
            .iter()
            .zip(noise.iter())
            .map(|(&a, &z)| a + z)
            .collect();
        out.row_mut(i).copy_from_slice(&normalized(raw));
    }
    Ok(out)
}

/// Row indices `subsample_per_class` would keep: at most `k_per_subclass`
/// per subclass, chosen uniformly without replacement; classes already at
/// or under the budget are kept whole without consuming randomness.
/// Indices stay in ascending order inside each class.
pub fn subsample_indices_per_class(
    dataset: &SyntheticDataset,
    k_per_subclass: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if k_per_subclass == 0 {
        return Err(Error::InvalidArgument("k_per_subclass must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for class in 0..dataset.n_subclasses() {
        let members: Vec<usize> = (0..dataset.n())
            .filter(|&i| dataset.subclass()[i] == class)
            .collect();
        if members.len() <= k_per_subclass {
            keep.extend_from_slice(&members);
        } else {
            let chosen = rand::seq::index::sample(&mut rng, members.len(), k_per_subclass);
            let mut picked: Vec<usize> = chosen.iter().map(|j| members[j]).collect();
            picked.sort_unstable();
            keep.extend_from_slice(&picked);
        }
    }
    Ok(keep)
}

/// Keeps at most `k_per_subclass` samples of every subclass, rows chosen by
/// `subsample_indices_per_class` with the same arguments.
pub fn subsample_per_class(
    dataset: &SyntheticDataset,
    k_per_subclass: usize,
    seed: u64,
) -> Result<SyntheticDataset> {
    let keep = subsample_indices_per_class(dataset, k_per_subclass, seed)?;
    Ok(dataset.select(&keep))
}
