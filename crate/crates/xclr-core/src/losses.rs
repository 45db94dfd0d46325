//! Contrastive objectives weighted by similarity structure, with analytic
//! gradients.
//!
//! The cross-entropy family (`xclr`, `simclr`, `supcon`, graph-weighted
//! softmax) shares one engine: a weighted softmax cross-entropy over cosine
//! similarities, differentiated through the row L2-normalization of `z`.
//! The remaining graph losses exist to witness the algebraic equivalences
//! between graph objectives.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::{SimilarityGraph, TargetBatch};
use crate::numerics::{self, Matrix, ProbRow, MIN_NORM};

/// Loss value plus gradient with respect to the raw (pre-normalization)
/// embeddings.
#[derive(Debug, Clone)]
pub struct LossResult {
    /// Loss value in nats; finite, and nonnegative for the cross-entropy
    /// family.
    pub value: f64,
    /// Same shape as the input `z`.
    pub grad_z: Matrix,
}

fn finish(value: f64, grad_z: Matrix) -> Result<LossResult> {
    if !value.is_finite() || !grad_z.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("loss output"));
    }
    Ok(LossResult { value, grad_z })
}

/// Row-normalized copy of `z` along with each row's original norm.
fn normalize_rows(z: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut zn = z.clone();
    let mut norms = Vec::with_capacity(z.rows());
    for r in 0..z.rows() {
        let n = numerics::norm(z.row(r));
        if n < MIN_NORM {
            return Err(Error::ZeroNormRow(r));
        }
        for v in zn.row_mut(r) {
            *v /= n;
        }
        norms.push(n);
    }
    Ok((zn, norms))
}

/// Pulls a gradient on the normalized rows back through the normalization:
/// `grad_z_a = (g_a - (g_a . zn_a) zn_a) / norm_a`.
fn chain_row_normalization(grad_zn: &Matrix, zn: &Matrix, norms: &[f64]) -> Matrix {
    let mut out = grad_zn.clone();
    for r in 0..zn.rows() {
        let g = grad_zn.row(r);
        let u = zn.row(r);
        let radial = numerics::dot(g, u);
        let row = out.row_mut(r);
        for (o, (&gv, &uv)) in row.iter_mut().zip(g.iter().zip(u.iter())) {
            *o = (gv - radial * uv) / norms[r];
        }
    }
    out
}

/// Shared engine: `value = sum_ij W_ij (lse_i - C_ij / tau)` where `C` is
/// the cosine-similarity matrix of `z` and `lse_i` the log-sum-exp of row
/// `i` over the allowed positions (all `j`, or all `j != i` when
/// `exclude_self`). Weights must be nonnegative and zero outside the
/// allowed positions.
///
/// Gradient: `D_ij = (r_i p_ij - W_ij) / tau` on allowed positions with
/// `r_i` the row weight sum, pulled back through `C = Zn Zn^T` and the row
/// normalization.
fn weighted_softmax_ce(
    z: &Matrix,
    weight_at: &dyn Fn(usize, usize) -> f64,
    exclude_self: bool,
    tau: f64,
) -> Result<LossResult> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::NonPositiveTemperature(tau));
    }
    let n = z.rows();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let (zn, norms) = normalize_rows(z)?;
    let cos = zn.matmul_transpose_b(&zn)?;

    let mut value = 0.0;
    let mut d = Matrix::zeros(n, n);
    let mut probs = vec![0.0; n];
    for i in 0..n {
        let row = cos.row(i);
        let mut max = f64::NEG_INFINITY;
        for (j, &c) in row.iter().enumerate() {
            if !(exclude_self && j == i) && c > max {
                max = c;
            }
        }
        let mut sum = 0.0;
        for (j, &c) in row.iter().enumerate() {
            if exclude_self && j == i {
                probs[j] = 0.0;
            } else {
                let e = libm::exp((c - max) / tau);
                probs[j] = e;
                sum += e;
            }
        }
        let lse = max / tau + libm::log(sum);
        let mut r_i = 0.0;
        for j in 0..n {
            if exclude_self && j == i {
                continue;
            }
            probs[j] /= sum;
            let w = weight_at(i, j);
            if w != 0.0 {
                value += w * (lse - row[j] / tau);
                r_i += w;
            }
        }
        for j in 0..n {
            if exclude_self && j == i {
                continue;
            }
            d.set(i, j, (r_i * probs[j] - weight_at(i, j)) / tau);
        }
    }

    // value depends on Zn only through C; dC/dZn splits into the row and
    // column contributions D + D^T.
    let mut sym = d.transpose();
    sym.add_scaled(&d, 1.0)?;
    let grad_zn = sym.matmul(&zn)?;
    let grad_z = chain_row_normalization(&grad_zn, &zn, &norms);
    finish(value, grad_z)
}

/// Softmax over cosine similarities for each anchor, self excluded.
pub fn predicted_rows(z: &Matrix, tau: f64) -> Result<Vec<ProbRow>> {
    if tau.is_nan() || tau <= 0.0 {
        return Err(Error::NonPositiveTemperature(tau));
    }
    if z.rows() < 2 {
        return Err(Error::TooFewSamples {
            got: z.rows(),
            need: 2,
        });
    }
    let cos = numerics::cosine_similarity_matrix(z, z)?;
    let mut rows = Vec::with_capacity(z.rows());
    for i in 0..z.rows() {
        rows.push(numerics::row_softmax(cos.row(i), tau, Some(i))?);
    }
    Ok(rows)
}

/// Mean cross-entropy between soft targets and the predicted rows:
/// `(1/n) sum_i H(s_i, p_i)`, with gradient through the cosine softmax and
/// the row normalization of `z`.
pub fn xclr_loss(z: &Matrix, targets: &TargetBatch, tau: f64) -> Result<LossResult> {
    if z.rows() != targets.size() {
        return Err(Error::SizeMismatch {
            left: z.rows(),
            right: targets.size(),
        });
    }
    let inv_n = 1.0 / z.rows() as f64;
    weighted_softmax_ce(
        z,
        &|i, j| targets.row(i).get(j) * inv_n,
        true,
        tau,
    )
}

/// InfoNCE with the sibling view as the only positive. Delegates to
/// [`xclr_loss`] with one-hot targets.
pub fn simclr_loss(z: &Matrix, pair_index: &[usize], tau: f64) -> Result<LossResult> {
    let targets = TargetBatch::one_hot(pair_index)?;
    xclr_loss(z, &targets, tau)
}

/// Supervised contrastive loss: targets uniform over all same-label slots.
/// Delegates to [`xclr_loss`].
pub fn supcon_loss(
    z: &Matrix,
    labels: &[usize],
    pair_index: &[usize],
    tau: f64,
) -> Result<LossResult> {
    if z.rows() != labels.len() {
        return Err(Error::SizeMismatch {
            left: z.rows(),
            right: labels.len(),
        });
    }
    let targets = TargetBatch::supcon(labels, pair_index)?;
    xclr_loss(z, &targets, tau)
}

/// Graph-matching loss `|| Z Z^T - G ||_F^2` with gradient `4 (Z Z^T - G) Z`.
/// Operates on raw `z`; no normalization.
pub fn vic2_graph_loss(z: &Matrix, g: &SimilarityGraph) -> Result<LossResult> {
    if z.rows() != g.n() {
        return Err(Error::SizeMismatch {
            left: z.rows(),
            right: g.n(),
        });
    }
    let mut r = z.matmul_transpose_b(z)?;
    r.add_scaled(g.values(), -1.0)?;
    let value = r.frobenius_sq();
    let mut grad = r.matmul(z)?;
    grad.scale(4.0);
    finish(value, grad)
}

/// Graph-weighted softmax cross-entropy
/// `-sum_ij G_ij log softmax_j(<zn_i, zn_j> / tau)`.
///
/// `exclude_self` drops `j = i` from both the softmax support and the
/// weighted sum; the batch form of the objective uses `true`.
pub fn simclr_graph_loss(
    z: &Matrix,
    g: &SimilarityGraph,
    tau: f64,
    exclude_self: bool,
) -> Result<LossResult> {
    if z.rows() != g.n() {
        return Err(Error::SizeMismatch {
            left: z.rows(),
            right: g.n(),
        });
    }
    weighted_softmax_ce(z, &|i, j| g.get(i, j), exclude_self, tau)
}

/// Cross-correlation loss `|| Zc^T G Zc - I ||_F^2` over column-normalized
/// `Zc`, with analytic gradient through the column normalization.
pub fn barlow_graph_loss(z: &Matrix, g: &SimilarityGraph) -> Result<LossResult> {
    if z.rows() != g.n() {
        return Err(Error::SizeMismatch {
            left: z.rows(),
            right: g.n(),
        });
    }
    let n = z.rows();
    let k = z.cols();
    let mut col_norms = vec![0.0; k];
    for i in 0..n {
        for (c, &v) in z.row(i).iter().enumerate() {
            col_norms[c] += v * v;
        }
    }
    for (c, s) in col_norms.iter_mut().enumerate() {
        *s = libm::sqrt(*s);
        if *s < MIN_NORM {
            return Err(Error::ZeroNormColumn(c));
        }
    }
    let mut zc = z.clone();
    for i in 0..n {
        for (c, v) in zc.row_mut(i).iter_mut().enumerate() {
            *v /= col_norms[c];
        }
    }

    let t = g.values().matmul(&zc)?;
    let mut m = zc.transpose().matmul(&t)?;
    for c in 0..k {
        m.set(c, c, m.get(c, c) - 1.0);
    }
    let value = m.frobenius_sq();

    // d/dZc = 2 G Zc (M + M^T); exact even when M carries rounding
    // asymmetry.
    let mut msym = m.transpose();
    msym.add_scaled(&m, 1.0)?;
    let mut grad_zc = t.matmul(&msym)?;
    grad_zc.scale(2.0);

    // Chain through per-column normalization.
    let mut grad = grad_zc.clone();
    for c in 0..k {
        let mut radial = 0.0;
        for i in 0..n {
            radial += grad_zc.get(i, c) * zc.get(i, c);
        }
        for i in 0..n {
            let v = (grad_zc.get(i, c) - radial * zc.get(i, c)) / col_norms[c];
            grad.set(i, c, v);
        }
    }
    finish(value, grad)
}
