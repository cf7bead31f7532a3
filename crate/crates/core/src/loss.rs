//! Graph-weighted contrastive loss and softmax cross-entropy.
//!
//! For a source `s` and target `t` of a sampled edge, with batch adjacency
//! `B = A + A²`, cosine similarity `φ` and temperature `τ`:
//!
//! ```text
//! L(s,t) = −B[s][t] · ( φ(z_s, z_t)/τ − ln Σ_{n : B[s][n] = 0} exp(φ(z_s, z_n)/τ) )
//! ```
//!
//! Every neighbour of `s` in `B` (including `t` and `s` itself once it has
//! an edge) is left out of the denominator. A pair whose denominator is empty
//! is skipped rather than clamped.

use serde::{Deserialize, Serialize};

use crate::infograph::Batch;
use crate::linalg::{dot, log_sum_exp, norm, Matrix};
use crate::model::AnchorVectors;
use crate::scalar::Real;
use crate::{Error, Result};

/// How edges to annotation anchors enter the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Anchor nodes get no embedding. Each sampled annotation edge
    /// `(i, anchor c)` is replaced by the pairs between `i` and every other
    /// batch segment attached to anchor `c`.
    Link,
    /// Anchor nodes carry the fixed class vector and act as targets and
    /// negatives like any other node; they receive no gradient.
    Anchor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    pub strategy: Strategy,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            strategy: Strategy::Anchor,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

pub fn cosine_sim<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::DegenerateSimilarity);
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairLossResult<T> {
    pub value: T,
    /// Gradient w.r.t. every row of `Z`; rows not involved are zero.
    pub dz: Matrix<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum PairOutcome<T> {
    Evaluated(PairLossResult<T>),
    /// Every node is a neighbour of the source: the denominator is empty.
    Skipped,
}

fn check_b(b: &[u32], n: usize) -> Result<()> {
    if b.len() != n * n {
        return Err(Error::Argument(format!(
            "adjacency has {} entries for {n} nodes",
            b.len()
        )));
    }
    Ok(())
}

/// Rows scaled to unit length plus their original norms.
fn unit_rows<T: Real>(z: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
    let mut u = z.clone();
    let mut norms = Vec::with_capacity(z.rows());
    for r in 0..z.rows() {
        let n = norm(z.row(r));
        if n == T::zero() {
            return Err(Error::DegenerateSimilarity);
        }
        u.row_mut(r).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok((u, norms))
}

/// Gradient of `φ(a, b)` w.r.t. `a`: `(b̂ − φ·â)/‖a‖`.
fn add_cos_grad<T: Real>(dst: &mut [T], a_hat: &[T], b_hat: &[T], phi: T, a_norm: T, scale: T) {
    for ((d, &ah), &bh) in dst.iter_mut().zip(a_hat).zip(b_hat) {
        *d += scale * (bh - phi * ah) / a_norm;
    }
}

/// One term of the loss, evaluated directly from `Z` with its own gradient.
pub fn pair_loss<T: Real>(z: &Matrix<T>, b: &[u32], s: usize, t: usize, tau: T) -> Result<PairOutcome<T>> {
    let n = z.rows();
    check_b(b, n)?;
    if s >= n || t >= n || s == t {
        return Err(Error::Argument(format!("invalid pair ({s}, {t}) for {n} nodes")));
    }
    let w = b[s * n + t];
    let mut dz = Matrix::zeros(n, z.cols());
    if w == 0 {
        return Ok(PairOutcome::Evaluated(PairLossResult { value: T::zero(), dz }));
    }
    let denom: Vec<usize> = (0..n).filter(|&k| b[s * n + k] == 0).collect();
    if denom.is_empty() {
        return Ok(PairOutcome::Skipped);
    }
    let (u, norms) = unit_rows(z)?;
    let phi = |k: usize| dot(u.row(s), u.row(k));
    let logits: Vec<T> = denom.iter().map(|&k| phi(k) / tau).collect();
    let lse = log_sum_exp(&logits);
    let wt = T::from_u32(w).expect("u32 weight");
    let phi_st = phi(t);
    let value = -wt * (phi_st / tau - lse);

    // ∂L/∂φ(s,t) = −w/τ ; ∂L/∂φ(s,k) = w/τ · softmax_k over the denominator
    let g_t = -wt / tau;
    add_cos_grad(dz.row_mut(s), u.row(s), u.row(t), phi_st, norms[s], g_t);
    add_cos_grad(dz.row_mut(t), u.row(t), u.row(s), phi_st, norms[t], g_t);
    for (&k, &l) in denom.iter().zip(&logits) {
        let g = wt / tau * (l - lse).exp();
        let p = phi(k);
        let (us, uk) = (u.row(s).to_vec(), u.row(k).to_vec());
        add_cos_grad(dz.row_mut(s), &us, &uk, p, norms[s], g);
        add_cos_grad(dz.row_mut(k), &uk, &us, p, norms[k], g);
    }
    Ok(PairOutcome::Evaluated(PairLossResult { value, dz }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchLoss<T> {
    /// Mean over evaluated directed pairs.
    pub value: T,
    /// `N × d`, aligned with the batch nodes; anchor rows are zero.
    pub dz: Matrix<T>,
    pub evaluated: usize,
    pub skipped: usize,
}

/// Directed pairs (in `0..N`) the loss is evaluated on for a batch.
///
/// Both orientations of every sampled edge are included. Under
/// [`Strategy::Link`] an annotation edge `(i, anchor c)` expands to both
/// orientations of `(i, j)` for every other segment `j` adjacent to anchor `c`.
pub fn evaluation_pairs(batch: &Batch, strategy: Strategy) -> Vec<(usize, usize)> {
    let n = batch.len();
    let mut pairs = Vec::with_capacity(2 * batch.edge_list.len());
    for &(s, t) in &batch.edge_list {
        let anchor_end = match (batch.nodes[s].is_anchor(), batch.nodes[t].is_anchor()) {
            (false, false) => None,
            (true, false) => Some((t, s)),
            (false, true) => Some((s, t)),
            (true, true) => continue,
        };
        match (anchor_end, strategy) {
            (None, _) | (Some(_), Strategy::Anchor) => {
                pairs.push((s, t));
                pairs.push((t, s));
            }
            (Some((seg, anchor)), Strategy::Link) => {
                for j in 0..n {
                    if j != seg && !batch.nodes[j].is_anchor() && batch.a_at(j, anchor) > 0 {
                        pairs.push((seg, j));
                        pairs.push((j, seg));
                    }
                }
            }
        }
    }
    pairs
}

/// Mean loss over [`evaluation_pairs`] and its gradient w.r.t. `z`.
///
/// `z` has one row per batch node. Rows of anchor nodes are ignored: under
/// `Anchor` they are replaced by the class vectors from `anchors`, under
/// `Link` anchor nodes take part only through `B`.
pub fn batch_contrastive_loss<T: Real>(
    batch: &Batch,
    z: &Matrix<T>,
    anchors: &AnchorVectors<T>,
    cfg: &LossConfig,
) -> Result<BatchLoss<T>> {
    cfg.validate()?;
    let n = batch.len();
    if z.rows() != n {
        return Err(Error::Argument(format!("{} embeddings for {n} batch nodes", z.rows())));
    }
    let d = z.cols();
    let tau = T::lit(cfg.tau);

    // Nodes that own an embedding row in the loss.
    let live: Vec<usize> = match cfg.strategy {
        Strategy::Anchor => (0..n).collect(),
        Strategy::Link => (0..n).filter(|&i| !batch.nodes[i].is_anchor()).collect(),
    };
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in live.iter().enumerate() {
        pos[i] = k;
    }
    let m = live.len();
    let mut zl = z.select_rows(&live);
    if cfg.strategy == Strategy::Anchor {
        for (i, c) in batch.anchor_slots() {
            if c >= anchors.n_classes() || anchors.dim() != d {
                return Err(Error::Argument(format!(
                    "no anchor vector of dim {d} for class {c}"
                )));
            }
            zl.row_mut(pos[i]).copy_from_slice(anchors.vector(c));
        }
    }
    let bl: Vec<u32> = live
        .iter()
        .flat_map(|&i| live.iter().map(move |&j| batch.b_at(i, j)))
        .collect();

    let (u, norms) = unit_rows(&zl)?;
    let mut sim = vec![T::zero(); m * m];
    for i in 0..m {
        for j in 0..m {
            sim[i * m + j] = dot(u.row(i), u.row(j));
        }
    }

    // Accumulate ∂L/∂φ into g, then map to embeddings once.
    let mut g = vec![T::zero(); m * m];
    let mut total = T::zero();
    let (mut evaluated, mut skipped) = (0usize, 0usize);
    let mut logits = Vec::with_capacity(m);
    for (s, t) in evaluation_pairs(batch, cfg.strategy) {
        let (s, t) = (pos[s], pos[t]);
        let w = bl[s * m + t];
        if w == 0 {
            evaluated += 1;
            continue;
        }
        logits.clear();
        logits.extend((0..m).filter(|&k| bl[s * m + k] == 0).map(|k| sim[s * m + k] / tau));
        if logits.is_empty() {
            skipped += 1;
            continue;
        }
        let lse = log_sum_exp(&logits);
        let wt = T::from_u32(w).expect("u32 weight");
        total += -wt * (sim[s * m + t] / tau - lse);
        g[s * m + t] -= wt / tau;
        for k in 0..m {
            if bl[s * m + k] == 0 {
                g[s * m + k] += wt / tau * (sim[s * m + k] / tau - lse).exp();
            }
        }
        evaluated += 1;
    }
    if evaluated == 0 {
        return Err(Error::BatchLoss(format!(
            "no evaluable pairs ({skipped} skipped for empty denominators)"
        )));
    }
    let inv = T::one() / T::from_usize_lossy(evaluated);

    // dÛ = (G + Gᵀ)·Û, then through the row normalisation.
    let mut dz = Matrix::zeros(n, d);
    for i in 0..m {
        if cfg.strategy == Strategy::Anchor && batch.nodes[live[i]].is_anchor() {
            continue;
        }
        let mut du = vec![T::zero(); d];
        for j in 0..m {
            let c = g[i * m + j] + g[j * m + i];
            if c != T::zero() {
                for (x, &y) in du.iter_mut().zip(u.row(j)) {
                    *x += c * y;
                }
            }
        }
        let proj = dot(&du, u.row(i));
        let row = dz.row_mut(live[i]);
        for ((r, &x), &ui) in row.iter_mut().zip(&du).zip(u.row(i)) {
            *r = (x - proj * ui) / norms[i] * inv;
        }
    }
    Ok(BatchLoss {
        value: total * inv,
        dz,
        evaluated,
        skipped,
    })
}

/// Softmax cross-entropy of one logit vector; gradient is `softmax − onehot`.
pub fn cross_entropy<T: Real>(logits: &[T], label: usize) -> Result<(T, Vec<T>)> {
    if label >= logits.len() {
        return Err(Error::Argument(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let lse = log_sum_exp(logits);
    let grad = logits
        .iter()
        .enumerate()
        .map(|(k, &l)| (l - lse).exp() - if k == label { T::one() } else { T::zero() })
        .collect();
    Ok((lse - logits[label], grad))
}

/// Mean cross-entropy over rows and its gradient w.r.t. the logits.
pub fn cross_entropy_batch<T: Real>(logits: &Matrix<T>, labels: &[usize]) -> Result<(T, Matrix<T>)> {
    if logits.rows() != labels.len() || labels.is_empty() {
        return Err(Error::Argument(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let inv = T::one() / T::from_usize_lossy(labels.len());
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    let mut total = T::zero();
    for (r, &y) in labels.iter().enumerate() {
        let (l, g) = cross_entropy(logits.row(r), y)?;
        total += l;
        for (dst, v) in grad.row_mut(r).iter_mut().zip(g) {
            *dst = v * inv;
        }
    }
    Ok((total * inv, grad))
}
