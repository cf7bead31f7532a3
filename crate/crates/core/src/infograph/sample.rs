use log::warn;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EdgeKind, InfoGraph, NodeRef};
use crate::{Error, Result};

/// Per-batch edge budget: annotation edges split equally over classes, the
/// rest drawn from context edges so that context ≈ ratio × annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceQuotas {
    pub per_class: Vec<usize>,
    pub context: usize,
    pub unlabeled_ratio: f64,
}

/// Split `total` into `parts` integers that differ by at most one.
fn balanced_split(total: usize, parts: usize) -> Vec<usize> {
    if parts == 0 {
        return Vec::new();
    }
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}

impl BalanceQuotas {
    pub fn new(n_e: usize, n_classes: usize, unlabeled_ratio: f64) -> Result<Self> {
        if !(unlabeled_ratio > 0.0 && unlabeled_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "unlabeled ratio must be positive, got {unlabeled_ratio}"
            )));
        }
        let annotated = if n_classes == 0 {
            0
        } else {
            ((n_e as f64 / (1.0 + unlabeled_ratio)).round() as usize).clamp(1, n_e)
        };
        Ok(Self {
            per_class: balanced_split(annotated, n_classes),
            context: n_e - annotated,
            unlabeled_ratio,
        })
    }

    pub fn total(&self) -> usize {
        self.context + self.per_class.iter().sum::<usize>()
    }

    /// Move slots of empty buckets onto the non-empty ones, keeping the
    /// per-class counts within one of each other.
    fn resolve(&self, context_available: bool, class_available: &[bool]) -> (usize, Vec<usize>) {
        let n_e = self.total();
        let live: Vec<usize> = (0..self.per_class.len())
            .filter(|&c| class_available.get(c).copied().unwrap_or(false))
            .collect();
        let mut annotated: usize = self.per_class.iter().sum();
        let mut context = self.context;
        if live.is_empty() {
            context += annotated;
            annotated = 0;
        } else if !context_available {
            annotated += context;
            context = 0;
        }
        let mut per_class = vec![0; self.per_class.len()];
        for (c, k) in live.iter().zip(balanced_split(annotated, live.len())) {
            per_class[*c] = k;
        }
        debug_assert_eq!(context + per_class.iter().sum::<usize>(), n_e);
        (context, per_class)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeSample {
    pub edges: Vec<(NodeRef, NodeRef)>,
}

impl EdgeSample {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

fn draw<R: Rng + ?Sized>(bucket: &[usize], k: usize, rng: &mut R, name: &str) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    if bucket.len() >= k {
        index::sample(rng, bucket.len(), k)
            .into_iter()
            .map(|i| bucket[i])
            .collect()
    } else {
        warn!(
            "{name} bucket holds {} edges for {k} slots, sampling with replacement",
            bucket.len()
        );
        (0..k).map(|_| bucket[rng.random_range(0..bucket.len())]).collect()
    }
}

/// Draw exactly `n_e` edges according to `quotas`.
///
/// Each bucket (context edges, annotation edges of class c) is sampled
/// uniformly without replacement, falling back to replacement when a bucket
/// is smaller than its quota. Quotas of empty buckets move to the others.
pub fn sample_edges<R: Rng + ?Sized>(
    g: &InfoGraph,
    n_e: usize,
    rng: &mut R,
    quotas: &BalanceQuotas,
) -> Result<EdgeSample> {
    if g.edges().is_empty() {
        return Err(Error::Sampling("graph has no edges".into()));
    }
    if quotas.total() != n_e {
        return Err(Error::Sampling(format!(
            "quotas cover {} edges, batch needs {n_e}",
            quotas.total()
        )));
    }
    let mut context = Vec::new();
    let mut per_class = vec![Vec::new(); quotas.per_class.len()];
    for (i, e) in g.edges().iter().enumerate() {
        match e.kind() {
            EdgeKind::Context => context.push(i),
            EdgeKind::Annotation(c) => {
                if let Some(b) = per_class.get_mut(c) {
                    b.push(i)
                }
            }
        }
    }
    let available: Vec<bool> = per_class.iter().map(|b| !b.is_empty()).collect();
    let (n_ctx, n_cls) = quotas.resolve(!context.is_empty(), &available);
    if n_ctx > 0 && context.is_empty() {
        return Err(Error::Sampling(
            "no edges match the sampling quotas".into(),
        ));
    }
    let mut picked = draw(&context, n_ctx, rng, "context");
    for (c, (bucket, &k)) in per_class.iter().zip(&n_cls).enumerate() {
        picked.extend(draw(bucket, k, rng, &format!("class-{c} annotation")));
    }
    Ok(EdgeSample {
        edges: picked
            .into_iter()
            .map(|i| (g.edges()[i].a, g.edges()[i].b))
            .collect(),
    })
}
