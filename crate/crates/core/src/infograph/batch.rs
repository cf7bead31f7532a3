use std::collections::HashMap;

use super::{EdgeSample, InfoGraph, NodeRef};

/// A deduplicated node set with its adjacency `A` (all graph edges among the
/// batch nodes) and the second-order expansion `B = A + A²`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub nodes: Vec<NodeRef>,
    /// `N × N`, row-major.
    pub a: Vec<u32>,
    /// `N × N`, row-major.
    pub b: Vec<u32>,
    /// Sampled edges re-indexed into `0..N`, in sample order.
    pub edge_list: Vec<(usize, usize)>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn a_at(&self, i: usize, j: usize) -> u32 {
        self.a[i * self.nodes.len() + j]
    }

    #[inline]
    pub fn b_at(&self, i: usize, j: usize) -> u32 {
        self.b[i * self.nodes.len() + j]
    }

    /// `(batch index, seg_id)` for every segment node.
    pub fn segment_slots(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.segment_id().map(|id| (i, id)))
    }

    /// `(batch index, class)` for every anchor node.
    pub fn anchor_slots(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.anchor_class().map(|c| (i, c)))
    }
}

/// `A + A·A` for a square row-major matrix, using each row's non-zeros.
pub fn expand_second_order(a: &[u32], n: usize) -> Vec<u32> {
    let nz: Vec<Vec<(usize, u32)>> = (0..n)
        .map(|i| {
            (0..n)
                .filter_map(|j| {
                    let w = a[i * n + j];
                    (w != 0).then_some((j, w))
                })
                .collect()
        })
        .collect();
    let mut b = a.to_vec();
    for i in 0..n {
        for &(k, w_ik) in &nz[i] {
            for &(j, w_kj) in &nz[k] {
                b[i * n + j] += w_ik * w_kj;
            }
        }
    }
    b
}

pub fn build_batch(g: &InfoGraph, sample: &EdgeSample) -> Batch {
    let mut nodes = Vec::new();
    let mut pos: HashMap<NodeRef, usize> = HashMap::new();
    let mut slot = |n: NodeRef, nodes: &mut Vec<NodeRef>| {
        *pos.entry(n).or_insert_with(|| {
            nodes.push(n);
            nodes.len() - 1
        })
    };
    let edge_list: Vec<(usize, usize)> = sample
        .edges
        .iter()
        .map(|&(s, t)| (slot(s, &mut nodes), slot(t, &mut nodes)))
        .collect();

    let n = nodes.len();
    let index: HashMap<NodeRef, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut a = vec![0u32; n * n];
    for (i, &v) in nodes.iter().enumerate() {
        for (u, w) in g.neighbors(v) {
            if let Some(&j) = index.get(&u) {
                a[i * n + j] = w;
            }
        }
    }
    let b = expand_second_order(&a, n);
    Batch {
        nodes,
        a,
        b,
        edge_list,
    }
}
