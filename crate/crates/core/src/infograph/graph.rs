use std::collections::{BTreeSet, HashMap, HashSet};

use super::NodeRef;
use crate::siggen::Segment;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    /// Lower endpoint in `NodeRef` order (segments sort before anchors).
    pub a: NodeRef,
    pub b: NodeRef,
    pub weight: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    /// Segment to segment: temporal overlap on different streams.
    Context,
    /// Segment to the anchor of its class.
    Annotation(usize),
}

impl Edge {
    pub fn kind(&self) -> EdgeKind {
        match self.b {
            NodeRef::Anchor(c) => EdgeKind::Annotation(c),
            NodeRef::Segment(_) => EdgeKind::Context,
        }
    }
}

/// Undirected graph, immutable once built. Edges are stored once and
/// queried symmetrically through the adjacency index.
#[derive(Clone, Debug, Default)]
pub struct InfoGraph {
    n_classes: usize,
    nodes: Vec<NodeRef>,
    index: HashMap<NodeRef, usize>,
    edges: Vec<Edge>,
    edge_index: HashSet<(NodeRef, NodeRef)>,
    adjacency: Vec<Vec<(usize, u32)>>,
}

impl PartialEq for InfoGraph {
    fn eq(&self, other: &Self) -> bool {
        let nodes = |g: &InfoGraph| g.nodes.iter().copied().collect::<BTreeSet<_>>();
        let edges = |g: &InfoGraph| g.edges.iter().copied().collect::<BTreeSet<_>>();
        self.n_classes == other.n_classes && nodes(self) == nodes(other) && edges(self) == edges(other)
    }
}

fn ordered(a: NodeRef, b: NodeRef) -> (NodeRef, NodeRef) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl InfoGraph {
    /// Graph over `segments` with no edges at all.
    pub fn isolated(segments: &[Segment]) -> Self {
        let mut g = Self::default();
        for s in segments {
            g.add_node(NodeRef::Segment(s.seg_id));
        }
        g
    }

    pub(crate) fn add_node(&mut self, n: NodeRef) -> usize {
        if let Some(&i) = self.index.get(&n) {
            return i;
        }
        let i = self.nodes.len();
        self.nodes.push(n);
        self.index.insert(n, i);
        self.adjacency.push(Vec::new());
        if let NodeRef::Anchor(c) = n {
            self.n_classes = self.n_classes.max(c + 1);
        }
        i
    }

    /// Inserts an undirected edge; returns false for self-loops and duplicates.
    pub(crate) fn add_edge(&mut self, x: NodeRef, y: NodeRef, weight: u32) -> bool {
        if x == y {
            return false;
        }
        let (a, b) = ordered(x, y);
        if !self.edge_index.insert((a, b)) {
            return false;
        }
        let ia = self.add_node(a);
        let ib = self.add_node(b);
        self.adjacency[ia].push((ib, weight));
        self.adjacency[ib].push((ia, weight));
        self.edges.push(Edge { a, b, weight });
        true
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn nodes(&self) -> &[NodeRef] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains_node(&self, n: NodeRef) -> bool {
        self.index.contains_key(&n)
    }

    pub fn has_edge(&self, x: NodeRef, y: NodeRef) -> bool {
        self.edge_index.contains(&ordered(x, y))
    }

    pub fn weight(&self, x: NodeRef, y: NodeRef) -> u32 {
        let Some(&ix) = self.index.get(&x) else { return 0 };
        let Some(&iy) = self.index.get(&y) else { return 0 };
        self.adjacency[ix]
            .iter()
            .find(|&&(j, _)| j == iy)
            .map_or(0, |&(_, w)| w)
    }

    pub fn degree(&self, n: NodeRef) -> usize {
        self.index.get(&n).map_or(0, |&i| self.adjacency[i].len())
    }

    pub fn neighbors(&self, n: NodeRef) -> impl Iterator<Item = (NodeRef, u32)> + '_ {
        self.index
            .get(&n)
            .into_iter()
            .flat_map(move |&i| self.adjacency[i].iter().map(move |&(j, w)| (self.nodes[j], w)))
    }

    pub fn context_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.kind() == EdgeKind::Context).count()
    }

    pub fn annotation_edge_count(&self) -> usize {
        self.edges.len() - self.context_edge_count()
    }
}

/// Link every pair of segments whose time intervals overlap by a positive
/// length and that come from different streams (station, channel).
pub fn build_info_graph(segments: &[Segment]) -> InfoGraph {
    let mut g = InfoGraph::isolated(segments);
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by(|&i, &j| {
        segments[i]
            .t_start
            .total_cmp(&segments[j].t_start)
            .then(segments[i].seg_id.cmp(&segments[j].seg_id))
    });
    let mut pairs = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let si = &segments[i];
        for &j in &order[k + 1..] {
            let sj = &segments[j];
            if sj.t_start >= si.t_end {
                break;
            }
            let overlap = si.t_end.min(sj.t_end) - sj.t_start;
            if overlap > 0.0 && si.stream != sj.stream {
                pairs.push(ordered(NodeRef::Segment(si.seg_id), NodeRef::Segment(sj.seg_id)));
            }
        }
    }
    pairs.sort_unstable();
    for (a, b) in pairs {
        g.add_edge(a, b, 1);
    }
    g
}

/// Add the `n_classes` anchor nodes and one weight-1 edge per labeled segment
/// to the anchor of its class. Repeated labels collapse into one edge.
pub fn add_annotation_anchors(
    mut g: InfoGraph,
    labeled: &[(u64, usize)],
    n_classes: usize,
) -> Result<InfoGraph> {
    for &(id, class) in labeled {
        if class >= n_classes {
            return Err(Error::Argument(format!(
                "segment {id} labeled {class}, only {n_classes} classes"
            )));
        }
        if !g.contains_node(NodeRef::Segment(id)) {
            return Err(Error::Argument(format!("unknown segment id {id}")));
        }
    }
    for c in 0..n_classes {
        g.add_node(NodeRef::Anchor(c));
    }
    for &(id, class) in labeled {
        g.add_edge(NodeRef::Segment(id), NodeRef::Anchor(class), 1);
    }
    Ok(g)
}
