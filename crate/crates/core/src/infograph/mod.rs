//! The information graph: segment nodes, per-class anchor nodes, context and
//! annotation edges, plus balanced edge sampling and batch assembly.

mod batch;
mod graph;
mod io;
mod sample;

use serde::{Deserialize, Serialize};

pub use batch::{build_batch, expand_second_order, Batch};
pub use graph::{add_annotation_anchors, build_info_graph, Edge, EdgeKind, InfoGraph};
pub use io::{read_edge_list, write_edge_list};
pub use sample::{sample_edges, BalanceQuotas, EdgeSample};

/// Node identity: a segment (by `seg_id`) or the anchor of a class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeRef {
    Segment(u64),
    Anchor(usize),
}

impl NodeRef {
    pub fn is_anchor(&self) -> bool {
        matches!(self, NodeRef::Anchor(_))
    }

    pub fn anchor_class(&self) -> Option<usize> {
        match *self {
            NodeRef::Anchor(c) => Some(c),
            NodeRef::Segment(_) => None,
        }
    }

    pub fn segment_id(&self) -> Option<u64> {
        match *self {
            NodeRef::Segment(id) => Some(id),
            NodeRef::Anchor(_) => None,
        }
    }
}
