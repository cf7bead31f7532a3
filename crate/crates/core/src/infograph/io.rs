//! Edge-list text export: one `src_kind src_id dst_kind dst_id weight` line
//! per edge. Isolated nodes are kept as `# node <kind> <id>` comment lines so
//! a graph round-trips exactly.

use std::io::{BufRead, Write};

use super::{InfoGraph, NodeRef};
use crate::{Error, Result};

fn fmt_node(n: NodeRef) -> String {
    match n {
        NodeRef::Segment(id) => format!("segment {id}"),
        NodeRef::Anchor(c) => format!("anchor {c}"),
    }
}

fn parse_node(kind: &str, id: &str, line_no: usize) -> Result<NodeRef> {
    let bad = || Error::Format(format!("line {line_no}: bad node `{kind} {id}`"));
    match kind {
        "segment" => id.parse().map(NodeRef::Segment).map_err(|_| bad()),
        "anchor" => id.parse().map(NodeRef::Anchor).map_err(|_| bad()),
        _ => Err(bad()),
    }
}

pub fn write_edge_list<W: Write>(g: &InfoGraph, mut w: W) -> Result<()> {
    writeln!(w, "# src_kind src_id dst_kind dst_id weight")?;
    for &n in g.nodes() {
        if g.degree(n) == 0 {
            writeln!(w, "# node {}", fmt_node(n))?;
        }
    }
    for e in g.edges() {
        writeln!(w, "{} {} {}", fmt_node(e.a), fmt_node(e.b), e.weight)?;
    }
    Ok(())
}

pub fn read_edge_list<R: BufRead>(r: R) -> Result<InfoGraph> {
    let mut g = InfoGraph::default();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            [] => {}
            ["#", "node", kind, id] => {
                g.add_node(parse_node(kind, id, line_no)?);
            }
            [first, ..] if first.starts_with('#') => {}
            [sk, si, dk, di, w] => {
                let a = parse_node(sk, si, line_no)?;
                let b = parse_node(dk, di, line_no)?;
                let w: u32 = w
                    .parse()
                    .map_err(|_| Error::Format(format!("line {line_no}: bad weight `{w}`")))?;
                if !g.add_edge(a, b, w) {
                    return Err(Error::Format(format!(
                        "line {line_no}: self-loop or duplicate edge"
                    )));
                }
            }
            _ => {
                return Err(Error::Format(format!(
                    "line {line_no}: expected 5 fields, got {}",
                    fields.len()
                )))
            }
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infograph::{add_annotation_anchors, build_info_graph};
    use crate::siggen::{Segment, StreamId};

    #[test]
    fn round_trip_with_anchors_and_isolated_nodes() {
        let segs: Vec<Segment> = (0..6)
            .map(|i| Segment {
                seg_id: i,
                stream: StreamId::new(i as usize % 3, 0),
                t_start: (i / 3) as f64 * 30.0 + if i == 5 { 100.0 } else { 0.0 },
                t_end: (i / 3) as f64 * 30.0 + 30.0 + if i == 5 { 100.0 } else { 0.0 },
                sample_rate: 100.0,
                samples: vec![],
                label: None,
            })
            .collect();
        let g = add_annotation_anchors(build_info_graph(&segs), &[(0, 0), (3, 2)], 3).unwrap();
        let mut buf = Vec::new();
        write_edge_list(&g, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("segment 0 anchor 0 1"));
        let back = read_edge_list(buf.as_slice()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(read_edge_list("segment 1 segment".as_bytes()).is_err());
        assert!(read_edge_list("blob 1 segment 2 1".as_bytes()).is_err());
        assert!(read_edge_list("segment 1 segment 1 1".as_bytes()).is_err());
    }
}
