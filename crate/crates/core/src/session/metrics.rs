//! Exploration metrics over the provenance graph.
//!
//! A direction is a root card. Each root-to-leaf path reachable from it is a
//! branch, and a branch's depth is its edge count. A card reachable through
//! several parents (a collage) is counted once per path through it.
//!
//! Path counts and depth sums are accumulated bottom-up in topological order,
//! so the cost is linear in the graph size even when the number of paths is
//! exponential.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::card::{CardId, ProvenanceGraph};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExplorationMetrics {
    pub directions: usize,
    pub mean_branches: f64,
    pub mean_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("provenance graph contains a cycle")]
    CyclicGraph,
    #[error("path count overflows 128 bits")]
    Overflow,
}

#[derive(Debug, Clone, Copy, Default)]
struct Paths {
    count: u128,
    depth_sum: u128,
}

pub fn compute_metrics(graph: &ProvenanceGraph) -> Result<ExplorationMetrics, MetricsError> {
    let order = graph.topological_order().ok_or(MetricsError::CyclicGraph)?;
    let children = graph.child_map();
    let mut paths: BTreeMap<&CardId, Paths> = BTreeMap::new();

    for node in order.into_iter().rev() {
        let kids = children.get(node).map(Vec::as_slice).unwrap_or_default();
        let p = if kids.is_empty() {
            Paths { count: 1, depth_sum: 0 }
        } else {
            let mut acc = Paths::default();
            for kid in kids {
                let k = paths[kid];
                acc.count = acc.count.checked_add(k.count).ok_or(MetricsError::Overflow)?;
                // every path below the child gets one more edge
                let extended = k.depth_sum.checked_add(k.count).ok_or(MetricsError::Overflow)?;
                acc.depth_sum = acc.depth_sum.checked_add(extended).ok_or(MetricsError::Overflow)?;
            }
            acc
        };
        paths.insert(node, p);
    }

    let mut directions = 0usize;
    let mut branches: u128 = 0;
    let mut depth: u128 = 0;
    for root in graph.roots() {
        let p = paths[root];
        directions += 1;
        branches = branches.checked_add(p.count).ok_or(MetricsError::Overflow)?;
        depth = depth.checked_add(p.depth_sum).ok_or(MetricsError::Overflow)?;
    }
    if directions == 0 {
        return Ok(ExplorationMetrics::default());
    }
    Ok(ExplorationMetrics {
        directions,
        mean_branches: branches as f64 / directions as f64,
        mean_depth: depth as f64 / branches as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::card::{InstrumentKind, ProvenanceEdge};

    fn graph(nodes: &[&str], edges: &[(&str, &str)]) -> ProvenanceGraph {
        let mut g = ProvenanceGraph::new();
        for n in nodes {
            g.add_node((*n).into()).unwrap();
        }
        for (p, c) in edges {
            g.add_edge(ProvenanceEdge::new(*p, *c, InstrumentKind::Collage)).unwrap();
        }
        g
    }

    #[test]
    fn empty_graph_is_all_zero() {
        assert_eq!(compute_metrics(&ProvenanceGraph::new()).unwrap(), ExplorationMetrics::default());
    }

    #[test]
    fn chain_and_fork() {
        let chain = compute_metrics(&graph(&["r", "a", "b"], &[("r", "a"), ("a", "b")])).unwrap();
        assert_eq!(chain, ExplorationMetrics { directions: 1, mean_branches: 1.0, mean_depth: 2.0 });
        let fork = compute_metrics(&graph(&["r", "a", "b"], &[("r", "a"), ("r", "b")])).unwrap();
        assert_eq!(fork, ExplorationMetrics { directions: 1, mean_branches: 2.0, mean_depth: 1.0 });
    }

    #[test]
    fn collage_counts_once_per_path() {
        // r1 -> c, r2 -> c, c -> d : two directions, one branch each of depth 2
        let m = compute_metrics(&graph(&["r1", "r2", "c", "d"], &[("r1", "c"), ("r2", "c"), ("c", "d")])).unwrap();
        assert_eq!(m, ExplorationMetrics { directions: 2, mean_branches: 1.0, mean_depth: 2.0 });
    }

    #[test]
    fn lone_card_is_one_direction_of_depth_zero() {
        let m = compute_metrics(&graph(&["a", "b"], &[])).unwrap();
        assert_eq!(m, ExplorationMetrics { directions: 2, mean_branches: 1.0, mean_depth: 0.0 });
    }

    #[test]
    fn cyclic_input_is_rejected() {
        let g: ProvenanceGraph = serde_json::from_value(serde_json::json!({
            "nodes": ["a", "b"],
            "edges": [
                {"parent": "a", "child": "b", "kind": "collage"},
                {"parent": "b", "child": "a", "kind": "collage"}
            ]
        }))
        .unwrap();
        assert_eq!(compute_metrics(&g), Err(MetricsError::CyclicGraph));
    }
}
