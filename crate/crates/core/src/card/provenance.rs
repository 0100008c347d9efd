use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CardId, InstrumentKind};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProvenanceEdge {
    pub parent: CardId,
    pub child: CardId,
    pub kind: InstrumentKind,
}

impl ProvenanceEdge {
    pub fn new(parent: impl Into<CardId>, child: impl Into<CardId>, kind: InstrumentKind) -> Self {
        Self { parent: parent.into(), child: child.into(), kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown card `{0}`")]
    UnknownCard(CardId),
    #[error("card `{0}` is already in the graph")]
    DuplicateCard(CardId),
    #[error("edge {parent} -> {child} would create a cycle")]
    Cycle { parent: CardId, child: CardId },
    #[error("card `{child}` already has a parent; only collage edges may share a child")]
    MultiParent { child: CardId },
    #[error("edge {parent} -> {child} already exists")]
    DuplicateEdge { parent: CardId, child: CardId },
}

/// Directed acyclic graph recording which instrument derived which card.
///
/// `Deserialize` does not check invariants; call [`ProvenanceGraph::validate`]
/// on anything read from outside.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceGraph {
    nodes: BTreeSet<CardId>,
    edges: Vec<ProvenanceEdge>,
}

impl ProvenanceGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &BTreeSet<CardId> {
        &self.nodes
    }

    pub fn edges(&self) -> &[ProvenanceEdge] {
        &self.edges
    }

    pub fn contains(&self, id: &CardId) -> bool {
        self.nodes.contains(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn add_node(&mut self, id: CardId) -> Result<(), GraphError> {
        if !self.nodes.insert(id.clone()) {
            return Err(GraphError::DuplicateCard(id));
        }
        Ok(())
    }

    /// Removes a card and every edge touching it. Its children lose that
    /// parent and may become roots. Returns the removed edges.
    pub fn remove_node(&mut self, id: &CardId) -> Result<Vec<ProvenanceEdge>, GraphError> {
        if !self.nodes.remove(id) {
            return Err(GraphError::UnknownCard(id.clone()));
        }
        let (removed, kept) =
            std::mem::take(&mut self.edges).into_iter().partition(|e| &e.parent == id || &e.child == id);
        self.edges = kept;
        Ok(removed)
    }

    pub fn parents<'a>(&'a self, id: &'a CardId) -> impl Iterator<Item = &'a ProvenanceEdge> + 'a {
        self.edges.iter().filter(move |e| &e.child == id)
    }

    pub fn children<'a>(&'a self, id: &'a CardId) -> impl Iterator<Item = &'a ProvenanceEdge> + 'a {
        self.edges.iter().filter(move |e| &e.parent == id)
    }

    pub fn roots(&self) -> impl Iterator<Item = &CardId> + '_ {
        let with_parent: BTreeSet<&CardId> = self.edges.iter().map(|e| &e.child).collect();
        self.nodes.iter().filter(move |n| !with_parent.contains(n))
    }

    /// Adjacency list keyed by parent, children in edge-insertion order.
    pub fn child_map(&self) -> BTreeMap<&CardId, Vec<&CardId>> {
        let mut map: BTreeMap<&CardId, Vec<&CardId>> = self.nodes.iter().map(|n| (n, Vec::new())).collect();
        for e in &self.edges {
            map.entry(&e.parent).or_default().push(&e.child);
        }
        map
    }

    fn reaches(&self, from: &CardId, target: &CardId) -> bool {
        let children = self.child_map();
        let mut stack = vec![from];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if n == target {
                return true;
            }
            if seen.insert(n) {
                if let Some(cs) = children.get(n) {
                    stack.extend(cs.iter().copied());
                }
            }
        }
        false
    }

    /// Adds an edge, keeping the graph acyclic and enforcing the parent rule:
    /// a child has either exactly one non-collage parent or any number of
    /// collage parents, never a mix.
    pub fn add_edge(&mut self, edge: ProvenanceEdge) -> Result<(), GraphError> {
        for id in [&edge.parent, &edge.child] {
            if !self.nodes.contains(id) {
                return Err(GraphError::UnknownCard(id.clone()));
            }
        }
        if edge.parent == edge.child || self.reaches(&edge.child, &edge.parent) {
            return Err(GraphError::Cycle { parent: edge.parent, child: edge.child });
        }
        let existing: Vec<&ProvenanceEdge> = self.parents(&edge.child).collect();
        if !existing.is_empty() {
            if existing.iter().any(|e| e.parent == edge.parent) {
                return Err(GraphError::DuplicateEdge { parent: edge.parent, child: edge.child });
            }
            let all_collage = existing.iter().all(|e| e.kind.allows_multiple_parents());
            if !(all_collage && edge.kind.allows_multiple_parents()) {
                return Err(GraphError::MultiParent { child: edge.child });
            }
        }
        self.edges.push(edge);
        Ok(())
    }

    /// Returns a graph with `edge` added, leaving `self` untouched.
    pub fn with_edge(&self, edge: ProvenanceEdge) -> Result<Self, GraphError> {
        let mut next = self.clone();
        next.add_edge(edge)?;
        Ok(next)
    }

    /// Re-checks every invariant by replaying the edges into a fresh graph.
    pub fn validate(&self) -> Result<(), GraphError> {
        let mut fresh = ProvenanceGraph { nodes: self.nodes.clone(), edges: Vec::new() };
        for e in &self.edges {
            fresh.add_edge(e.clone())?;
        }
        Ok(())
    }

    /// Topological order (Kahn), or `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<&CardId>> {
        let mut indegree: BTreeMap<&CardId, usize> = self.nodes.iter().map(|n| (n, 0)).collect();
        for e in &self.edges {
            *indegree.entry(&e.child).or_default() += 1;
        }
        let children = self.child_map();
        let mut ready: Vec<&CardId> = indegree.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut order = Vec::with_capacity(indegree.len());
        while let Some(n) = ready.pop() {
            order.push(n);
            for c in children.get(n).into_iter().flatten() {
                let d = indegree.get_mut(c)?;
                *d -= 1;
                if *d == 0 {
                    ready.push(c);
                }
            }
        }
        (order.len() == indegree.len()).then_some(order)
    }
}
