use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::Query;
use crate::store::{EntityId, PredicateId, Timestamp};

/// Node identity: an entity at a timestamp.
pub type NodeKey = (EntityId, Timestamp);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceNode {
    pub entity: EntityId,
    pub timestamp: Timestamp,
    pub added_at_step: usize,
    /// Hidden representation after the last completed step.
    pub hidden: Vec<f64>,
    pub attention: f64,
    /// Whether this node's prior edges have been sampled.
    pub expanded: bool,
    pub alive: bool,
}

/// Directed from a posterior node to one of its prior neighbors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceEdge {
    /// Insertion order; stable tie-breaker.
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub predicate: PredicateId,
    pub added_at_step: usize,
    pub raw_score: f64,
    pub alpha: f64,
    pub contribution: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferenceGraph {
    pub query: Query,
    nodes: Vec<InferenceNode>,
    edges: Vec<InferenceEdge>,
    #[serde(skip)]
    index: HashMap<NodeKey, usize>,
    next_edge_id: usize,
}

impl InferenceGraph {
    /// Graph holding only the query node `(subject, time)` with attention 1.
    pub fn new(query: Query, hidden: Vec<f64>) -> Self {
        let mut g = Self {
            query,
            nodes: Vec::new(),
            edges: Vec::new(),
            index: HashMap::new(),
            next_edge_id: 0,
        };
        g.nodes.push(InferenceNode {
            entity: query.subject,
            timestamp: query.time,
            added_at_step: 0,
            hidden,
            attention: 1.0,
            expanded: false,
            alive: true,
        });
        g.index.insert((query.subject, query.time), 0);
        g
    }

    pub const QUERY_NODE: usize = 0;

    /// Existing slot for `key` (alive or not), if any.
    pub fn lookup(&self, key: NodeKey) -> Option<usize> {
        self.index.get(&key).copied()
    }

    /// Adds a node or revives a pruned one; returns `(slot, is_new_slot)`.
    pub(crate) fn insert_node(&mut self, key: NodeKey, step: usize, dim: usize) -> (usize, bool) {
        if let Some(&i) = self.index.get(&key) {
            let n = &mut self.nodes[i];
            if !n.alive {
                n.alive = true;
                n.added_at_step = step;
                n.expanded = false;
                n.attention = 0.0;
            }
            return (i, false);
        }
        let i = self.nodes.len();
        self.nodes.push(InferenceNode {
            entity: key.0,
            timestamp: key.1,
            added_at_step: step,
            hidden: vec![0.0; dim],
            attention: 0.0,
            expanded: false,
            alive: true,
        });
        self.index.insert(key, i);
        (i, true)
    }

    pub(crate) fn push_edge(&mut self, from: usize, to: usize, predicate: PredicateId, step: usize) {
        let id = self.next_edge_id;
        self.next_edge_id += 1;
        self.edges.push(InferenceEdge {
            id,
            from,
            to,
            predicate,
            added_at_step: step,
            raw_score: 0.0,
            alpha: 0.0,
            contribution: 0.0,
        });
    }

    /// All node slots, including pruned ones (check `alive`).
    pub fn node_slots(&self) -> &[InferenceNode] {
        &self.nodes
    }

    pub(crate) fn node_slots_mut(&mut self) -> &mut [InferenceNode] {
        &mut self.nodes
    }

    pub fn node(&self, slot: usize) -> &InferenceNode {
        &self.nodes[slot]
    }

    /// Live nodes with their slot index.
    pub fn nodes(&self) -> impl Iterator<Item = (usize, &InferenceNode)> {
        self.nodes.iter().enumerate().filter(|(_, n)| n.alive)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.iter().filter(|n| n.alive).count()
    }

    pub fn edges(&self) -> &[InferenceEdge] {
        &self.edges
    }

    pub(crate) fn edges_mut(&mut self) -> &mut Vec<InferenceEdge> {
        &mut self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Removes non-query nodes without incident edges.
    pub(crate) fn drop_isolated(&mut self) -> usize {
        let mut touched = vec![false; self.nodes.len()];
        touched[Self::QUERY_NODE] = true;
        for e in &self.edges {
            touched[e.from] = true;
            touched[e.to] = true;
        }
        let mut removed = 0;
        for (n, t) in self.nodes.iter_mut().zip(touched) {
            if n.alive && !t {
                n.alive = false;
                n.attention = 0.0;
                removed += 1;
            }
        }
        removed
    }

    /// Rebuilds the key index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| ((n.entity, n.timestamp), i))
            .collect();
    }
}
