//! Latent-variable DAGs: the observed/latent partition, topological machinery
//! and the descendant-set primitives every identifiability condition is
//! written in.

mod canonical;
mod json;
pub mod library;
mod nodeset;

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canonical::{canonicalize, reduce_weights_to_canonical, CanonicalizationEvent, CanonicalizationLog};
pub(crate) use json::kinds_from_partition as json_partition;
pub use json::GraphJson;
pub use nodeset::NodeSet;

/// Dense node identifier in `0..p`.
pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Observed,
    Latent,
}

/// A single reason why a graph fails canonical validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    CycleDetected(Vec<NodeId>),
    LatentWithParent(NodeId),
    LatentWithFewChildren(NodeId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CycleDetected(nodes) => write!(f, "cycle through nodes {nodes:?}"),
            Violation::LatentWithParent(l) => write!(f, "latent node {l} has a parent"),
            Violation::LatentWithFewChildren(l) => {
                write!(f, "latent node {l} has fewer than two children")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("self loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(NodeId, NodeId),
    #[error("invalid node partition: {0}")]
    Partition(String),
    #[error("graph contains a cycle through nodes {0:?}")]
    CycleDetected(Vec<NodeId>),
    #[error("graph is not canonical: {}", format_violations(.0))]
    NotCanonical(Vec<Violation>),
    #[error("node {0} is not observed")]
    NotObserved(NodeId),
    #[error("node {0} is not latent")]
    NotLatent(NodeId),
    #[error("edge {0} -> {1} is not in the graph")]
    UnknownEdge(NodeId, NodeId),
    #[error("weights: {0}")]
    Weights(String),
    #[error("malformed graph document: {0}")]
    Json(String),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// A directed graph over observed and latent nodes. Acyclicity is not
/// enforced at construction; [`validate`] and [`LvDag::topological_order`]
/// report cycles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LvDag {
    kinds: Vec<NodeKind>,
    names: Option<Vec<String>>,
    children: Vec<Vec<NodeId>>,
    parents: Vec<Vec<NodeId>>,
    n_edges: usize,
}

impl LvDag {
    pub fn new(kinds: Vec<NodeKind>, edges: impl IntoIterator<Item = (NodeId, NodeId)>) -> Result<Self, GraphError> {
        let p = kinds.len();
        let mut seen = BTreeSet::new();
        let mut children = vec![Vec::new(); p];
        let mut parents = vec![Vec::new(); p];
        for (from, to) in edges {
            if from >= p {
                return Err(GraphError::UnknownNode(from));
            }
            if to >= p {
                return Err(GraphError::UnknownNode(to));
            }
            if from == to {
                return Err(GraphError::SelfLoop(from));
            }
            if !seen.insert((from, to)) {
                return Err(GraphError::DuplicateEdge(from, to));
            }
            children[from].push(to);
            parents[to].push(from);
        }
        for list in children.iter_mut().chain(parents.iter_mut()) {
            list.sort_unstable();
        }
        Ok(Self {
            kinds,
            names: None,
            children,
            parents,
            n_edges: seen.len(),
        })
    }

    /// Convenience constructor: observed nodes are `0..p_o`, latent nodes
    /// `p_o..p_o + p_l`.
    pub fn with_counts(
        p_o: usize,
        p_l: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        let kinds = std::iter::repeat_n(NodeKind::Observed, p_o)
            .chain(std::iter::repeat_n(NodeKind::Latent, p_l))
            .collect();
        Self::new(kinds, edges)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self, GraphError> {
        if names.len() != self.p() {
            return Err(GraphError::Partition(format!(
                "{} names for {} nodes",
                names.len(),
                self.p()
            )));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(GraphError::Partition("node names must be unique".into()));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn p(&self) -> usize {
        self.kinds.len()
    }

    pub fn p_o(&self) -> usize {
        self.kinds.iter().filter(|k| **k == NodeKind::Observed).count()
    }

    pub fn p_l(&self) -> usize {
        self.p() - self.p_o()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn kind(&self, v: NodeId) -> NodeKind {
        self.kinds[v]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn is_observed(&self, v: NodeId) -> bool {
        self.kinds[v] == NodeKind::Observed
    }

    pub fn is_latent(&self, v: NodeId) -> bool {
        self.kinds[v] == NodeKind::Latent
    }

    pub fn observed(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.p()).filter(|&v| self.is_observed(v))
    }

    pub fn latent(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.p()).filter(|&v| self.is_latent(v))
    }

    /// Children of `v`, ascending by id.
    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v]
    }

    /// Parents of `v`, ascending by id.
    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.parents[v]
    }

    /// Same node kinds and edges, ignoring names.
    pub fn same_structure(&self, other: &LvDag) -> bool {
        self.kinds == other.kinds && self.children == other.children
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.children[from].binary_search(&to).is_ok()
    }

    /// All edges, ordered by (from, to).
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.children
            .iter()
            .enumerate()
            .flat_map(|(u, ch)| ch.iter().map(move |&v| (u, v)))
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn name(&self, v: NodeId) -> String {
        match &self.names {
            Some(names) => names[v].clone(),
            None => v.to_string(),
        }
    }

    /// Resolves a user-supplied node reference: a name if the graph carries
    /// names, otherwise (or as a fallback) an integer id.
    pub fn resolve(&self, label: &str) -> Result<NodeId, GraphError> {
        if let Some(names) = &self.names {
            if let Some(pos) = names.iter().position(|n| n == label) {
                return Ok(pos);
            }
        }
        match label.parse::<NodeId>() {
            Ok(v) if v < self.p() => Ok(v),
            Ok(v) => Err(GraphError::UnknownNode(v)),
            Err(_) => Err(GraphError::Json(format!("unknown node label {label:?}"))),
        }
    }

    pub(crate) fn check_node(&self, v: NodeId) -> Result<(), GraphError> {
        if v < self.p() {
            Ok(())
        } else {
            Err(GraphError::UnknownNode(v))
        }
    }

    /// Kahn's algorithm; among ready nodes the smallest id goes first.
    pub fn topological_order(&self) -> Result<Vec<NodeId>, GraphError> {
        let p = self.p();
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: BinaryHeap<Reverse<NodeId>> = (0..p).filter(|&v| indegree[v] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(p);
        while let Some(Reverse(u)) = ready.pop() {
            order.push(u);
            for &v in &self.children[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.push(Reverse(v));
                }
            }
        }
        if order.len() == p {
            Ok(order)
        } else {
            Err(GraphError::CycleDetected(self.cyclic_core(&indegree)))
        }
    }

    /// Nodes left after Kahn's pass, pruned of everything that cannot reach
    /// back into a cycle.
    fn cyclic_core(&self, indegree: &[usize]) -> Vec<NodeId> {
        let p = self.p();
        let mut alive: Vec<bool> = (0..p).map(|v| indegree[v] > 0).collect();
        loop {
            let mut changed = false;
            for v in 0..p {
                if alive[v] && !self.children[v].iter().any(|&c| alive[c]) {
                    alive[v] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        (0..p).filter(|&v| alive[v]).collect()
    }

    /// Observed members of `{v} ∪ de(v)`.
    pub fn observed_descendants(&self, v: NodeId) -> Result<NodeSet, GraphError> {
        self.check_node(v)?;
        Ok(self.observed_descendants_unchecked(v, None))
    }

    /// Observed descendants of `l` (including `l` itself when observed) in
    /// the graph with every edge into `j` removed.
    pub fn observed_descendants_cut(&self, l: NodeId, j: NodeId) -> Result<NodeSet, GraphError> {
        self.check_node(l)?;
        self.check_node(j)?;
        if !self.is_observed(j) {
            return Err(GraphError::NotObserved(j));
        }
        Ok(self.observed_descendants_unchecked(l, Some(j)))
    }

    pub(crate) fn observed_descendants_unchecked(&self, v: NodeId, cut: Option<NodeId>) -> NodeSet {
        let p = self.p();
        let mut visited = NodeSet::new(p);
        let mut out = NodeSet::new(p);
        let mut stack = vec![v];
        visited.insert(v);
        while let Some(u) = stack.pop() {
            if self.is_observed(u) {
                out.insert(u);
            }
            for &c in &self.children[u] {
                if Some(c) == cut || visited.contains(c) {
                    continue;
                }
                visited.insert(c);
                stack.push(c);
            }
        }
        out
    }

    /// Children of `v` as a node set.
    pub fn children_set(&self, v: NodeId) -> NodeSet {
        NodeSet::from_iter(self.p(), self.children[v].iter().copied())
    }
}

/// An [`LvDag`] that passed [`validate`]: acyclic, every latent node is a
/// source with at least two children. Carries the tie-broken topological
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalDag {
    dag: LvDag,
    order: Vec<NodeId>,
    position: Vec<usize>,
}

impl CanonicalDag {
    pub fn as_dag(&self) -> &LvDag {
        &self.dag
    }

    pub fn into_dag(self) -> LvDag {
        self.dag
    }

    pub fn order(&self) -> &[NodeId] {
        &self.order
    }

    /// Position of `v` in the topological order.
    pub fn position(&self, v: NodeId) -> usize {
        self.position[v]
    }

    /// Observed nodes in topological order.
    pub fn observed_in_order(&self) -> Vec<NodeId> {
        self.order
            .iter()
            .copied()
            .filter(|&v| self.dag.is_observed(v))
            .collect()
    }

    /// Latent nodes in topological order.
    pub fn latent_in_order(&self) -> Vec<NodeId> {
        self.order.iter().copied().filter(|&v| self.dag.is_latent(v)).collect()
    }

    /// The topologically first child of `v`, if any.
    pub fn first_child(&self, v: NodeId) -> Option<NodeId> {
        self.dag.children(v).iter().copied().min_by_key(|&c| self.position[c])
    }
}

impl Deref for CanonicalDag {
    type Target = LvDag;

    fn deref(&self) -> &LvDag {
        &self.dag
    }
}

/// Checks acyclicity and the canonical latent conditions, naming every
/// violation found.
pub fn validate(dag: LvDag) -> Result<CanonicalDag, GraphError> {
    let mut violations = Vec::new();
    let order = match dag.topological_order() {
        Ok(order) => Some(order),
        Err(GraphError::CycleDetected(nodes)) => {
            violations.push(Violation::CycleDetected(nodes));
            None
        }
        Err(e) => return Err(e),
    };
    for l in dag.latent() {
        if !dag.parents(l).is_empty() {
            violations.push(Violation::LatentWithParent(l));
        }
        if dag.children(l).len() < 2 {
            violations.push(Violation::LatentWithFewChildren(l));
        }
    }
    match order {
        Some(order) if violations.is_empty() => {
            let mut position = vec![0; dag.p()];
            for (i, &v) in order.iter().enumerate() {
                position[v] = i;
            }
            Ok(CanonicalDag { dag, order, position })
        }
        _ => Err(GraphError::NotCanonical(violations)),
    }
}
