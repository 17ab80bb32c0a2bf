//! Weighted models: a graph plus one real coefficient per edge.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::graph::{json_partition, CanonicalDag, GraphError, LvDag, NodeId};

pub type EdgeWeights = BTreeMap<(NodeId, NodeId), f64>;

fn check_coverage(dag: &LvDag, weights: &EdgeWeights) -> Result<(), GraphError> {
    for &(from, to) in weights.keys() {
        if from >= dag.p() || to >= dag.p() || !dag.has_edge(from, to) {
            return Err(GraphError::UnknownEdge(from, to));
        }
    }
    for (from, to) in dag.edges() {
        match weights.get(&(from, to)) {
            Some(w) if w.is_finite() => {}
            Some(w) => return Err(GraphError::Weights(format!("non-finite weight {w} on {from} -> {to}"))),
            None => return Err(GraphError::Weights(format!("missing weight on {from} -> {to}"))),
        }
    }
    Ok(())
}

/// Dense `p × p` coefficient matrix with `A[to, from]` holding the weight of
/// `from → to`.
fn dense(p: usize, weights: &EdgeWeights) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(p, p);
    for (&(from, to), &w) in weights {
        a[(to, from)] = w;
    }
    a
}

/// Weights over an arbitrary acyclic latent-variable graph. Only used as the
/// input of the canonical reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralModel {
    dag: LvDag,
    weights: EdgeWeights,
}

impl GeneralModel {
    pub fn new(dag: LvDag, weights: EdgeWeights) -> Result<Self, GraphError> {
        check_coverage(&dag, &weights)?;
        Ok(Self { dag, weights })
    }

    pub fn dag(&self) -> &LvDag {
        &self.dag
    }

    pub fn weight(&self, from: NodeId, to: NodeId) -> f64 {
        self.weights.get(&(from, to)).copied().unwrap_or(0.0)
    }

    pub fn weights(&self) -> &EdgeWeights {
        &self.weights
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        dense(self.dag.p(), &self.weights)
    }
}

/// Weights over a canonical graph, with every latent's edge to its
/// topologically first child fixed at exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedModel {
    dag: CanonicalDag,
    weights: EdgeWeights,
}

impl WeightedModel {
    pub fn new(dag: CanonicalDag, weights: EdgeWeights) -> Result<Self, GraphError> {
        check_coverage(&dag, &weights)?;
        for (l, j) in scaling_edges(&dag) {
            if weights[&(l, j)] != 1.0 {
                return Err(GraphError::Weights(format!(
                    "scaling edge {l} -> {j} must carry weight 1, got {}",
                    weights[&(l, j)]
                )));
            }
        }
        Ok(Self { dag, weights })
    }

    /// Builds a model from the free (non-scaling) weights listed in
    /// [`free_edges`] order.
    pub fn from_free_weights(dag: CanonicalDag, free: &[f64]) -> Result<Self, GraphError> {
        let edges = free_edges(&dag);
        if edges.len() != free.len() {
            return Err(GraphError::Weights(format!(
                "{} free weights for {} free edges",
                free.len(),
                edges.len()
            )));
        }
        let mut weights: EdgeWeights = edges.into_iter().zip(free.iter().copied()).collect();
        for e in scaling_edges(&dag) {
            weights.insert(e, 1.0);
        }
        Self::new(dag, weights)
    }

    pub fn dag(&self) -> &CanonicalDag {
        &self.dag
    }

    pub fn weight(&self, from: NodeId, to: NodeId) -> f64 {
        self.weights.get(&(from, to)).copied().unwrap_or(0.0)
    }

    pub fn weights(&self) -> &EdgeWeights {
        &self.weights
    }

    pub fn free_weights(&self) -> Vec<f64> {
        free_edges(&self.dag).iter().map(|e| self.weights[e]).collect()
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        dense(self.dag.p(), &self.weights)
    }

    pub fn to_general(&self) -> GeneralModel {
        GeneralModel {
            dag: self.dag.as_dag().clone(),
            weights: self.weights.clone(),
        }
    }

    pub fn to_json(&self) -> ModelJson {
        let dag = self.dag.as_dag();
        ModelJson {
            p_o: dag.p_o(),
            p_l: dag.p_l(),
            observed: dag.observed().collect(),
            latent: dag.latent().collect(),
            edges: dag.edges().collect(),
            names: dag.names().map(<[String]>::to_vec),
            weights: self.weights.iter().map(|(&(f, t), &w)| (f, t, w)).collect(),
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("model serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self, GraphError> {
        let doc: ModelJson = serde_json::from_str(text).map_err(|e| GraphError::Json(e.to_string()))?;
        doc.into_model()
    }
}

/// Latent-to-first-child edges, one per latent, in latent topological order.
pub fn scaling_edges(dag: &CanonicalDag) -> Vec<(NodeId, NodeId)> {
    dag.latent_in_order()
        .into_iter()
        .filter_map(|l| dag.first_child(l).map(|j| (l, j)))
        .collect()
}

/// Edges whose weight is a free parameter, ordered by (from, to).
pub fn free_edges(dag: &CanonicalDag) -> Vec<(NodeId, NodeId)> {
    let scaling = scaling_edges(dag);
    dag.edges().filter(|e| !scaling.contains(e)).collect()
}

/// Graph document plus `"weights": [[from, to, w], ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub p_o: usize,
    pub p_l: usize,
    pub observed: Vec<NodeId>,
    pub latent: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    pub weights: Vec<(NodeId, NodeId, f64)>,
}

impl ModelJson {
    pub fn into_model(self) -> Result<WeightedModel, GraphError> {
        let kinds = json_partition(self.p_o, self.p_l, &self.observed, &self.latent)?;
        let mut dag = LvDag::new(kinds, self.edges)?;
        if let Some(names) = self.names {
            dag = dag.with_names(names)?;
        }
        let dag = crate::graph::validate(dag)?;
        let mut weights = EdgeWeights::new();
        for (f, t, w) in self.weights {
            if weights.insert((f, t), w).is_some() {
                return Err(GraphError::Weights(format!("duplicate weight for {f} -> {t}")));
            }
        }
        WeightedModel::new(dag, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::library;

    fn iv_model() -> WeightedModel {
        let dag = library::iv();
        // I=0, T=1, Y=2, L=3
        let weights: EdgeWeights = [((0, 1), 0.7), ((1, 2), -0.6), ((3, 1), 1.0), ((3, 2), 0.9)].into();
        WeightedModel::new(dag, weights).unwrap()
    }

    #[test]
    fn scaling_edge_is_latent_to_first_child() {
        let m = iv_model();
        assert_eq!(scaling_edges(m.dag()), vec![(3, 1)]);
        assert_eq!(free_edges(m.dag()), vec![(0, 1), (1, 2), (3, 2)]);
        assert_eq!(m.free_weights(), vec![0.7, -0.6, 0.9]);
    }

    #[test]
    fn rejects_unscaled_or_incomplete_weights() {
        let dag = library::iv();
        let bad: EdgeWeights = [((0, 1), 0.7), ((1, 2), -0.6), ((3, 1), 0.5), ((3, 2), 0.9)].into();
        assert!(matches!(
            WeightedModel::new(dag.clone(), bad),
            Err(GraphError::Weights(_))
        ));
        let missing: EdgeWeights = [((0, 1), 0.7), ((3, 1), 1.0), ((3, 2), 0.9)].into();
        assert!(matches!(
            WeightedModel::new(dag.clone(), missing),
            Err(GraphError::Weights(_))
        ));
        let extra: EdgeWeights = [
            ((0, 1), 0.7),
            ((1, 2), -0.6),
            ((3, 1), 1.0),
            ((3, 2), 0.9),
            ((0, 2), 1.0),
        ]
        .into();
        assert_eq!(WeightedModel::new(dag, extra), Err(GraphError::UnknownEdge(0, 2)));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = iv_model();
        let text = m.to_json_string();
        assert_eq!(WeightedModel::from_json_str(&text).unwrap(), m);
    }

    #[test]
    fn free_weight_constructor_matches() {
        let m = iv_model();
        let again = WeightedModel::from_free_weights(m.dag().clone(), &m.free_weights()).unwrap();
        assert_eq!(again, m);
    }
}
