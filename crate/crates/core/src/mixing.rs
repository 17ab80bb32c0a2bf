//! The `p_o × p` mixing matrix `B′ = [B_o, B_l]` mapping exogenous noise to
//! observed variables.

use nalgebra::DMatrix;

use crate::graph::{CanonicalDag, NodeId};
use crate::model::WeightedModel;

/// Rows are the observed nodes in topological order; columns are the
/// observed nodes in the same order followed by the latent nodes in
/// topological order. `B_o` is therefore unit lower triangular.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    pub matrix: DMatrix<f64>,
    rows: Vec<NodeId>,
    cols: Vec<NodeId>,
    row_of: Vec<Option<usize>>,
    col_of: Vec<usize>,
}

impl MixingMatrix {
    pub fn new(dag: &CanonicalDag, matrix: DMatrix<f64>) -> Self {
        let rows = dag.observed_in_order();
        let mut cols = rows.clone();
        cols.extend(dag.latent_in_order());
        assert_eq!(matrix.shape(), (rows.len(), cols.len()), "mixing matrix shape");
        let mut row_of = vec![None; dag.p()];
        for (r, &v) in rows.iter().enumerate() {
            row_of[v] = Some(r);
        }
        let mut col_of = vec![0; dag.p()];
        for (c, &v) in cols.iter().enumerate() {
            col_of[v] = c;
        }
        Self {
            matrix,
            rows,
            cols,
            row_of,
            col_of,
        }
    }

    /// Node bound to each row.
    pub fn rows(&self) -> &[NodeId] {
        &self.rows
    }

    /// Node bound to each column.
    pub fn cols(&self) -> &[NodeId] {
        &self.cols
    }

    pub fn p_o(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, node: NodeId) -> usize {
        self.row_of[node].expect("row node is observed")
    }

    pub fn col(&self, node: NodeId) -> usize {
        self.col_of[node]
    }

    /// Total effect of `source` (any node) on the observed `target`.
    pub fn total_effect(&self, source: NodeId, target: NodeId) -> f64 {
        self.matrix[(self.row(target), self.col(source))]
    }

    pub fn b_o(&self) -> DMatrix<f64> {
        self.matrix.columns(0, self.p_o()).into_owned()
    }

    pub fn b_l(&self) -> DMatrix<f64> {
        let p_o = self.p_o();
        self.matrix.columns(p_o, self.matrix.ncols() - p_o).into_owned()
    }
}

/// `B_o = (I − A_oo)^{-1}` and `B_l = B_o A_ol`, by forward substitution in
/// topological order.
pub fn build_mixing(model: &WeightedModel) -> MixingMatrix {
    let dag = model.dag();
    let rows = dag.observed_in_order();
    let mut cols = rows.clone();
    cols.extend(dag.latent_in_order());
    let p = dag.p();
    let mut matrix = DMatrix::zeros(rows.len(), cols.len());
    let mut value = vec![0.0; p];
    for (c, &source) in cols.iter().enumerate() {
        value.iter_mut().for_each(|x| *x = 0.0);
        value[source] = 1.0;
        for &o in &rows {
            if o == source {
                continue;
            }
            value[o] = dag.parents(o).iter().map(|&q| model.weight(q, o) * value[q]).sum();
        }
        for (r, &o) in rows.iter().enumerate() {
            matrix[(r, c)] = value[o];
        }
    }
    MixingMatrix::new(dag, matrix)
}
