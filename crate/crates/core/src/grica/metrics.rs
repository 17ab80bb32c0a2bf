use nalgebra::DMatrix;
use serde::Serialize;

use super::GricaError;
use crate::graph::NodeId;
use crate::mixing::build_mixing;
use crate::model::WeightedModel;

/// `|est − truth| / |truth|`.
pub fn relative_error(estimated: f64, truth: f64) -> Result<f64, GricaError> {
    if truth == 0.0 {
        return Err(GricaError::ZeroTrueValue);
    }
    Ok((estimated - truth).abs() / truth.abs())
}

/// `‖est − truth‖_F / ‖truth‖_F`.
pub fn normalized_frobenius(estimated: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64, GricaError> {
    if estimated.shape() != truth.shape() {
        return Err(GricaError::DimensionMismatch(format!(
            "{:?} vs {:?}",
            estimated.shape(),
            truth.shape()
        )));
    }
    let norm = truth.norm();
    if norm == 0.0 {
        return Err(GricaError::ZeroTrueValue);
    }
    Ok((estimated - truth).norm() / norm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeError {
    pub from: NodeId,
    pub to: NodeId,
    pub estimated: f64,
    pub truth: f64,
    /// `None` when the true weight is zero.
    pub relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub edges: Vec<EdgeError>,
    /// Normalized Frobenius error of the mixing matrix `B′`.
    pub mixing: f64,
}

/// Per-edge relative errors and the mixing-matrix error of two models over
/// the same graph.
pub fn compare(estimated: &WeightedModel, truth: &WeightedModel) -> Result<MetricReport, GricaError> {
    if !estimated.dag().same_structure(truth.dag()) {
        return Err(GricaError::DimensionMismatch("models have different graphs".into()));
    }
    let edges = truth
        .dag()
        .edges()
        .map(|(from, to)| {
            let (e, t) = (estimated.weight(from, to), truth.weight(from, to));
            EdgeError {
                from,
                to,
                estimated: e,
                truth: t,
                relative_error: relative_error(e, t).ok(),
            }
        })
        .collect();
    let mixing = normalized_frobenius(&build_mixing(estimated).matrix, &build_mixing(truth).matrix)?;
    Ok(MetricReport { edges, mixing })
}
