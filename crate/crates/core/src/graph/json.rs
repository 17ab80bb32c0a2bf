use serde::{Deserialize, Serialize};

use super::{GraphError, LvDag, NodeId, NodeKind};

/// On-disk graph document. `names` is optional and, when present, lists a
/// label per node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphJson {
    pub p_o: usize,
    pub p_l: usize,
    pub observed: Vec<NodeId>,
    pub latent: Vec<NodeId>,
    pub edges: Vec<(NodeId, NodeId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
}

pub(crate) fn kinds_from_partition(
    p_o: usize,
    p_l: usize,
    observed: &[NodeId],
    latent: &[NodeId],
) -> Result<Vec<NodeKind>, GraphError> {
    if observed.len() != p_o {
        return Err(GraphError::Partition(format!(
            "p_o = {p_o} but {} observed ids listed",
            observed.len()
        )));
    }
    if latent.len() != p_l {
        return Err(GraphError::Partition(format!(
            "p_l = {p_l} but {} latent ids listed",
            latent.len()
        )));
    }
    let p = p_o + p_l;
    let mut kinds: Vec<Option<NodeKind>> = vec![None; p];
    let tagged = observed
        .iter()
        .map(|&v| (v, NodeKind::Observed))
        .chain(latent.iter().map(|&v| (v, NodeKind::Latent)));
    for (v, kind) in tagged {
        if v >= p {
            return Err(GraphError::Partition(format!("id {v} outside 0..{p}")));
        }
        if kinds[v].replace(kind).is_some() {
            return Err(GraphError::Partition(format!("id {v} listed twice")));
        }
    }
    // Every id is covered: p distinct ids in 0..p.
    Ok(kinds
        .into_iter()
        .map(|k| k.expect("partition covers all ids"))
        .collect())
}

impl GraphJson {
    pub fn from_dag(dag: &LvDag) -> Self {
        Self {
            p_o: dag.p_o(),
            p_l: dag.p_l(),
            observed: dag.observed().collect(),
            latent: dag.latent().collect(),
            edges: dag.edges().collect(),
            names: dag.names().map(<[String]>::to_vec),
        }
    }

    pub fn into_dag(self) -> Result<LvDag, GraphError> {
        let kinds = kinds_from_partition(self.p_o, self.p_l, &self.observed, &self.latent)?;
        let dag = LvDag::new(kinds, self.edges)?;
        match self.names {
            Some(names) => dag.with_names(names),
            None => Ok(dag),
        }
    }
}

impl LvDag {
    pub fn from_json_str(text: &str) -> Result<Self, GraphError> {
        let doc: GraphJson = serde_json::from_str(text).map_err(|e| GraphError::Json(e.to_string()))?;
        doc.into_dag()
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&GraphJson::from_dag(self)).expect("graph serializes")
    }
}
