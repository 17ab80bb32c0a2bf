//! Command-line front end: certification, model generation, simulation,
//! estimation and the benchmark protocols.

pub mod args;
pub mod bench;
pub mod commands;

use std::path::Path;

use lingam_id::graph::{canonicalize, CanonicalizationEvent, CanonicalizationLog};
use lingam_id::{CanonicalDag, LvDag, NodeId, WeightedModel};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable or malformed input files.
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    OracleCap(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::OracleCap(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub(crate) fn input<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input(format!("{context}: {e}"))
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(input(path.display()))
}

/// A graph read from disk together with its canonical form.
pub struct LoadedGraph {
    pub original: LvDag,
    pub dag: CanonicalDag,
    pub log: CanonicalizationLog,
}

impl LoadedGraph {
    /// Resolves a name or numeric id of the input graph to the canonical
    /// graph's id.
    pub fn resolve(&self, label: &str) -> Result<NodeId> {
        let v = self.original.resolve(label).map_err(input(format!("node {label:?}")))?;
        self.log.id_map[v].ok_or_else(|| CliError::Input(format!("node {label:?} was removed during canonicalization")))
    }
}

/// Reads a graph document, or a model document whose weights are ignored,
/// and canonicalizes it, logging every rewiring.
pub fn load_graph(path: &Path) -> Result<LoadedGraph> {
    let text = read_file(path)?;
    let original = match LvDag::from_json_str(&text) {
        Ok(dag) => dag,
        Err(graph_err) => match WeightedModel::from_json_str(&text) {
            Ok(model) => model.dag().as_dag().clone(),
            Err(_) => return Err(CliError::Input(format!("{}: {graph_err}", path.display()))),
        },
    };
    let (dag, log) = canonicalize(original.clone()).map_err(input(path.display()))?;
    for event in &log.events {
        match event {
            CanonicalizationEvent::RemovedEdge { from, to } => {
                log::warn!(
                    "canonicalization removed edge {} -> {}",
                    original.name(*from),
                    original.name(*to)
                )
            }
            CanonicalizationEvent::AddedEdge { from, to } => {
                log::warn!(
                    "canonicalization added edge {} -> {}",
                    original.name(*from),
                    original.name(*to)
                )
            }
            CanonicalizationEvent::DeletedLatent { latent, .. } => {
                log::warn!("canonicalization deleted latent {}", original.name(*latent))
            }
        }
    }
    Ok(LoadedGraph { original, dag, log })
}

pub fn load_model(path: &Path) -> Result<WeightedModel> {
    WeightedModel::from_json_str(&read_file(path)?).map_err(input(path.display()))
}

/// Writes to `path`, or to standard output when absent.
pub fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    use std::io::Write;
    match path {
        Some(p) => std::fs::write(p, text).map_err(input(p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Runtime(e.to_string()))
        }
    }
}
