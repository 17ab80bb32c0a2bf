//! Generic identifiability of total effects, direct effects and the full
//! observed mixing block, with and without knowledge of the graph.
//!
//! Every condition is driven by latents `l` whose topologically first child
//! `j` has the same observed descendants as `l`: those are exactly the pairs
//! whose mixing-matrix columns can be exchanged without changing the
//! observational distribution.

use std::cell::OnceCell;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::graph::{CanonicalDag, NodeId, NodeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectKind {
    /// Total causal effect, an entry of `B′`.
    Tce,
    /// Direct causal effect, an entry of `A_oo`.
    Dce,
    /// The whole observed block `B_o`.
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Known,
    Unknown,
}

impl fmt::Display for EffectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EffectKind::Tce => "tce",
            EffectKind::Dce => "dce",
            EffectKind::Matrix => "matrix",
        })
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::Known => "known",
            Setting::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdQuery {
    pub kind: EffectKind,
    /// Source `j`; absent for [`EffectKind::Matrix`].
    pub source: Option<NodeId>,
    /// Target `i`; absent for [`EffectKind::Matrix`].
    pub target: Option<NodeId>,
    pub setting: Setting,
}

impl IdQuery {
    pub fn pair(kind: EffectKind, source: NodeId, target: NodeId, setting: Setting) -> Self {
        Self {
            kind,
            source: Some(source),
            target: Some(target),
            setting,
        }
    }

    pub fn matrix(setting: Setting) -> Self {
        Self {
            kind: EffectKind::Matrix,
            source: None,
            target: None,
            setting,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Witness {
    Latent {
        l: NodeId,
    },
    Pair {
        k: NodeId,
        l: NodeId,
    },
    /// Consecutive swaps `(k_0, l_0), …, (k_r, l_r)` with `k_0 ∈ ch(j) ∪ {j}`,
    /// `k_{t+1} ∈ ch(l_t)` and the target in `ch(l_r)`.
    Chain {
        pairs: Vec<(NodeId, NodeId)>,
    },
    Triple {
        i: NodeId,
        j: NodeId,
        l: NodeId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdVerdict {
    pub identifiable: bool,
    pub witness: Option<Witness>,
    /// The queried effect is zero in every model compatible with the graph
    /// (no directed path for TCE, no edge for DCE).
    pub structurally_zero: bool,
    pub setting: Setting,
    pub kind: EffectKind,
}

impl IdVerdict {
    fn new(kind: EffectKind, setting: Setting, witness: Option<Witness>, structurally_zero: bool) -> Self {
        Self {
            identifiable: witness.is_none(),
            witness,
            structurally_zero,
            setting,
            kind,
        }
    }

    /// JSON form with node labels resolved through the graph's names.
    pub fn to_json(&self, dag: &CanonicalDag) -> serde_json::Value {
        let name = |v: NodeId| dag.name(v);
        let witness = match &self.witness {
            None => serde_json::Value::Null,
            Some(Witness::Latent { l }) => json!({ "latent": name(*l) }),
            Some(Witness::Pair { k, l }) => json!({ "k": name(*k), "l": name(*l) }),
            Some(Witness::Chain { pairs }) => json!({
                "chain": pairs.iter().map(|&(k, l)| json!({ "k": name(k), "l": name(l) })).collect::<Vec<_>>()
            }),
            Some(Witness::Triple { i, j, l }) => json!({ "i": name(*i), "j": name(*j), "l": name(*l) }),
        };
        json!({
            "identifiable": self.identifiable,
            "witness": witness,
            "structurally_zero": self.structurally_zero,
            "setting": self.setting,
            "kind": self.kind,
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertifyError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not observed")]
    NotObserved(NodeId),
    #[error("source and target are the same node {0}")]
    SameNode(NodeId),
    #[error("{0} queries need a source and a target")]
    MissingEndpoint(EffectKind),
}

/// Certification context for one graph. Observed-descendant sets are cached
/// for the lifetime of the value.
pub struct Certifier<'a> {
    dag: &'a CanonicalDag,
    de_o: Vec<OnceCell<NodeSet>>,
    first_child: Vec<Option<NodeId>>,
    latents: Vec<NodeId>,
}

impl<'a> Certifier<'a> {
    pub fn new(dag: &'a CanonicalDag) -> Self {
        let p = dag.p();
        let first_child = (0..p).map(|v| dag.first_child(v)).collect();
        Self {
            dag,
            de_o: (0..p).map(|_| OnceCell::new()).collect(),
            first_child,
            latents: dag.latent_in_order(),
        }
    }

    pub fn dag(&self) -> &CanonicalDag {
        self.dag
    }

    pub fn de_o(&self, v: NodeId) -> &NodeSet {
        self.de_o[v].get_or_init(|| self.dag.observed_descendants_unchecked(v, None))
    }

    fn check_pair(&self, j: NodeId, i: NodeId) -> Result<(), CertifyError> {
        for v in [j, i] {
            if v >= self.dag.p() {
                return Err(CertifyError::UnknownNode(v));
            }
            if !self.dag.is_observed(v) {
                return Err(CertifyError::NotObserved(v));
            }
        }
        if i == j {
            return Err(CertifyError::SameNode(i));
        }
        Ok(())
    }

    /// Latents whose first child is `j` and whose observed descendants equal
    /// those of `j`, in topological order. A latent with `de_o(l) = de_o(j)`
    /// always has `j` as its first child, so nothing is missed.
    fn swappable_latents(&self, j: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.latents
            .iter()
            .copied()
            .filter(move |&l| self.first_child[l] == Some(j) && self.de_o(l) == self.de_o(j))
    }

    /// Whether exchanging the columns of observed `k` and latent `l` yields
    /// an alternative model on the same graph: every other parent of `k`,
    /// and `k` itself, must already point at all of `l`'s other children.
    pub fn swap_preserves_graph(&self, k: NodeId, l: NodeId) -> bool {
        let dag = self.dag;
        let others: Vec<NodeId> = dag.children(l).iter().copied().filter(|&c| c != k).collect();
        dag.parents(k)
            .iter()
            .copied()
            .chain(std::iter::once(k))
            .filter(|&m| m != l)
            .all(|m| others.iter().all(|&c| dag.has_edge(m, c)))
    }

    fn tce(&self, j: NodeId, i: NodeId, setting: Setting) -> Result<IdVerdict, CertifyError> {
        self.check_pair(j, i)?;
        let structurally_zero = !self.de_o(j).contains(i);
        let witness = self
            .swappable_latents(j)
            .filter(|&l| self.dag.observed_descendants_unchecked(l, Some(j)).contains(i))
            .find(|&l| setting == Setting::Unknown || self.swap_preserves_graph(j, l))
            .map(|l| Witness::Latent { l });
        Ok(IdVerdict::new(EffectKind::Tce, setting, witness, structurally_zero))
    }

    fn dce(&self, j: NodeId, i: NodeId, setting: Setting) -> Result<IdVerdict, CertifyError> {
        self.check_pair(j, i)?;
        let dag = self.dag;
        let structurally_zero = !dag.has_edge(j, i);
        let witness = self
            .latents
            .iter()
            .copied()
            .filter_map(|l| self.first_child[l].map(|k| (k, l)))
            .filter(|&(k, _)| k == j || dag.has_edge(j, k))
            .filter(|&(k, l)| i != k && dag.has_edge(l, i) && self.de_o(k) == self.de_o(l))
            .find(|&(k, l)| setting == Setting::Unknown || self.swap_preserves_graph(k, l))
            .map(|(k, l)| Witness::Pair { k, l })
            .or_else(|| match setting {
                Setting::Unknown => self.swap_chain(j, i).map(|pairs| Witness::Chain { pairs }),
                Setting::Known => None,
            });
        Ok(IdVerdict::new(EffectKind::Dce, setting, witness, structurally_zero))
    }

    /// Simultaneous swaps compose: after exchanging `k` with `l`, every
    /// `c ∈ ch(l)∖{k}` behaves as a child of `k`'s parents, so a further
    /// swap at `c` reaches the children of `c`'s partner. Searches for a
    /// chain of swaps from `ch(j) ∪ {j}` ending at `i`.
    fn swap_chain(&self, j: NodeId, i: NodeId) -> Option<Vec<(NodeId, NodeId)>> {
        let dag = self.dag;
        let p = dag.p();
        let mut start = vec![false; p];
        let mut queue = std::collections::VecDeque::new();
        for k in std::iter::once(j).chain(dag.children(j).iter().copied().filter(|&c| dag.is_observed(c))) {
            start[k] = true;
            queue.push_back(k);
        }
        let mut seen = start.clone();
        let mut pred: Vec<Option<(NodeId, NodeId)>> = vec![None; p];
        while let Some(k) = queue.pop_front() {
            for l in self.swappable_latents(k).collect::<Vec<_>>() {
                for &c in dag.children(l) {
                    if c == k || pred[c].is_some() {
                        continue;
                    }
                    pred[c] = Some((k, l));
                    if c == i {
                        let mut pairs = vec![(k, l)];
                        let mut at = k;
                        while !start[at] {
                            let step = pred[at].expect("reached nodes have a predecessor");
                            pairs.push(step);
                            at = step.0;
                        }
                        pairs.reverse();
                        return Some(pairs);
                    }
                    if !seen[c] {
                        seen[c] = true;
                        queue.push_back(c);
                    }
                }
            }
        }
        None
    }

    fn matrix(&self, setting: Setting) -> IdVerdict {
        let witness = self
            .latents
            .iter()
            .copied()
            .filter_map(|l| self.first_child[l].map(|j| (j, l)))
            .filter(|&(j, l)| self.de_o(j) == self.de_o(l))
            .find(|&(j, l)| setting == Setting::Unknown || self.swap_preserves_graph(j, l))
            .map(|(j, l)| {
                let cut = self.dag.observed_descendants_unchecked(l, Some(j));
                let i = cut
                    .iter()
                    .min_by_key(|&v| self.dag.position(v))
                    .expect("a latent with two children reaches past its first child");
                Witness::Triple { i, j, l }
            });
        IdVerdict::new(EffectKind::Matrix, setting, witness, false)
    }

    pub fn tce_known(&self, j: NodeId, i: NodeId) -> Result<IdVerdict, CertifyError> {
        self.tce(j, i, Setting::Known)
    }

    pub fn tce_unknown(&self, j: NodeId, i: NodeId) -> Result<IdVerdict, CertifyError> {
        self.tce(j, i, Setting::Unknown)
    }

    pub fn dce_known(&self, j: NodeId, i: NodeId) -> Result<IdVerdict, CertifyError> {
        self.dce(j, i, Setting::Known)
    }

    pub fn dce_unknown(&self, j: NodeId, i: NodeId) -> Result<IdVerdict, CertifyError> {
        self.dce(j, i, Setting::Unknown)
    }

    pub fn matrix_known(&self) -> IdVerdict {
        self.matrix(Setting::Known)
    }

    pub fn matrix_unknown(&self) -> IdVerdict {
        self.matrix(Setting::Unknown)
    }

    pub fn certify(&self, query: &IdQuery) -> Result<IdVerdict, CertifyError> {
        let endpoints = || match (query.source, query.target) {
            (Some(j), Some(i)) => Ok((j, i)),
            _ => Err(CertifyError::MissingEndpoint(query.kind)),
        };
        match query.kind {
            EffectKind::Tce => {
                let (j, i) = endpoints()?;
                self.tce(j, i, query.setting)
            }
            EffectKind::Dce => {
                let (j, i) = endpoints()?;
                self.dce(j, i, query.setting)
            }
            EffectKind::Matrix => Ok(self.matrix(query.setting)),
        }
    }
}

pub fn tce_known(dag: &CanonicalDag, j: NodeId, i: NodeId) -> Result<IdVerdict, CertifyError> {
    Certifier::new(dag).tce_known(j, i)
}

pub fn tce_unknown(dag: &CanonicalDag, j: NodeId, i: NodeId) -> Result<IdVerdict, CertifyError> {
    Certifier::new(dag).tce_unknown(j, i)
}

pub fn dce_known(dag: &CanonicalDag, j: NodeId, i: NodeId) -> Result<IdVerdict, CertifyError> {
    Certifier::new(dag).dce_known(j, i)
}

pub fn dce_unknown(dag: &CanonicalDag, j: NodeId, i: NodeId) -> Result<IdVerdict, CertifyError> {
    Certifier::new(dag).dce_unknown(j, i)
}

pub fn matrix_known(dag: &CanonicalDag) -> IdVerdict {
    Certifier::new(dag).matrix_known()
}

pub fn matrix_unknown(dag: &CanonicalDag) -> IdVerdict {
    Certifier::new(dag).matrix_unknown()
}

pub fn certify(dag: &CanonicalDag, query: &IdQuery) -> Result<IdVerdict, CertifyError> {
    Certifier::new(dag).certify(query)
}

/// Re-checks a non-identifiability witness against the conditions written
/// out directly with uncached descendant sets, without the first-child
/// shortcut.
pub fn witness_holds(dag: &CanonicalDag, query: &IdQuery, witness: &Witness) -> bool {
    let de_o = |v| dag.observed_descendants(v).expect("valid node");
    let cut = |l, j| dag.observed_descendants_cut(l, j).expect("valid nodes");
    let preserved = |k: NodeId, l: NodeId| {
        query.setting == Setting::Unknown || {
            let mut rest = dag.children_set(l);
            rest.remove(k);
            dag.parents(k)
                .iter()
                .copied()
                .chain([k])
                .filter(|&m| m != l)
                .all(|m| rest.is_subset(&dag.children_set(m)))
        }
    };
    match (query.kind, witness.clone()) {
        (EffectKind::Tce, Witness::Latent { l }) => {
            let (Some(j), Some(i)) = (query.source, query.target) else {
                return false;
            };
            dag.is_latent(l) && de_o(j) == de_o(l) && cut(l, j).contains(i) && preserved(j, l)
        }
        (EffectKind::Dce, Witness::Pair { k, l }) => {
            let (Some(j), Some(i)) = (query.source, query.target) else {
                return false;
            };
            dag.is_latent(l)
                && dag.is_observed(k)
                && de_o(k) == de_o(l)
                && dag.has_edge(l, i)
                && i != k
                && (k == j || dag.has_edge(j, k))
                && preserved(k, l)
        }
        (EffectKind::Dce, Witness::Chain { pairs }) => {
            let (Some(j), Some(i)) = (query.source, query.target) else {
                return false;
            };
            let swappable = |k: NodeId, l: NodeId| dag.is_latent(l) && dag.is_observed(k) && de_o(k) == de_o(l);
            let Some(&(k0, _)) = pairs.first() else {
                return false;
            };
            let &(kr, lr) = pairs.last().expect("nonempty");
            query.setting == Setting::Unknown
                && (k0 == j || dag.has_edge(j, k0))
                && pairs.iter().all(|&(k, l)| swappable(k, l))
                && pairs
                    .windows(2)
                    .all(|w| w[1].0 != w[0].0 && dag.has_edge(w[0].1, w[1].0))
                && i != kr
                && dag.has_edge(lr, i)
        }
        (EffectKind::Matrix, Witness::Triple { i, j, l }) => {
            dag.is_latent(l)
                && dag.is_observed(j)
                && dag.is_observed(i)
                && de_o(j) == de_o(l)
                && cut(l, j).contains(i)
                && preserved(j, l)
        }
        _ => false,
    }
}
