//! Reduction of an arbitrary acyclic latent-variable graph to its canonical
//! form: latents become sources whose children are the observed nodes they
//! reach through latent-only paths.

use nalgebra::DMatrix;

use super::{validate, CanonicalDag, GraphError, LvDag, NodeId, NodeKind};
use crate::mixing::MixingMatrix;
use crate::model::GeneralModel;

/// Graph edits made by [`canonicalize`], in input ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonicalizationEvent {
    RemovedEdge {
        from: NodeId,
        to: NodeId,
    },
    AddedEdge {
        from: NodeId,
        to: NodeId,
    },
    DeletedLatent {
        latent: NodeId,
        observed_children: Vec<NodeId>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CanonicalizationLog {
    pub events: Vec<CanonicalizationEvent>,
    /// Input id → output id; `None` for deleted latents. Ids stay unchanged
    /// unless a latent was deleted, in which case later ids shift down.
    pub id_map: Vec<Option<NodeId>>,
}

impl CanonicalizationLog {
    pub fn is_unchanged(&self) -> bool {
        self.events.is_empty()
    }
}

/// For every node, the observed nodes it reaches through paths whose
/// interior nodes are all latent, with the summed path weights.
fn latent_interior_reach(
    dag: &LvDag,
    order: &[NodeId],
    weight: impl Fn(NodeId, NodeId) -> f64,
) -> Vec<Vec<(NodeId, f64)>> {
    let p = dag.p();
    let mut reach: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); p];
    let mut acc = vec![0.0; p];
    let mut hit = vec![false; p];
    for &u in order.iter().rev() {
        let mut touched = Vec::new();
        let mut add = |o: NodeId, w: f64, touched: &mut Vec<NodeId>| {
            if !hit[o] {
                hit[o] = true;
                acc[o] = 0.0;
                touched.push(o);
            }
            acc[o] += w;
        };
        for &c in dag.children(u) {
            let w = weight(u, c);
            if dag.is_observed(c) {
                add(c, w, &mut touched);
            } else {
                for &(o, wc) in &reach[c] {
                    add(o, w * wc, &mut touched);
                }
            }
        }
        touched.sort_unstable();
        reach[u] = touched.iter().map(|&o| (o, acc[o])).collect();
        for o in touched {
            hit[o] = false;
        }
    }
    reach
}

struct Reduction {
    dag: CanonicalDag,
    log: CanonicalizationLog,
    /// Output edges with their reduced weights, in output ids.
    weights: Vec<((NodeId, NodeId), f64)>,
}

fn reduce(dag: &LvDag, weight: impl Fn(NodeId, NodeId) -> f64) -> Result<Reduction, GraphError> {
    let order = dag.topological_order()?;
    let reach = latent_interior_reach(dag, &order, weight);
    let p = dag.p();

    let mut keep = vec![true; p];
    let mut events = Vec::new();
    for l in dag.latent() {
        if reach[l].len() < 2 {
            keep[l] = false;
        }
    }

    let mut id_map = vec![None; p];
    let mut next = 0;
    for v in 0..p {
        if keep[v] {
            id_map[v] = Some(next);
            next += 1;
        }
    }

    for (from, to) in dag.edges() {
        let stays = keep[from] && dag.is_observed(to) && reach[from].iter().any(|&(o, _)| o == to);
        if !stays {
            events.push(CanonicalizationEvent::RemovedEdge { from, to });
        }
    }
    let mut new_edges = Vec::new();
    for u in 0..p {
        if !keep[u] {
            continue;
        }
        for &(o, w) in &reach[u] {
            if !dag.has_edge(u, o) {
                events.push(CanonicalizationEvent::AddedEdge { from: u, to: o });
            }
            new_edges.push(((u, o), w));
        }
    }
    for l in dag.latent().filter(|&l| !keep[l]) {
        events.push(CanonicalizationEvent::DeletedLatent {
            latent: l,
            observed_children: reach[l].iter().map(|&(o, _)| o).collect(),
        });
    }

    let kinds: Vec<NodeKind> = (0..p).filter(|&v| keep[v]).map(|v| dag.kind(v)).collect();
    let remap = |v: NodeId| id_map[v].expect("kept node");
    let weights: Vec<_> = new_edges.iter().map(|&((u, o), w)| ((remap(u), remap(o)), w)).collect();
    let mut out = LvDag::new(kinds, weights.iter().map(|&(e, _)| e))?;
    if let Some(names) = dag.names() {
        let kept = (0..p).filter(|&v| keep[v]).map(|v| names[v].clone()).collect();
        out = out.with_names(kept)?;
    }
    for event in &events {
        log::info!("canonicalize: {event:?}");
    }
    let dag = validate(out)?;
    Ok(Reduction {
        dag,
        log: CanonicalizationLog { events, id_map },
        weights,
    })
}

/// Rewrites `dag` into canonical form, deleting latents that reach fewer
/// than two observed nodes.
pub fn canonicalize(dag: LvDag) -> Result<(CanonicalDag, CanonicalizationLog), GraphError> {
    dag.topological_order()?;
    let already_canonical = dag
        .latent()
        .all(|l| dag.parents(l).is_empty() && dag.children(l).len() >= 2)
        && (0..dag.p()).all(|u| dag.children(u).iter().all(|&c| dag.is_observed(c)));
    if already_canonical {
        let p = dag.p();
        let c = validate(dag)?;
        return Ok((
            c,
            CanonicalizationLog {
                events: Vec::new(),
                id_map: (0..p).map(Some).collect(),
            },
        ));
    }
    let r = reduce(&dag, |_, _| 1.0)?;
    Ok((r.dag, r.log))
}

/// Canonical reduction of a weighted model. The returned mixing matrix
/// belongs to the observationally equivalent canonical model; latent
/// columns are not rescaled.
pub fn reduce_weights_to_canonical(
    model: &GeneralModel,
) -> Result<(CanonicalDag, MixingMatrix, CanonicalizationLog), GraphError> {
    let r = reduce(model.dag(), |u, v| model.weight(u, v))?;
    let dag = r.dag;
    let p = dag.p();
    let mut a = DMatrix::zeros(p, p);
    for &((u, v), w) in &r.weights {
        a[(v, u)] = w;
    }
    let rows = dag.observed_in_order();
    let mut cols = rows.clone();
    cols.extend(dag.latent_in_order());
    let p_o = rows.len();
    let a_oo = DMatrix::from_fn(p_o, p_o, |i, k| a[(rows[i], rows[k])]);
    let a_ol = DMatrix::from_fn(p_o, cols.len() - p_o, |i, k| a[(rows[i], cols[p_o + k])]);
    let b_o = (DMatrix::identity(p_o, p_o) - a_oo)
        .try_inverse()
        .expect("I - A_oo is unit triangular in topological order");
    let b_l = &b_o * a_ol;
    let mut b = DMatrix::zeros(p_o, cols.len());
    b.columns_mut(0, p_o).copy_from(&b_o);
    b.columns_mut(p_o, cols.len() - p_o).copy_from(&b_l);
    Ok((dag.clone(), MixingMatrix::new(&dag, b), r.log))
}
