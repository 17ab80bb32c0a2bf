//! Brute-force identifiability by explicit enumeration of the column
//! permutations of `B′` that keep the observational distribution, plus the
//! path-sum identities behind the mixing matrix.

use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::certify::{EffectKind, IdQuery, Setting};
use crate::graph::{CanonicalDag, LvDag, NodeId};
use crate::mixing::{build_mixing, MixingMatrix};
use crate::model::{GeneralModel, WeightedModel};
use crate::sem::sample_weights;

pub const DEFAULT_CAP: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("graph has {p} nodes, above the enumeration cap of {cap}")]
    GraphTooLargeForEnumeration { p: usize, cap: usize },
    #[error("observed block of the mixing matrix is singular")]
    SingularObservedBlock,
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
}

fn check_cap(p: usize, cap: usize) -> Result<(), OracleError> {
    if p > cap {
        Err(OracleError::GraphTooLargeForEnumeration { p, cap })
    } else {
        Ok(())
    }
}

/// Every directed path from `from` to `to` (a single vertex when equal)
/// whose interior nodes satisfy `interior`.
fn paths_where(dag: &LvDag, from: NodeId, to: NodeId, interior: &dyn Fn(NodeId) -> bool) -> Vec<Vec<NodeId>> {
    fn walk(
        dag: &LvDag,
        at: NodeId,
        to: NodeId,
        interior: &dyn Fn(NodeId) -> bool,
        path: &mut Vec<NodeId>,
        out: &mut Vec<Vec<NodeId>>,
    ) {
        if at == to {
            out.push(path.clone());
            return;
        }
        for &c in dag.children(at) {
            if c != to && !interior(c) {
                continue;
            }
            path.push(c);
            walk(dag, c, to, interior, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    let mut path = vec![from];
    walk(dag, from, to, interior, &mut path, &mut out);
    out
}

pub fn all_paths(dag: &LvDag, from: NodeId, to: NodeId) -> Vec<Vec<NodeId>> {
    paths_where(dag, from, to, &|_| true)
}

fn path_weight(model: &GeneralModel, path: &[NodeId]) -> f64 {
    path.windows(2).map(|e| model.weight(e[0], e[1])).product()
}

/// Sum over all directed paths `j ⇝ i` of the product of edge weights.
pub fn path_sum_total_effect(model: &GeneralModel, j: NodeId, i: NodeId) -> Result<f64, OracleError> {
    path_sum_total_effect_with_cap(model, j, i, DEFAULT_CAP)
}

pub fn path_sum_total_effect_with_cap(
    model: &GeneralModel,
    j: NodeId,
    i: NodeId,
    cap: usize,
) -> Result<f64, OracleError> {
    check_cap(model.dag().p(), cap)?;
    Ok(all_paths(model.dag(), j, i).iter().map(|p| path_weight(model, p)).sum())
}

/// `(I − A)^{-1}` by dense inversion, indexed by node id.
pub fn dense_total_effects(model: &GeneralModel) -> DMatrix<f64> {
    let p = model.dag().p();
    (DMatrix::identity(p, p) - model.adjacency())
        .try_inverse()
        .expect("I - A is invertible for acyclic A")
}

/// Both sides of the two-path Gessel–Viennot identity for sources `a` and
/// sinks `b`: the 2×2 minor of `(I − A)^{-1}` with rows `b` and columns `a`,
/// and the signed sum over vertex-disjoint path systems.
pub fn gessel_viennot_2x2(
    model: &GeneralModel,
    a: [NodeId; 2],
    b: [NodeId; 2],
    cap: usize,
) -> Result<(f64, f64), OracleError> {
    let dag = model.dag();
    check_cap(dag.p(), cap)?;
    let total = dense_total_effects(model);
    let minor = total[(b[0], a[0])] * total[(b[1], a[1])] - total[(b[1], a[0])] * total[(b[0], a[1])];
    let mut signed = 0.0;
    for (sigma, sign) in [([0, 1], 1.0), ([1, 0], -1.0)] {
        let first = all_paths(dag, a[0], b[sigma[0]]);
        let second = all_paths(dag, a[1], b[sigma[1]]);
        for p in &first {
            for q in &second {
                if p.iter().all(|v| !q.contains(v)) {
                    signed += sign * path_weight(model, p) * path_weight(model, q);
                }
            }
        }
    }
    Ok((minor, signed))
}

/// Column permutation of `B′`: the column of node `v` is replaced by the
/// column of `images[v]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ColumnPermutation {
    pub images: Vec<NodeId>,
}

impl ColumnPermutation {
    pub fn identity(p: usize) -> Self {
        Self {
            images: (0..p).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.images.iter().enumerate().all(|(v, &w)| v == w)
    }

    pub fn transposition(p: usize, a: NodeId, b: NodeId) -> Self {
        let mut s = Self::identity(p);
        s.images.swap(a, b);
        s
    }

    /// Non-trivial cycles, each starting at its smallest element.
    pub fn cycles(&self) -> Vec<Vec<NodeId>> {
        let mut seen = vec![false; self.images.len()];
        let mut out = Vec::new();
        for start in 0..self.images.len() {
            if seen[start] || self.images[start] == start {
                continue;
            }
            let mut cycle = Vec::new();
            let mut v = start;
            while !seen[v] {
                seen[v] = true;
                cycle.push(v);
                v = self.images[v];
            }
            out.push(cycle);
        }
        out
    }

    pub fn apply(&self, b: &MixingMatrix, dag: &CanonicalDag) -> MixingMatrix {
        let mut m = b.matrix.clone();
        for (v, &w) in self.images.iter().enumerate() {
            m.set_column(b.col(v), &b.matrix.column(b.col(w)));
        }
        MixingMatrix::new(dag, m)
    }
}

impl fmt::Display for ColumnPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cycles = self.cycles();
        if cycles.is_empty() {
            return f.write_str("()");
        }
        for c in cycles {
            let items: Vec<String> = c.iter().map(ToString::to_string).collect();
            write!(f, "({})", items.join(" "))?;
        }
        Ok(())
    }
}

/// Model read back from a (possibly permuted) mixing matrix.
#[derive(Debug, Clone)]
pub struct RecoveredModel {
    /// Rows and columns follow `b.rows()` of the input mixing matrix.
    pub a_oo: DMatrix<f64>,
    /// Rows follow `b.rows()`, columns the latent part of `b.cols()`.
    pub a_ol: DMatrix<f64>,
    /// The rescaled mixing matrix the adjacency was computed from.
    pub scaled: MixingMatrix,
    /// Support graph on the input node ids, when free of self loops.
    pub support: Option<LvDag>,
    /// Support is acyclic and every latent has at least two children.
    pub canonical: bool,
}

pub const ZERO_TOL: f64 = 1e-7;

/// Rescales every column so that its first nonzero entry (in row order,
/// which is topological) equals 1, then inverts `B_o = (I − A_oo)^{-1}`
/// and `B_l = B_o A_ol`.
pub fn recover_model(b: &MixingMatrix, dag: &CanonicalDag) -> Result<RecoveredModel, OracleError> {
    let mut m = b.matrix.clone();
    for c in 0..m.ncols() {
        if let Some(r) = (0..m.nrows()).find(|&r| m[(r, c)].abs() > ZERO_TOL) {
            let s = m[(r, c)];
            m.column_mut(c).scale_mut(1.0 / s);
        }
    }
    let scaled = MixingMatrix::new(dag, m);
    let p_o = scaled.p_o();
    let inv = scaled.b_o().try_inverse().ok_or(OracleError::SingularObservedBlock)?;
    let a_oo = DMatrix::identity(p_o, p_o) - &inv;
    let a_ol = &inv * scaled.b_l();

    let rows = scaled.rows().to_vec();
    let cols = scaled.cols().to_vec();
    let mut edges = Vec::new();
    let mut self_loop = false;
    for r in 0..p_o {
        for c in 0..p_o {
            if a_oo[(r, c)].abs() > ZERO_TOL {
                if r == c {
                    self_loop = true;
                } else {
                    edges.push((rows[c], rows[r]));
                }
            }
        }
        for c in 0..a_ol.ncols() {
            if a_ol[(r, c)].abs() > ZERO_TOL {
                edges.push((cols[p_o + c], rows[r]));
            }
        }
    }
    let support = if self_loop {
        None
    } else {
        Some(LvDag::new(dag.kinds().to_vec(), edges).expect("edges are distinct and in range"))
    };
    let canonical = support
        .as_ref()
        .is_some_and(|s| s.topological_order().is_ok() && s.latent().all(|l| s.children(l).len() >= 2));
    Ok(RecoveredModel {
        a_oo,
        a_ol,
        scaled,
        support,
        canonical,
    })
}

/// Nodes grouped by equal observed-descendant sets, in topological order of
/// their first member; singletons omitted.
fn descendant_classes(dag: &CanonicalDag) -> Vec<Vec<NodeId>> {
    let mut classes: Vec<(crate::graph::NodeSet, Vec<NodeId>)> = Vec::new();
    for &v in dag.order() {
        let de = dag.observed_descendants(v).expect("valid node");
        match classes.iter_mut().find(|(d, _)| *d == de) {
            Some((_, members)) => members.push(v),
            None => classes.push((de, vec![v])),
        }
    }
    classes.into_iter().map(|(_, m)| m).filter(|m| m.len() > 1).collect()
}

fn permutations_of(items: &[NodeId]) -> Vec<Vec<NodeId>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(i);
        for mut tail in permutations_of(&rest) {
            tail.insert(0, first);
            out.push(tail);
        }
    }
    out
}

/// Every permutation that only moves nodes within their observed-descendant
/// class, identity first.
pub fn class_permutations(dag: &CanonicalDag) -> Vec<ColumnPermutation> {
    let mut out = vec![ColumnPermutation::identity(dag.p())];
    for class in descendant_classes(dag) {
        let arrangements = permutations_of(&class);
        let mut next = Vec::with_capacity(out.len() * arrangements.len());
        for base in &out {
            for arr in &arrangements {
                let mut s = base.clone();
                for (&v, &w) in class.iter().zip(arr) {
                    s.images[v] = w;
                }
                next.push(s);
            }
        }
        out = next;
    }
    out
}

fn admissible(rec: &RecoveredModel, dag: &CanonicalDag, setting: Setting) -> bool {
    match setting {
        Setting::Unknown => rec.canonical,
        Setting::Known => rec.support.as_ref().is_some_and(|s| s.same_structure(dag)),
    }
}

/// Class permutations whose recovered model is valid for `setting`, checked
/// on every model in `models`.
pub fn valid_permutations_for(
    dag: &CanonicalDag,
    setting: Setting,
    models: &[WeightedModel],
    cap: usize,
) -> Result<Vec<ColumnPermutation>, OracleError> {
    check_cap(dag.p(), cap)?;
    let mixings: Vec<MixingMatrix> = models.iter().map(build_mixing).collect();
    let mut out = Vec::new();
    for sigma in class_permutations(dag) {
        let mut ok = true;
        for b in &mixings {
            let rec = recover_model(&sigma.apply(b, dag), dag)?;
            if !admissible(&rec, dag, setting) {
                ok = false;
                break;
            }
        }
        if ok {
            out.push(sigma);
        }
    }
    Ok(out)
}

/// Valid permutations on seeded generic weights.
pub fn valid_permutations(
    dag: &CanonicalDag,
    setting: Setting,
    config: &OracleConfig,
) -> Result<Vec<ColumnPermutation>, OracleError> {
    let models = generic_draws(dag, config);
    valid_permutations_for(dag, setting, &models, config.cap)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub draws: usize,
    pub seed: u64,
    pub cap: usize,
    /// A queried value counts as changed when it moves by more than
    /// `rel_tol · max(1, |value|)`.
    pub rel_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            draws: 5,
            seed: 0,
            cap: DEFAULT_CAP,
            rel_tol: 1e-6,
        }
    }
}

pub fn generic_draws(dag: &CanonicalDag, config: &OracleConfig) -> Vec<WeightedModel> {
    (0..config.draws as u64)
        .map(|r| sample_weights(dag, config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleVerdict {
    pub identifiable: bool,
    pub structurally_zero: bool,
    pub kind: EffectKind,
    pub setting: Setting,
    /// A valid permutation that changes the queried quantity.
    pub counterexample: Option<ColumnPermutation>,
    pub permutations_checked: usize,
}

fn differs(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() > tol * a.abs().max(1.0)
}

/// Declares the query non-identifiable iff some valid permutation changes the
/// queried quantity on some generic draw.
pub fn bruteforce_identifiable(
    dag: &CanonicalDag,
    query: &IdQuery,
    config: &OracleConfig,
) -> Result<OracleVerdict, OracleError> {
    check_cap(dag.p(), config.cap)?;
    let endpoints = || {
        query
            .source
            .zip(query.target)
            .filter(|&(j, i)| j != i && j < dag.p() && i < dag.p() && dag.is_observed(j) && dag.is_observed(i))
            .ok_or_else(|| OracleError::PreconditionViolated("query needs two distinct observed nodes".into()))
    };
    let structurally_zero = match query.kind {
        EffectKind::Tce => {
            let (j, i) = endpoints()?;
            !dag.observed_descendants(j).expect("valid").contains(i)
        }
        EffectKind::Dce => {
            let (j, i) = endpoints()?;
            !dag.has_edge(j, i)
        }
        EffectKind::Matrix => false,
    };
    let models = generic_draws(dag, config);
    let perms = valid_permutations_for(dag, query.setting, &models, config.cap)?;
    let mut counterexample = None;
    'outer: for model in &models {
        let b = build_mixing(model);
        let base = recover_model(&b, dag)?;
        for sigma in perms.iter().filter(|s| !s.is_identity()) {
            let rec = recover_model(&sigma.apply(&b, dag), dag)?;
            let changed = match query.kind {
                EffectKind::Tce => {
                    let (j, i) = endpoints()?;
                    differs(
                        base.scaled.total_effect(j, i),
                        rec.scaled.total_effect(j, i),
                        config.rel_tol,
                    )
                }
                EffectKind::Dce => {
                    let (j, i) = endpoints()?;
                    let (r, c) = (b.row(i), b.row(j));
                    differs(base.a_oo[(r, c)], rec.a_oo[(r, c)], config.rel_tol)
                }
                EffectKind::Matrix => {
                    let (x, y) = (base.scaled.b_o(), rec.scaled.b_o());
                    x.iter().zip(y.iter()).any(|(&u, &v)| differs(u, v, config.rel_tol))
                }
            };
            if changed {
                counterexample = Some(sigma.clone());
                break 'outer;
            }
        }
    }
    Ok(OracleVerdict {
        identifiable: counterexample.is_none(),
        structurally_zero,
        kind: query.kind,
        setting: query.setting,
        counterexample,
        permutations_checked: perms.len(),
    })
}

/// Swaps the columns of observed `j` and latent `l` (which must share their
/// observed descendants) and checks that the recovered `Ã_oo` differs from
/// `A_oo` exactly by `1[i ∈ ch(l)∖{j}] · c_{l,i} · [I − A_oo]_{j,k}`, where
/// `c_{l,i}` sums the weights of `l ⇝ i` paths with latent-only interiors.
pub fn swapped_adjacency_check(model: &WeightedModel, j: NodeId, l: NodeId, tol: f64) -> Result<bool, OracleError> {
    let dag = model.dag();
    check_cap(dag.p(), DEFAULT_CAP)?;
    if !dag.is_observed(j) || !dag.is_latent(l) {
        return Err(OracleError::PreconditionViolated(format!(
            "need an observed j and a latent l, got {j} and {l}"
        )));
    }
    let de = |v| dag.observed_descendants(v).expect("valid node");
    if de(j) != de(l) {
        return Err(OracleError::PreconditionViolated(format!(
            "observed descendants of {j} and {l} differ"
        )));
    }
    let b = build_mixing(model);
    let rec = recover_model(&ColumnPermutation::transposition(dag.p(), j, l).apply(&b, dag), dag)?;
    let general = model.to_general();
    let rows = b.rows();
    let p_o = rows.len();
    let mut i_minus_a = DMatrix::<f64>::identity(p_o, p_o);
    for r in 0..p_o {
        for c in 0..p_o {
            i_minus_a[(r, c)] -= model.weight(rows[c], rows[r]);
        }
    }
    let jr = b.row(j);
    for r in 0..p_o {
        let i = rows[r];
        let c_li = if i != j && dag.has_edge(l, i) {
            paths_where(dag, l, i, &|v| dag.is_latent(v))
                .iter()
                .map(|p| path_weight(&general, p))
                .sum()
        } else {
            0.0
        };
        for c in 0..p_o {
            let original = model.weight(rows[c], i);
            let predicted = original + c_li * i_minus_a[(jr, c)];
            if (rec.a_oo[(r, c)] - predicted).abs() > tol * predicted.abs().max(1.0) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Canonical graphs with exactly `p_o` observed nodes in the fixed
/// topological order `0..p_o` and `p_l` latents, one per unordered multiset
/// of latent child sets. Every canonical graph of that size is isomorphic to
/// one of these.
pub fn enumerate_canonical_dags(p_o: usize, p_l: usize) -> Vec<CanonicalDag> {
    let pairs: Vec<(NodeId, NodeId)> = (0..p_o).flat_map(|a| (a + 1..p_o).map(move |b| (a, b))).collect();
    let child_sets: Vec<Vec<NodeId>> = (0u32..1 << p_o)
        .filter(|m| m.count_ones() >= 2)
        .map(|m| (0..p_o).filter(|&o| m & (1 << o) != 0).collect())
        .collect();
    // Non-decreasing index sequences of length p_l into child_sets.
    let mut multisets: Vec<Vec<usize>> = vec![Vec::new()];
    for _ in 0..p_l {
        multisets = multisets
            .into_iter()
            .flat_map(|m| {
                let start = m.last().copied().unwrap_or(0);
                (start..child_sets.len()).map(move |k| {
                    let mut next = m.clone();
                    next.push(k);
                    next
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for mask in 0u64..1 << pairs.len() {
        let observed: Vec<(NodeId, NodeId)> = pairs
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &e)| e)
            .collect();
        for m in &multisets {
            let mut edges = observed.clone();
            for (idx, &k) in m.iter().enumerate() {
                edges.extend(child_sets[k].iter().map(|&o| (p_o + idx, o)));
            }
            let dag = LvDag::with_counts(p_o, p_l, edges).expect("valid edges");
            out.push(crate::graph::validate(dag).expect("canonical by construction"));
        }
    }
    out
}

/// Queries the certifier and the oracle are compared on: TCE for every
/// ordered pair with `i ∈ de_o(j)`, DCE for every observed edge, and the
/// matrix query, each in both settings.
pub fn in_scope_queries(dag: &CanonicalDag) -> Vec<IdQuery> {
    let mut out = Vec::new();
    for setting in [Setting::Known, Setting::Unknown] {
        for j in dag.observed() {
            let de = dag.observed_descendants(j).expect("valid node");
            for i in de.iter().filter(|&i| i != j) {
                out.push(IdQuery::pair(EffectKind::Tce, j, i, setting));
            }
            for &i in dag.children(j) {
                out.push(IdQuery::pair(EffectKind::Dce, j, i, setting));
            }
        }
        out.push(IdQuery::matrix(setting));
    }
    out
}

#[derive(Debug, Clone)]
pub struct Disagreement {
    pub query: IdQuery,
    pub certified: crate::certify::IdVerdict,
    pub oracle: OracleVerdict,
}

/// Runs every in-scope query through both the certifier and the oracle.
pub fn cross_check(dag: &CanonicalDag, config: &OracleConfig) -> Result<(usize, Vec<Disagreement>), OracleError> {
    let certifier = crate::certify::Certifier::new(dag);
    let queries = in_scope_queries(dag);
    let mut out = Vec::new();
    for q in &queries {
        let certified = certifier.certify(q).expect("in-scope queries are well formed");
        let oracle = bruteforce_identifiable(dag, q, config)?;
        if certified.identifiable != oracle.identifiable {
            out.push(Disagreement {
                query: *q,
                certified,
                oracle,
            });
        }
    }
    Ok((queries.len(), out))
}
