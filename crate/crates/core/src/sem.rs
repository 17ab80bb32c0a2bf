//! Random canonical graphs, weight sampling and synthetic data.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{validate, CanonicalDag, GraphError, LvDag, NodeId};
use crate::mixing::build_mixing;
use crate::model::{scaling_edges, EdgeWeights, GeneralModel, WeightedModel};

#[derive(Debug, Error)]
pub enum SemError {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("edge {0} -> {1} is not an observed edge of the model")]
    UnknownEdge(NodeId, NodeId),
    #[error("invalid noise specification: {0}")]
    InvalidNoise(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi canonical graph. Observed ids are `0..p_o`, latent ids
/// `p_o..p_o + p_l`. Observed nodes are placed in a random order and each
/// forward observed pair and each latent→observed pair becomes an edge with
/// probability `edge_prob`. Latents left with fewer than two children get
/// uniformly chosen extra children.
pub fn random_canonical_dag(p_o: usize, p_l: usize, edge_prob: f64, seed: u64) -> Result<CanonicalDag, SemError> {
    if p_o == 0 {
        return Err(SemError::InvalidDimensions("need at least one observed node".into()));
    }
    if p_l > 0 && p_o < 2 {
        return Err(SemError::InvalidDimensions(
            "latent nodes need at least two observed nodes".into(),
        ));
    }
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(SemError::InvalidDimensions(format!(
            "edge probability {edge_prob} not in (0, 1]"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<NodeId> = (0..p_o).collect();
    order.shuffle(&mut rng);
    let mut edges = Vec::new();
    for a in 0..p_o {
        for b in a + 1..p_o {
            if rng.random_bool(edge_prob) {
                edges.push((order[a], order[b]));
            }
        }
    }
    for l in p_o..p_o + p_l {
        let mut children: Vec<NodeId> = (0..p_o).filter(|_| rng.random_bool(edge_prob)).collect();
        while children.len() < 2 {
            let missing: Vec<NodeId> = (0..p_o).filter(|o| !children.contains(o)).collect();
            children.push(*missing.choose(&mut rng).expect("p_o >= 2"));
        }
        edges.extend(children.into_iter().map(|o| (l, o)));
    }
    Ok(validate(LvDag::with_counts(p_o, p_l, edges)?)?)
}

/// Random acyclic model over `p_o` observed and `p_l` latent nodes with no
/// canonicality constraints: nodes are shuffled into a random order and each
/// forward pair becomes an edge with probability `edge_prob`, weighted from
/// `[-1, -0.5] ∪ [0.5, 1]`.
pub fn random_general_model(p_o: usize, p_l: usize, edge_prob: f64, seed: u64) -> Result<GeneralModel, SemError> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(SemError::InvalidDimensions(format!(
            "edge probability {edge_prob} not in [0, 1]"
        )));
    }
    let p = p_o + p_l;
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<NodeId> = (0..p).collect();
    order.shuffle(&mut rng);
    let mut weights = EdgeWeights::new();
    for a in 0..p {
        for b in a + 1..p {
            if rng.random_bool(edge_prob) {
                weights.insert((order[a], order[b]), two_sided_uniform(&mut rng, 0.5, 1.0));
            }
        }
    }
    let dag = LvDag::with_counts(p_o, p_l, weights.keys().copied())?;
    Ok(GeneralModel::new(dag, weights)?)
}

/// Uniform on `[-hi, -lo] ∪ [lo, hi]`.
pub fn two_sided_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let magnitude = rng.random_range(lo..=hi);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

/// Weights uniform on `[-1, -0.5] ∪ [0.5, 1]`, scaling edges fixed at 1.
pub fn sample_weights(dag: &CanonicalDag, seed: u64) -> WeightedModel {
    sample_weights_in(dag, 0.5, 1.0, seed)
}

/// Weights with magnitudes uniform on `[lo, hi]` and random signs, scaling
/// edges fixed at 1. Edges are drawn in (from, to) order.
pub fn sample_weights_in(dag: &CanonicalDag, lo: f64, hi: f64, seed: u64) -> WeightedModel {
    let mut rng = rng_from_seed(seed);
    let scaling = scaling_edges(dag);
    let weights: EdgeWeights = dag
        .edges()
        .map(|e| {
            let w = if scaling.contains(&e) {
                1.0
            } else {
                two_sided_uniform(&mut rng, lo, hi)
            };
            (e, w)
        })
        .collect();
    WeightedModel::new(dag.clone(), weights).expect("sampled weights are complete and scaled")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NoiseFamily {
    Laplace { location: f64, scale: f64 },
    Exponential { scale: f64 },
    Uniform { low: f64, high: f64 },
}

/// Noise distribution shared by all nodes, with optional per-node
/// multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    #[serde(default)]
    pub scales: BTreeMap<NodeId, f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::laplace()
    }
}

impl NoiseSpec {
    pub fn laplace() -> Self {
        Self::new(NoiseFamily::Laplace {
            location: 0.0,
            scale: 1.0,
        })
    }

    pub fn exponential() -> Self {
        Self::new(NoiseFamily::Exponential { scale: 1.0 })
    }

    pub fn uniform() -> Self {
        Self::new(NoiseFamily::Uniform { low: -1.0, high: 1.0 })
    }

    pub fn new(family: NoiseFamily) -> Self {
        Self {
            family,
            scales: BTreeMap::new(),
        }
    }

    pub fn with_scale(mut self, node: NodeId, scale: f64) -> Self {
        self.scales.insert(node, scale);
        self
    }

    pub fn scale(&self, node: NodeId) -> f64 {
        self.scales.get(&node).copied().unwrap_or(1.0)
    }

    fn check(&self) -> Result<(), SemError> {
        let ok = match self.family {
            NoiseFamily::Laplace { location, scale } => location.is_finite() && scale > 0.0,
            NoiseFamily::Exponential { scale } => scale > 0.0,
            NoiseFamily::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
        };
        if !ok {
            return Err(SemError::InvalidNoise(format!("{:?}", self.family)));
        }
        if let Some((v, s)) = self.scales.iter().find(|(_, s)| !(**s > 0.0 && s.is_finite())) {
            return Err(SemError::InvalidNoise(format!("scale {s} for node {v}")));
        }
        Ok(())
    }

    /// Draws an `n × p` noise matrix, row by row.
    pub fn sample(&self, p: usize, n: usize, seed: u64) -> Result<DMatrix<f64>, SemError> {
        self.check()?;
        let mut rng = rng_from_seed(seed);
        let mut draw: Box<dyn FnMut(&mut ChaCha8Rng) -> f64> = match self.family {
            NoiseFamily::Laplace { location, scale } => Box::new(move |rng| {
                // Inverse CDF on u in (-1/2, 1/2).
                let u: f64 = rng.random::<f64>() - 0.5;
                location - scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }),
            NoiseFamily::Exponential { scale } => {
                let exp = Exp::new(1.0 / scale).map_err(|e| SemError::InvalidNoise(e.to_string()))?;
                Box::new(move |rng| exp.sample(rng))
            }
            NoiseFamily::Uniform { low, high } => {
                let uni = Uniform::new(low, high).map_err(|e| SemError::InvalidNoise(e.to_string()))?;
                Box::new(move |rng| uni.sample(rng))
            }
        };
        let scales: Vec<f64> = (0..p).map(|v| self.scale(v)).collect();
        let mut noise = DMatrix::zeros(n, p);
        for r in 0..n {
            for v in 0..p {
                noise[(r, v)] = scales[v] * draw(&mut rng);
            }
        }
        Ok(noise)
    }
}

/// `n × p_o` samples with `columns[c]` naming the observed node in column `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub values: DMatrix<f64>,
    pub columns: Vec<NodeId>,
}

impl Dataset {
    pub fn new(values: DMatrix<f64>, columns: Vec<NodeId>) -> Result<Self, SemError> {
        if values.ncols() != columns.len() {
            return Err(SemError::Dataset(format!(
                "{} columns but {} bindings",
                values.ncols(),
                columns.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(SemError::Dataset("non-finite entry".into()));
        }
        Ok(Self { values, columns })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Checks that the columns are bound one-to-one to the observed nodes of
    /// `dag`.
    pub fn check_binding(&self, dag: &LvDag) -> Result<(), SemError> {
        let mut cols = self.columns.clone();
        cols.sort_unstable();
        let observed: Vec<NodeId> = dag.observed().collect();
        if cols != observed {
            return Err(SemError::Dataset(format!(
                "columns {:?} do not match observed nodes {:?}",
                self.columns, observed
            )));
        }
        Ok(())
    }

    /// Column index of each node, `None` for nodes not in the dataset.
    pub fn column_of(&self, p: usize) -> Vec<Option<usize>> {
        let mut pos = vec![None; p];
        for (c, &v) in self.columns.iter().enumerate() {
            if v < p {
                pos[v] = Some(c);
            }
        }
        pos
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), SemError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.columns.iter().map(ToString::to_string))?;
        for r in 0..self.n() {
            w.write_record((0..self.columns.len()).map(|c| self.values[(r, c)].to_string()))?;
        }
        w.flush().map_err(|e| SemError::Dataset(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv(input: impl Read) -> Result<Self, SemError> {
        let mut r = csv::Reader::from_reader(input);
        let columns = r
            .headers()?
            .iter()
            .map(|h| {
                h.trim()
                    .parse::<NodeId>()
                    .map_err(|_| SemError::Dataset(format!("header {h:?} is not a node id")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut data = Vec::new();
        let mut n = 0;
        for record in r.records() {
            let record = record?;
            for field in record.iter() {
                let x: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| SemError::Dataset(format!("row {}: bad number {field:?}", n + 1)))?;
                data.push(x);
            }
            n += 1;
        }
        let values = DMatrix::from_row_slice(n, columns.len(), &data);
        Self::new(values, columns)
    }
}

/// Observed columns of `X = N B′ᵀ`, bound to observed nodes in ascending id.
pub fn simulate_linear(model: &WeightedModel, noise: &NoiseSpec, n: usize, seed: u64) -> Result<Dataset, SemError> {
    let eps = noise.sample(model.dag().p(), n, seed)?;
    Ok(linear_from_noise(model, &eps))
}

/// Linear data for a given `n × p` noise matrix (columns indexed by node id).
pub fn linear_from_noise(model: &WeightedModel, eps: &DMatrix<f64>) -> Dataset {
    let b = build_mixing(model);
    let dag = model.dag();
    let columns: Vec<NodeId> = dag.observed().collect();
    // Reorder B′ so its columns follow node ids and its rows follow `columns`.
    let bt = DMatrix::from_fn(dag.p(), columns.len(), |v, c| b.matrix[(b.row(columns[c]), b.col(v))]);
    Dataset::new(eps * bt, columns).expect("finite noise gives finite data")
}

/// Nonlinear variant: every observed node applies `tanh` to its weighted
/// parent sum, except that the outcome `j` of `target = (k, j)` receives
/// `k` linearly. Latents are their own noise.
pub fn simulate_misspecified(
    model: &WeightedModel,
    noise: &NoiseSpec,
    target: (NodeId, NodeId),
    n: usize,
    seed: u64,
) -> Result<Dataset, SemError> {
    let dag = model.dag();
    let (k, j) = target;
    if k >= dag.p() || j >= dag.p() || !dag.is_observed(k) || !dag.is_observed(j) || !dag.has_edge(k, j) {
        return Err(SemError::UnknownEdge(k, j));
    }
    let eps = noise.sample(dag.p(), n, seed)?;
    let columns: Vec<NodeId> = dag.observed().collect();
    let order = dag.order().to_vec();
    let mut values = DMatrix::zeros(n, columns.len());
    let col = {
        let mut c = vec![usize::MAX; dag.p()];
        for (i, &v) in columns.iter().enumerate() {
            c[v] = i;
        }
        c
    };
    let mut v = vec![0.0; dag.p()];
    for r in 0..n {
        for &u in &order {
            if dag.is_latent(u) {
                v[u] = eps[(r, u)];
                continue;
            }
            let mut inner = 0.0;
            let mut linear = 0.0;
            for &q in dag.parents(u) {
                let term = model.weight(q, u) * v[q];
                if u == j && q == k {
                    linear += term;
                } else {
                    inner += term;
                }
            }
            v[u] = inner.tanh() + linear + eps[(r, u)];
        }
        for &o in &columns {
            values[(r, col[o])] = v[o];
        }
    }
    Dataset::new(values, columns)
}
