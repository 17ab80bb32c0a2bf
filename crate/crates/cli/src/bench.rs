//! Benchmark protocols. Each protocol sweeps one grid parameter, runs a
//! number of seeded trials per grid point, and reports long-form records.

use std::io::Write;
use std::time::Instant;

use lingam_id::certify::{Certifier, EffectKind, IdQuery, Setting};
use lingam_id::graph::library;
use lingam_id::grica::{estimate, normalized_frobenius, relative_error, EstimatorConfig};
use lingam_id::sem::{
    random_canonical_dag, rng_from_seed, sample_weights_in, simulate_linear, simulate_misspecified, NoiseFamily,
    NoiseSpec,
};
use lingam_id::{build_mixing, CanonicalDag, NodeId};
use rand::seq::IndexedRandom;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

pub const HEADER: &str = "protocol,grid_param,grid_value,trial,metric,value,seconds";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolId {
    IdentifiabilityCurve,
    RuntimeCurve,
    ErrorVsSamples,
    ErrorVsNoiseScale,
    RandomGraphFrobenius,
    Misspecification,
}

impl ProtocolId {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolId::IdentifiabilityCurve => "identifiability_curve",
            ProtocolId::RuntimeCurve => "runtime_curve",
            ProtocolId::ErrorVsSamples => "error_vs_samples",
            ProtocolId::ErrorVsNoiseScale => "error_vs_noise_scale",
            ProtocolId::RandomGraphFrobenius => "random_graph_frobenius",
            ProtocolId::Misspecification => "misspecification",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        let name = name.replace('-', "_");
        [
            ProtocolId::IdentifiabilityCurve,
            ProtocolId::RuntimeCurve,
            ProtocolId::ErrorVsSamples,
            ProtocolId::ErrorVsNoiseScale,
            ProtocolId::RandomGraphFrobenius,
            ProtocolId::Misspecification,
        ]
        .into_iter()
        .find(|p| p.name() == name)
    }
}

/// A protocol and its grid. Only the grid list a protocol sweeps is used;
/// the others keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchProtocol {
    pub protocol: ProtocolId,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Swept by `identifiability_curve`; the first entry is the edge
    /// probability of the other random-graph protocols.
    #[serde(default = "defaults::edge_probs")]
    pub edge_probs: Vec<f64>,
    /// Graph sizes swept by `runtime_curve`.
    #[serde(default = "defaults::sizes")]
    pub sizes: Vec<usize>,
    /// Swept by `error_vs_samples`, `random_graph_frobenius` and
    /// `misspecification`.
    #[serde(default = "defaults::sample_sizes")]
    pub sample_sizes: Vec<usize>,
    /// Swept by `error_vs_noise_scale`.
    #[serde(default = "defaults::scale_ratios")]
    pub scale_ratios: Vec<f64>,
    /// Node count of `identifiability_curve` graphs.
    #[serde(default = "defaults::p")]
    pub p: usize,
    /// `p_o / p` for generated graphs.
    #[serde(default = "defaults::observed_fraction")]
    pub observed_fraction: f64,
    /// Shipped graph for the estimation protocols.
    #[serde(default = "defaults::graph")]
    pub graph: String,
    /// Edge whose weight is scored, by node names.
    #[serde(default = "defaults::target")]
    pub target: (String, String),
    /// Sample size of `error_vs_noise_scale`.
    #[serde(default = "defaults::n")]
    pub n: usize,
    /// Nodes whose noise is multiplied by `ratio^exponent` in
    /// `error_vs_noise_scale`.
    #[serde(default = "defaults::scaled")]
    pub scaled: Vec<(String, f64)>,
    /// Observed and latent counts of `random_graph_frobenius` graphs.
    #[serde(default = "defaults::random_graph")]
    pub random_graph: (usize, usize),
    /// Weight magnitudes are drawn uniformly from `[lo, hi]` with random
    /// signs.
    #[serde(default)]
    pub weights: Option<(f64, f64)>,
    #[serde(default = "defaults::noise")]
    pub noise: NoiseFamily,
    #[serde(default = "defaults::estimator")]
    pub estimator: EstimatorConfig,
}

mod defaults {
    use super::*;

    pub fn trials() -> usize {
        10
    }
    pub fn edge_probs() -> Vec<f64> {
        (1..=9).map(|k| k as f64 / 10.0).collect()
    }
    pub fn sizes() -> Vec<usize> {
        vec![125, 250, 500, 1000]
    }
    pub fn sample_sizes() -> Vec<usize> {
        vec![500, 1000, 5000, 10000, 50000]
    }
    pub fn scale_ratios() -> Vec<f64> {
        vec![0.25, 0.5, 1.0, 2.0, 4.0]
    }
    pub fn p() -> usize {
        10
    }
    pub fn observed_fraction() -> f64 {
        0.5
    }
    pub fn graph() -> String {
        "g1".into()
    }
    pub fn target() -> (String, String) {
        ("T".into(), "Y".into())
    }
    pub fn n() -> usize {
        10000
    }
    pub fn scaled() -> Vec<(String, f64)> {
        vec![("W".into(), 1.0)]
    }
    pub fn random_graph() -> (usize, usize) {
        (5, 1)
    }
    pub fn noise() -> NoiseFamily {
        NoiseFamily::Laplace {
            location: 0.0,
            scale: 1.0,
        }
    }
    pub fn estimator() -> EstimatorConfig {
        EstimatorConfig::default()
    }
}

impl BenchProtocol {
    /// The protocol with every field at its default.
    pub fn new(protocol: ProtocolId) -> Self {
        let mut p: Self = serde_json::from_value(serde_json::json!({ "protocol": protocol })).expect("defaults");
        if protocol == ProtocolId::IdentifiabilityCurve {
            p.trials = 500;
        }
        p
    }

    fn weight_range(&self) -> (f64, f64) {
        self.weights.unwrap_or(match self.protocol {
            ProtocolId::Misspecification => (0.3, 0.6),
            _ => (0.5, 1.0),
        })
    }

    fn grid(&self) -> (&'static str, Vec<String>) {
        let fmt = |v: &[f64]| v.iter().map(|x| x.to_string()).collect();
        let fmt_usize = |v: &[usize]| v.iter().map(|x| x.to_string()).collect();
        match self.protocol {
            ProtocolId::IdentifiabilityCurve => ("edge_prob", fmt(&self.edge_probs)),
            ProtocolId::RuntimeCurve => ("p", fmt_usize(&self.sizes)),
            ProtocolId::ErrorVsNoiseScale => ("scale_ratio", fmt(&self.scale_ratios)),
            ProtocolId::ErrorVsSamples | ProtocolId::RandomGraphFrobenius | ProtocolId::Misspecification => {
                ("n", fmt_usize(&self.sample_sizes))
            }
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Input(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.grid().1.is_empty() {
            return bad(format!("{} needs a non-empty grid", self.protocol.name()));
        }
        if self.edge_probs.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
            return bad("edge probabilities must lie in (0, 1]".into());
        }
        if self.edge_probs.is_empty() && self.protocol != ProtocolId::ErrorVsSamples {
            return bad("edge_probs must not be empty".into());
        }
        if !(self.observed_fraction > 0.0 && self.observed_fraction <= 1.0) {
            return bad("observed_fraction must lie in (0, 1]".into());
        }
        if self.sizes.iter().any(|&p| p < 2) || self.p < 2 {
            return bad("graph sizes must be at least 2".into());
        }
        if self.sample_sizes.iter().any(|&n| n < 10) || self.n < 10 {
            return bad("sample sizes must be at least 10".into());
        }
        if self.scale_ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("scale ratios must be positive".into());
        }
        let (lo, hi) = self.weight_range();
        if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
            return bad(format!("weight range [{lo}, {hi}] is invalid"));
        }
        self.estimator.check().map_err(|e| CliError::Input(e.to_string()))?;
        if matches!(
            self.protocol,
            ProtocolId::ErrorVsSamples | ProtocolId::ErrorVsNoiseScale | ProtocolId::Misspecification
        ) {
            let dag = self.library_graph()?;
            resolve(&dag, &self.target.0)?;
            resolve(&dag, &self.target.1)?;
            if !dag.has_edge(resolve(&dag, &self.target.0)?, resolve(&dag, &self.target.1)?) {
                return bad(format!(
                    "{} has no edge {} -> {}",
                    self.graph, self.target.0, self.target.1
                ));
            }
            if self.protocol == ProtocolId::ErrorVsNoiseScale {
                for (node, _) in &self.scaled {
                    resolve(&dag, node)?;
                }
            }
        }
        Ok(())
    }

    fn library_graph(&self) -> Result<CanonicalDag> {
        library::by_name(&self.graph).ok_or_else(|| CliError::Input(format!("unknown graph {:?}", self.graph)))
    }

    fn split(&self, p: usize) -> (usize, usize) {
        let p_o = ((p as f64 * self.observed_fraction).round() as usize).clamp(1, p);
        (p_o, p - p_o)
    }
}

fn resolve(dag: &CanonicalDag, label: &str) -> Result<NodeId> {
    dag.resolve(label).map_err(|e| CliError::Input(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub protocol: ProtocolId,
    pub grid_param: &'static str,
    pub grid_value: String,
    /// Trial index, or `all` for a per-grid-point summary.
    pub trial: String,
    pub metric: String,
    pub value: f64,
    pub seconds: f64,
}

impl Record {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.protocol.name(),
            self.grid_param,
            self.grid_value,
            self.trial,
            self.metric,
            self.value,
            self.seconds
        )
    }
}

/// Seed of one trial, fixed by the base seed and the grid and trial indices.
pub fn trial_seed(base: u64, grid_index: usize, trial: usize) -> u64 {
    let mut rng: ChaCha8Rng = rng_from_seed(base);
    rng.set_stream(((grid_index as u64) << 32) | trial as u64);
    rng.next_u64()
}

/// Runs the protocol on a pool of `workers` threads, handing each finished
/// grid point to `sink` in grid order.
pub fn run(
    protocol: &BenchProtocol,
    workers: Option<usize>,
    mut sink: impl FnMut(&[Record]) -> Result<()>,
) -> Result<()> {
    protocol.check()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Input("workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::Runtime(e.to_string()))?;
    let (param, values) = protocol.grid();
    for (g, value) in values.iter().enumerate() {
        let trials: Vec<Result<Vec<(String, f64, f64)>>> = pool.install(|| {
            (0..protocol.trials)
                .into_par_iter()
                .map(|t| run_trial(protocol, g, trial_seed(protocol.seed, g, t)))
                .collect()
        });
        let mut records = Vec::new();
        // Per metric, in first-seen order: values and seconds of every trial.
        let mut by_metric: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
        for (t, trial) in trials.into_iter().enumerate() {
            for (metric, v, secs) in trial? {
                match by_metric.iter_mut().find(|(m, _, _)| *m == metric) {
                    Some(s) => {
                        s.1.push(v);
                        s.2.push(secs);
                    }
                    None => by_metric.push((metric.clone(), vec![v], vec![secs])),
                }
                records.push(Record {
                    protocol: protocol.protocol,
                    grid_param: param,
                    grid_value: value.clone(),
                    trial: t.to_string(),
                    metric,
                    value: v,
                    seconds: secs,
                });
            }
        }
        for (metric, values, secs) in by_metric {
            for (stat, f) in [("mean", mean as fn(&[f64]) -> f64), ("median", median)] {
                records.push(Record {
                    protocol: protocol.protocol,
                    grid_param: param,
                    grid_value: value.clone(),
                    trial: "all".into(),
                    metric: format!("{stat}_{metric}"),
                    value: f(&values),
                    seconds: f(&secs),
                });
            }
        }
        sink(&records)?;
    }
    Ok(())
}

/// Runs the protocol and writes CSV to `out`, flushing after every grid
/// point so an interrupted run keeps what it finished.
pub fn run_to_csv(protocol: &BenchProtocol, workers: Option<usize>, mut out: impl Write) -> Result<()> {
    protocol.check()?;
    let io = |e: std::io::Error| CliError::Runtime(e.to_string());
    writeln!(out, "{HEADER}").map_err(io)?;
    run(protocol, workers, |records| {
        for r in records {
            writeln!(out, "{}", r.csv_line()).map_err(io)?;
        }
        out.flush().map_err(io)
    })
}

/// Collects every record in memory.
pub fn run_collect(protocol: &BenchProtocol, workers: Option<usize>) -> Result<Vec<Record>> {
    let mut all = Vec::new();
    run(protocol, workers, |r| {
        all.extend_from_slice(r);
        Ok(())
    })?;
    Ok(all)
}

type Metrics = Vec<(String, f64, f64)>;

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Median, with NaN sorted last.
pub fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k == 0 {
        return f64::NAN;
    }
    (v[(k - 1) / 2] + v[k / 2]) / 2.0
}

fn run_trial(protocol: &BenchProtocol, g: usize, seed: u64) -> Result<Metrics> {
    match protocol.protocol {
        ProtocolId::IdentifiabilityCurve => identifiability_trial(protocol, protocol.edge_probs[g], seed),
        ProtocolId::RuntimeCurve => runtime_trial(protocol, protocol.sizes[g], seed),
        ProtocolId::ErrorVsSamples => estimation_trial(protocol, protocol.sample_sizes[g], 1.0, seed),
        ProtocolId::ErrorVsNoiseScale => estimation_trial(protocol, protocol.n, protocol.scale_ratios[g], seed),
        ProtocolId::Misspecification => estimation_trial(protocol, protocol.sample_sizes[g], 1.0, seed),
        ProtocolId::RandomGraphFrobenius => random_graph_trial(protocol, protocol.sample_sizes[g], seed),
    }
}

/// Draws graphs until one has an edge between observed nodes and returns it
/// with a uniformly chosen such edge.
fn graph_with_observed_edge(p_o: usize, p_l: usize, prob: f64, seed: u64) -> Result<(CanonicalDag, (NodeId, NodeId))> {
    let mut rng = rng_from_seed(seed);
    for _ in 0..1000 {
        let dag = random_canonical_dag(p_o, p_l, prob, rng.next_u64()).map_err(|e| CliError::Input(e.to_string()))?;
        let edges: Vec<_> = dag
            .edges()
            .filter(|&(a, b)| dag.is_observed(a) && dag.is_observed(b))
            .collect();
        if let Some(&e) = edges.choose(&mut rng) {
            return Ok((dag, e));
        }
    }
    Err(CliError::Input(format!(
        "no graph with an observed edge in 1000 draws at edge probability {prob}"
    )))
}

fn identifiability_trial(protocol: &BenchProtocol, prob: f64, seed: u64) -> Result<Metrics> {
    let (p_o, p_l) = protocol.split(protocol.p);
    let start = Instant::now();
    let (dag, (j, i)) = graph_with_observed_edge(p_o, p_l, prob, seed)?;
    let certifier = Certifier::new(&dag);
    let mut out = Vec::new();
    for (kind, setting, name) in [
        (EffectKind::Tce, Setting::Known, "tce_known"),
        (EffectKind::Tce, Setting::Unknown, "tce_unknown"),
        (EffectKind::Dce, Setting::Known, "dce_known"),
        (EffectKind::Dce, Setting::Unknown, "dce_unknown"),
    ] {
        let v = certifier
            .certify(&IdQuery::pair(kind, j, i, setting))
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        out.push((name.to_string(), f64::from(u8::from(v.identifiable)), 0.0));
    }
    let secs = start.elapsed().as_secs_f64();
    out.iter_mut().for_each(|m| m.2 = secs);
    Ok(out)
}

/// Times one known-graph total-effect certification, including the
/// certifier's setup, on a fresh graph.
fn runtime_trial(protocol: &BenchProtocol, p: usize, seed: u64) -> Result<Metrics> {
    let (p_o, p_l) = protocol.split(p);
    let (dag, (j, i)) = graph_with_observed_edge(p_o, p_l, protocol.edge_probs[0], seed)?;
    let start = Instant::now();
    let v = Certifier::new(&dag)
        .tce_known(j, i)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let secs = start.elapsed().as_secs_f64();
    Ok(vec![
        ("certify_seconds".into(), secs, secs),
        ("identifiable".into(), f64::from(u8::from(v.identifiable)), secs),
    ])
}

fn estimation_trial(protocol: &BenchProtocol, n: usize, ratio: f64, seed: u64) -> Result<Metrics> {
    let dag = protocol.library_graph()?;
    let (lo, hi) = protocol.weight_range();
    let truth = sample_weights_in(&dag, lo, hi, seed);
    let target = (resolve(&dag, &protocol.target.0)?, resolve(&dag, &protocol.target.1)?);
    let mut noise = NoiseSpec::new(protocol.noise);
    if protocol.protocol == ProtocolId::ErrorVsNoiseScale {
        for (node, exponent) in &protocol.scaled {
            noise = noise.with_scale(resolve(&dag, node)?, ratio.powf(*exponent));
        }
    }
    let data_seed = seed.wrapping_add(1);
    let data = if protocol.protocol == ProtocolId::Misspecification {
        simulate_misspecified(&truth, &noise, target, n, data_seed)
    } else {
        simulate_linear(&truth, &noise, n, data_seed)
    }
    .map_err(|e| CliError::Input(e.to_string()))?;
    let config = EstimatorConfig {
        seed,
        ..protocol.estimator.clone()
    };
    let start = Instant::now();
    let report = estimate(&dag, &data, &config).map_err(|e| CliError::Runtime(e.to_string()))?;
    let secs = start.elapsed().as_secs_f64();
    let true_b = build_mixing(&truth);
    let rel = |est: f64, t: f64| relative_error(est, t).unwrap_or(f64::NAN);
    Ok(vec![
        (
            "rel_error_direct".into(),
            rel(
                report.model.weight(target.0, target.1),
                truth.weight(target.0, target.1),
            ),
            secs,
        ),
        (
            "rel_error_total".into(),
            rel(
                report.mixing.total_effect(target.0, target.1),
                true_b.total_effect(target.0, target.1),
            ),
            secs,
        ),
        (
            "frobenius".into(),
            normalized_frobenius(&report.mixing.matrix, &true_b.matrix).unwrap_or(f64::NAN),
            secs,
        ),
    ])
}

fn random_graph_trial(protocol: &BenchProtocol, n: usize, seed: u64) -> Result<Metrics> {
    let (p_o, p_l) = protocol.random_graph;
    let dag =
        random_canonical_dag(p_o, p_l, protocol.edge_probs[0], seed).map_err(|e| CliError::Input(e.to_string()))?;
    let (lo, hi) = protocol.weight_range();
    let truth = sample_weights_in(&dag, lo, hi, seed);
    let data = simulate_linear(&truth, &NoiseSpec::new(protocol.noise), n, seed.wrapping_add(1))
        .map_err(|e| CliError::Input(e.to_string()))?;
    let config = EstimatorConfig {
        seed,
        ..protocol.estimator.clone()
    };
    let start = Instant::now();
    let report = estimate(&dag, &data, &config).map_err(|e| CliError::Runtime(e.to_string()))?;
    let secs = start.elapsed().as_secs_f64();
    let frob = normalized_frobenius(&report.mixing.matrix, &build_mixing(&truth).matrix).unwrap_or(f64::NAN);
    Ok(vec![("frobenius".into(), frob, secs)])
}
