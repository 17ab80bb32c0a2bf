//! Graph-constrained contrast minimization: estimates the free edge weights
//! of a known canonical graph, and through them every causal effect, from
//! observational data.

mod contrast;
pub mod metrics;
mod objective;
mod optim;

use log::warn;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::mixing::{build_mixing, MixingMatrix};
pub use contrast::{log_cosh, Contrast};
pub use metrics::{compare, normalized_frobenius, relative_error, MetricReport};
pub use objective::{mixing_from_blocks, Layout, Objective, ObjectiveForm, Quadrature};
pub use optim::{minimize, OptimResult, Optimizer};

use crate::graph::{CanonicalDag, GraphError, NodeId};
use crate::model::{ModelJson, WeightedModel};
use crate::sem::Dataset;

#[derive(Debug, Error)]
pub enum GricaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("every restart produced a non-finite objective")]
    NonFiniteObjective,
    #[error("relative error is undefined for a zero true value")]
    ZeroTrueValue,
    #[error("invalid estimator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Literal transpose objective `(1/N) Σ_i Σ_c g((B′ᵀ x_i)_c)` on the data as
/// given.
pub fn objective(model: &WeightedModel, data: &Dataset, contrast: Contrast) -> Result<f64, GricaError> {
    let obj = Objective::new(model.dag(), data, contrast, ObjectiveForm::Transpose)?;
    Ok(obj.value(&model.free_weights()))
}

/// Gradient of [`objective`] with respect to the free edge weights, in
/// [`crate::model::free_edges`] order.
pub fn gradient(model: &WeightedModel, data: &Dataset, contrast: Contrast) -> Result<Vec<f64>, GricaError> {
    let obj = Objective::new(model.dag(), data, contrast, ObjectiveForm::Transpose)?;
    Ok(obj.value_and_gradient(&model.free_weights()).1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "init", rename_all = "snake_case")]
pub enum Init {
    Zeros,
    /// Independent uniform draws on `[−scale, scale]`.
    Random {
        scale: f64,
    },
    /// Start from given weights; free edges not listed start at zero.
    Warm {
        weights: Vec<(NodeId, NodeId, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub contrast: Contrast,
    pub form: ObjectiveForm,
    pub optimizer: Optimizer,
    pub max_iter: usize,
    /// Largest gradient component at convergence.
    pub tol: f64,
    pub restarts: usize,
    /// Initialization of the first restart.
    pub init: Init,
    /// Later restarts start from `Init::Random` at this scale.
    pub restart_scale: f64,
    /// Divide each centered column by its standard deviation before fitting
    /// and map the estimates back to the original scale.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            contrast: Contrast::default(),
            form: ObjectiveForm::default(),
            optimizer: Optimizer::default(),
            max_iter: 2000,
            tol: 1e-7,
            restarts: 5,
            init: Init::Zeros,
            restart_scale: 0.1,
            standardize: false,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn check(&self) -> Result<(), GricaError> {
        let bad = GricaError::InvalidConfig;
        self.contrast.check().map_err(bad)?;
        self.optimizer.check().map_err(bad)?;
        if let ObjectiveForm::Marginal(q) = &self.form {
            q.check().map_err(bad)?;
        }
        if self.restarts == 0 {
            return Err(bad("restarts must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(bad(format!("tolerance must be non-negative, got {}", self.tol)));
        }
        if !(self.restart_scale >= 0.0 && self.restart_scale.is_finite()) {
            return Err(bad(format!(
                "restart scale must be non-negative, got {}",
                self.restart_scale
            )));
        }
        if let Init::Random { scale } = self.init {
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(bad(format!("init scale must be non-negative, got {scale}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RestartRecord {
    pub init: Init,
    /// `None` for a diverged run.
    pub objective: Option<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingJson {
    pub rows: Vec<NodeId>,
    pub cols: Vec<NodeId>,
    pub matrix: Vec<Vec<f64>>,
}

impl From<&MixingMatrix> for MixingJson {
    fn from(b: &MixingMatrix) -> Self {
        Self {
            rows: b.rows().to_vec(),
            cols: b.cols().to_vec(),
            matrix: b.matrix.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub model: WeightedModel,
    pub mixing: MixingMatrix,
    pub restarts: Vec<RestartRecord>,
    pub chosen: usize,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    model: ModelJson,
    mixing: MixingJson,
    objective: Option<f64>,
    chosen: usize,
    restarts: &'a [RestartRecord],
}

impl EstimateReport {
    pub fn objective(&self) -> f64 {
        self.restarts[self.chosen].objective.expect("chosen restart is finite")
    }

    pub fn to_json_string(&self) -> String {
        let doc = ReportJson {
            model: self.model.to_json(),
            mixing: MixingJson::from(&self.mixing),
            objective: self.restarts[self.chosen].objective,
            chosen: self.chosen,
            restarts: &self.restarts,
        };
        serde_json::to_string_pretty(&doc).expect("report serializes")
    }
}

/// Fits the free edge weights of `dag` to `data` with `config.restarts`
/// independent runs and keeps the one with the lowest final objective.
/// Columns are centered first.
pub fn estimate(dag: &CanonicalDag, data: &Dataset, config: &EstimatorConfig) -> Result<EstimateReport, GricaError> {
    config.check()?;
    let layout = Layout::new(dag);
    let mut x = layout.align(data)?;
    if data.n() < dag.p() {
        return Err(GricaError::DimensionMismatch(format!(
            "{} samples for {} variables",
            data.n(),
            dag.p()
        )));
    }
    center(&mut x);
    let scales = if config.standardize {
        standardize(&mut x)
    } else {
        vec![1.0; layout.p_o()]
    };
    let mut row_of = vec![usize::MAX; dag.p()];
    for (r, &v) in layout.rows().iter().enumerate() {
        row_of[v] = r;
    }
    // Free weight on the standardized scale = factor × original weight.
    let factors: Vec<f64> = layout
        .edges()
        .iter()
        .map(|&(from, to)| {
            let anchor = if dag.is_latent(from) {
                dag.first_child(from).expect("canonical latent has children")
            } else {
                from
            };
            scales[row_of[anchor]] / scales[row_of[to]]
        })
        .collect();
    let edges = layout.edges().to_vec();
    let obj = Objective::from_aligned(layout, x, config.contrast, config.form);

    let inits: Vec<Init> = (0..config.restarts)
        .map(|k| {
            if k == 0 {
                config.init.clone()
            } else {
                Init::Random {
                    scale: config.restart_scale,
                }
            }
        })
        .collect();
    let runs: Vec<OptimResult> = inits
        .par_iter()
        .enumerate()
        .map(|(k, init)| {
            let x0 = start_point(init, &edges, config.seed, k as u64)
                .into_iter()
                .zip(&factors)
                .map(|(w, f)| w * f)
                .collect();
            minimize(
                |w| obj.value_and_gradient(w),
                x0,
                config.optimizer,
                config.max_iter,
                config.tol,
            )
        })
        .collect();

    let mut restarts = Vec::with_capacity(runs.len());
    let mut chosen: Option<usize> = None;
    for (k, (run, init)) in runs.iter().zip(inits).enumerate() {
        let finite = run.value.is_finite() && run.x.iter().all(|w| w.is_finite());
        if !finite {
            warn!("restart {k} diverged and is discarded");
        } else if chosen.is_none_or(|c| run.value < runs[c].value) {
            chosen = Some(k);
        }
        restarts.push(RestartRecord {
            init,
            objective: finite.then_some(run.value),
            iterations: run.iterations,
            grad_norm: run.grad_norm,
            converged: run.converged,
        });
    }
    let chosen = chosen.ok_or(GricaError::NonFiniteObjective)?;
    let free: Vec<f64> = runs[chosen].x.iter().zip(&factors).map(|(w, f)| w / f).collect();
    let model = WeightedModel::from_free_weights(dag.clone(), &free)?;
    let mixing = build_mixing(&model);
    Ok(EstimateReport {
        model,
        mixing,
        restarts,
        chosen,
    })
}

fn start_point(init: &Init, edges: &[(NodeId, NodeId)], seed: u64, restart: u64) -> Vec<f64> {
    match init {
        Init::Zeros => vec![0.0; edges.len()],
        Init::Random { scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(restart);
            edges.iter().map(|_| rng.random_range(-1.0..=1.0) * scale).collect()
        }
        Init::Warm { weights } => edges
            .iter()
            .map(|&(f, t)| {
                weights
                    .iter()
                    .find(|&&(a, b, _)| (a, b) == (f, t))
                    .map_or(0.0, |&(_, _, w)| w)
            })
            .collect(),
    }
}

fn center(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
}

fn standardize(x: &mut DMatrix<f64>) -> Vec<f64> {
    x.column_iter_mut()
        .map(|mut col| {
            let sd = (col.norm_squared() / col.len().max(1) as f64).sqrt();
            let sd = if sd > 0.0 { sd } else { 1.0 };
            col /= sd;
            sd
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{library, validate, LvDag};
    use crate::model::free_edges;
    use crate::sem::{sample_weights, simulate_linear, NoiseSpec};

    fn dataset(values: DMatrix<f64>, columns: Vec<NodeId>) -> Dataset {
        Dataset::new(values, columns).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_objective_and_gradient() {
        let m = sample_weights(&library::iv(), 1);
        let data = dataset(DMatrix::zeros(10, 3), vec![0, 1, 2]);
        assert_eq!(objective(&m, &data, Contrast::default()).unwrap(), 0.0);
        assert!(gradient(&m, &data, Contrast::default())
            .unwrap()
            .iter()
            .all(|&g| g == 0.0));
    }

    #[test]
    fn identity_model_sums_contrast() {
        let dag = validate(LvDag::with_counts(3, 0, []).unwrap()).unwrap();
        let m = WeightedModel::from_free_weights(dag, &[]).unwrap();
        let x = [0.4, -1.3, 2.0];
        let data = dataset(DMatrix::from_row_slice(1, 3, &x), vec![0, 1, 2]);
        let c = Contrast::default();
        let expected: f64 = x.iter().map(|&v| c.value(v)).sum();
        assert!((objective(&m, &data, c).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn mirrored_data_matches_doubled_point() {
        let m = sample_weights(&library::iv(), 2);
        let both = dataset(
            DMatrix::from_row_slice(2, 3, &[0.3, -0.8, 1.1, -0.3, 0.8, -1.1]),
            vec![0, 1, 2],
        );
        let twice = dataset(
            DMatrix::from_row_slice(2, 3, &[0.3, -0.8, 1.1, 0.3, -0.8, 1.1]),
            vec![0, 1, 2],
        );
        let c = Contrast::default();
        let a = gradient(&m, &both, c).unwrap();
        let b = gradient(&m, &twice, c).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-14);
        }
        assert!((objective(&m, &both, c).unwrap() - objective(&m, &twice, c).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn transpose_gradient_matches_finite_differences() {
        for seed in 0..5 {
            let dag = crate::sem::random_canonical_dag(5, 2, 0.5, seed).unwrap();
            let m = sample_weights(&dag, seed);
            let data = simulate_linear(&m, &NoiseSpec::laplace(), 100, seed).unwrap();
            let c = Contrast::default();
            let g = gradient(&m, &data, c).unwrap();
            let free = m.free_weights();
            for k in 0..free.len() {
                let h = 1e-5;
                let at = |d: f64| {
                    let mut w = free.clone();
                    w[k] += d;
                    objective(&WeightedModel::from_free_weights(dag.clone(), &w).unwrap(), &data, c).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                assert!((g[k] - fd).abs() <= 1e-5 * fd.abs().max(1e-3), "{} vs {fd}", g[k]);
            }
        }
    }

    #[test]
    fn parameter_count_is_free_edges() {
        for name in ["iv", "proxy", "g1", "g4", "longitudinal_confounded"] {
            let dag = library::by_name(name).unwrap();
            let layout = Layout::new(&dag);
            assert_eq!(layout.dim(), dag.n_edges() - dag.p_l());
            assert_eq!(layout.edges(), free_edges(&dag).as_slice());
        }
    }

    #[test]
    fn empty_graph_estimates_nothing() {
        let dag = validate(LvDag::with_counts(2, 0, []).unwrap()).unwrap();
        let m = WeightedModel::from_free_weights(dag.clone(), &[]).unwrap();
        let data = simulate_linear(&m, &NoiseSpec::laplace(), 300, 5).unwrap();
        let r = estimate(&dag, &data, &EstimatorConfig::default()).unwrap();
        assert!(r.model.free_weights().is_empty());
        let mut centered = data.clone();
        center(&mut centered.values);
        let expected = objective(&m, &centered, Contrast::default()).unwrap();
        assert!((r.objective() - expected).abs() < 1e-12);
    }

    #[test]
    fn recovers_latent_free_chain() {
        let dag = validate(LvDag::with_counts(3, 0, [(0, 1), (1, 2), (0, 2)]).unwrap()).unwrap();
        let truth = WeightedModel::from_free_weights(dag.clone(), &[0.8, -0.6, 0.7]).unwrap();
        let data = simulate_linear(&truth, &NoiseSpec::laplace(), 5000, 9).unwrap();
        let config = EstimatorConfig {
            restarts: 2,
            ..EstimatorConfig::default()
        };
        let r = estimate(&dag, &data, &config).unwrap();
        for (e, t) in r.model.free_weights().iter().zip(truth.free_weights()) {
            assert!((e - t).abs() < 0.05, "{e} vs {t}");
        }
    }

    #[test]
    fn recovers_proxy_effect_and_is_deterministic() {
        let dag = library::g1();
        let truth = crate::sem::sample_weights_in(&dag, 0.5, 1.0, 11);
        let data = simulate_linear(&truth, &NoiseSpec::laplace(), 4000, 11).unwrap();
        let config = EstimatorConfig {
            restarts: 2,
            seed: 3,
            ..EstimatorConfig::default()
        };
        let a = estimate(&dag, &data, &config).unwrap();
        let b = estimate(&dag, &data, &config).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());
        let (t, y) = (dag.resolve("T").unwrap(), dag.resolve("Y").unwrap());
        let err = relative_error(a.model.weight(t, y), truth.weight(t, y)).unwrap();
        assert!(err < 0.15, "relative error {err}");
        let best = a.objective();
        assert!(a.restarts.iter().filter_map(|r| r.objective).all(|o| best <= o));
    }

    #[test]
    fn standardization_maps_back() {
        let dag = library::g1();
        let truth = crate::sem::sample_weights_in(&dag, 0.5, 1.0, 2);
        let data = simulate_linear(&truth, &NoiseSpec::laplace(), 3000, 2).unwrap();
        let base = EstimatorConfig {
            restarts: 1,
            ..EstimatorConfig::default()
        };
        let plain = estimate(&dag, &data, &base).unwrap();
        let warm = Init::Warm {
            weights: plain.model.weights().iter().map(|(&(f, t), &w)| (f, t, w)).collect(),
        };
        let std = estimate(
            &dag,
            &data,
            &EstimatorConfig {
                standardize: true,
                init: warm,
                form: ObjectiveForm::Transpose,
                ..base.clone()
            },
        )
        .unwrap();
        // Start point is mapped onto the standardized scale and back.
        assert_eq!(std.model.dag(), plain.model.dag());
        assert!(std.model.free_weights().iter().all(|w| w.is_finite()));
    }

    #[test]
    fn warm_start_does_not_increase_objective() {
        let dag = library::iv();
        let truth = crate::sem::sample_weights_in(&dag, 0.5, 1.0, 6);
        let data = simulate_linear(&truth, &NoiseSpec::laplace(), 2000, 6).unwrap();
        let warm = Init::Warm {
            weights: truth.weights().iter().map(|(&(f, t), &w)| (f, t, w)).collect(),
        };
        let config = EstimatorConfig {
            restarts: 1,
            init: warm,
            ..EstimatorConfig::default()
        };
        let r = estimate(&dag, &data, &config).unwrap();
        let layout = Layout::new(&dag);
        let mut x = layout.align(&data).unwrap();
        center(&mut x);
        let start = Objective::from_aligned(layout, x, config.contrast, config.form).value(&truth.free_weights());
        assert!(r.objective() <= start);
    }

    #[test]
    fn rejects_bad_config_and_data() {
        let dag = library::iv();
        let m = sample_weights(&dag, 0);
        let data = simulate_linear(&m, &NoiseSpec::laplace(), 50, 0).unwrap();
        let zero = EstimatorConfig {
            restarts: 0,
            ..EstimatorConfig::default()
        };
        assert!(matches!(
            estimate(&dag, &data, &zero),
            Err(GricaError::InvalidConfig(_))
        ));
        let wrong = dataset(DMatrix::zeros(50, 2), vec![0, 1]);
        assert!(matches!(
            estimate(&dag, &wrong, &EstimatorConfig::default()),
            Err(GricaError::DimensionMismatch(_))
        ));
    }
}
