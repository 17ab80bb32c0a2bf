use std::path::Path;

use lingam_id::certify::{Certifier, EffectKind, IdQuery};
use lingam_id::grica::{estimate, Contrast, EstimatorConfig, ObjectiveForm, Optimizer, Quadrature};
use lingam_id::oracle::{bruteforce_identifiable, OracleConfig, OracleError};
use lingam_id::sem::{
    random_canonical_dag, sample_weights_in, simulate_linear, simulate_misspecified, Dataset, NoiseSpec,
};
use serde_json::json;

use crate::args::{CertifyArgs, EstimateArgs, FormArg, GenerateArgs, NoiseArg, OptimizerArg, SimulateArgs};
use crate::{input, load_graph, load_model, read_file, write_output, CliError, Result};

pub fn certify(args: &CertifyArgs) -> Result<String> {
    let graph = load_graph(&args.graph)?;
    let kind = EffectKind::from(args.kind);
    let query = if kind == EffectKind::Matrix {
        IdQuery::matrix(args.setting.into())
    } else {
        let (Some(source), Some(target)) = (&args.source, &args.target) else {
            return Err(CliError::Input(format!("--kind {kind} needs --source and --target")));
        };
        IdQuery::pair(
            kind,
            graph.resolve(source)?,
            graph.resolve(target)?,
            args.setting.into(),
        )
    };
    let dag = &graph.dag;
    let verdict = Certifier::new(dag).certify(&query).map_err(input("query"))?;
    let mut doc = verdict.to_json(dag);
    if args.oracle {
        let config = OracleConfig {
            cap: args.cap,
            seed: args.seed,
            ..OracleConfig::default()
        };
        let oracle = bruteforce_identifiable(dag, &query, &config).map_err(|e| match e {
            OracleError::GraphTooLargeForEnumeration { .. } => CliError::OracleCap(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        })?;
        doc["oracle"] = json!({
            "identifiable": oracle.identifiable,
            "structurally_zero": oracle.structurally_zero,
            "counterexample": oracle.counterexample.map(|c| c.to_string()),
            "permutations_checked": oracle.permutations_checked,
        });
        doc["agree"] = json!(oracle.identifiable == verdict.identifiable);
    }
    Ok(pretty(&doc))
}

pub fn generate(args: &GenerateArgs) -> Result<String> {
    if !(args.prob > 0.0 && args.prob <= 1.0) {
        return Err(CliError::Input(format!("--prob must lie in (0, 1], got {}", args.prob)));
    }
    if !(0.0 <= args.lo && args.lo <= args.hi && args.hi.is_finite()) {
        return Err(CliError::Input(format!(
            "need 0 <= --lo <= --hi, got {} and {}",
            args.lo, args.hi
        )));
    }
    let dag = random_canonical_dag(args.po, args.pl, args.prob, args.seed).map_err(input("generate"))?;
    let model = sample_weights_in(&dag, args.lo, args.hi, args.seed);
    Ok(model.to_json_string() + "\n")
}

pub fn simulate(args: &SimulateArgs) -> Result<String> {
    let model = load_model(&args.model)?;
    let dag = model.dag();
    let mut noise = match args.noise {
        NoiseArg::Laplace => NoiseSpec::laplace(),
        NoiseArg::Exponential => NoiseSpec::exponential(),
        NoiseArg::Uniform => NoiseSpec::uniform(),
    };
    for spec in &args.scales {
        let (node, factor) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("--scale expects NODE=FACTOR, got {spec:?}")))?;
        let node = dag.resolve(node.trim()).map_err(input("--scale"))?;
        let factor: f64 = factor.trim().parse().map_err(input("--scale"))?;
        noise = noise.with_scale(node, factor);
    }
    let data = match &args.tanh_target {
        None => simulate_linear(&model, &noise, args.n, args.seed),
        Some(edge) => {
            let (from, to) = edge
                .split_once(':')
                .ok_or_else(|| CliError::Input(format!("--tanh-target expects FROM:TO, got {edge:?}")))?;
            let from = dag.resolve(from.trim()).map_err(input("--tanh-target"))?;
            let to = dag.resolve(to.trim()).map_err(input("--tanh-target"))?;
            simulate_misspecified(&model, &noise, (from, to), args.n, args.seed)
        }
    }
    .map_err(input("simulate"))?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
    String::from_utf8(buf).map_err(|e| CliError::Runtime(e.to_string()))
}

/// Parses TOML, or JSON when the file name ends in `.json`.
pub fn parse_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_file(path)?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(input(path.display()))
    } else {
        toml::from_str(&text).map_err(input(path.display()))
    }
}

pub fn estimator_config(args: &EstimateArgs) -> Result<EstimatorConfig> {
    let mut config: EstimatorConfig = match &args.config {
        Some(path) => parse_config(path)?,
        None => EstimatorConfig::default(),
    };
    if let Some(r) = args.restarts {
        config.restarts = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(form) = args.form {
        config.form = match form {
            FormArg::Marginal => ObjectiveForm::Marginal(Quadrature::default()),
            FormArg::Transpose => ObjectiveForm::Transpose,
        };
    }
    if let Some(opt) = args.optimizer {
        config.optimizer = match opt {
            OptimizerArg::Lbfgs => Optimizer::default(),
            OptimizerArg::Adam => Optimizer::Adam { step: 0.01 },
        };
    }
    if let Some(step) = args.step {
        match &mut config.optimizer {
            Optimizer::Lbfgs { step: s, .. } | Optimizer::Adam { step: s } => *s = step,
        }
    }
    if let Some(m) = args.max_iter {
        config.max_iter = m;
    }
    if let Some(t) = args.tol {
        config.tol = t;
    }
    if let Some(beta) = args.beta {
        config.contrast = Contrast::SmoothL1 { beta };
    }
    if args.standardize {
        config.standardize = true;
    }
    config.check().map_err(input("estimator configuration"))?;
    Ok(config)
}

pub fn estimate_cmd(args: &EstimateArgs) -> Result<String> {
    let config = estimator_config(args)?;
    let graph = load_graph(&args.graph)?;
    let file = std::fs::File::open(&args.data).map_err(input(args.data.display()))?;
    let mut data = Dataset::read_csv(file).map_err(input(args.data.display()))?;
    // Column headers name nodes of the input graph.
    for c in data.columns.iter_mut() {
        *c = graph
            .log
            .id_map
            .get(*c)
            .copied()
            .flatten()
            .ok_or_else(|| CliError::Input(format!("data column {c} is not a node of the graph")))?;
    }
    let report = estimate(&graph.dag, &data, &config).map_err(|e| match e {
        lingam_id::grica::GricaError::DimensionMismatch(_) | lingam_id::grica::GricaError::InvalidConfig(_) => {
            CliError::Input(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    })?;
    Ok(report.to_json_string() + "\n")
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes") + "\n"
}

pub fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    write_output(out, text)
}
