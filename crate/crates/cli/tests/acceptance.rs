//! Release acceptance suite. Runs every criterion, prints one line each and
//! fails when a criterion outside `EXPECTED_FAILURES` fails. Set
//! `ACCEPTANCE_STRICT=1` to make every failure fatal. Positional arguments
//! select criteria by number.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use lingam_id::certify::{Certifier, EffectKind, IdQuery, Setting};
use lingam_id::graph::library;
use lingam_id::grica::{gradient, objective, Contrast};
use lingam_id::oracle::{
    cross_check, dense_total_effects, enumerate_canonical_dags, generic_draws, gessel_viennot_2x2,
    path_sum_total_effect, swapped_adjacency_check, OracleConfig,
};
use lingam_id::sem::{random_canonical_dag, random_general_model, sample_weights_in, simulate_linear, NoiseSpec};
use lingam_id::{CanonicalDag, WeightedModel};
use lingam_id_cli::bench::{run_collect, BenchProtocol, ProtocolId, Record};

/// Criteria that fail for reasons documented in the README's
/// "Known deviations" section.
const EXPECTED_FAILURES: &[u32] = &[4, 10];

type Criterion = (u32, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let criteria: [Criterion; 11] = [
        (1, "IV verdict table", iv_table),
        (2, "worked-example verdicts", worked_examples),
        (3, "certify equals brute-force oracle", oracle_equivalence),
        (4, "known-graph identifiability on random graphs", identifiability_curve),
        (5, "certify runtime at p = 1000 and growth", runtime),
        (6, "path-sum and two-path minor identities", identities),
        (7, "swapped adjacency check", swapped_adjacency),
        (8, "analytic gradient vs finite differences", gradient_check),
        (9, "estimator recovery on G1 and IV", recovery),
        (10, "misspecification robustness", misspecification),
        (11, "CLI determinism", determinism),
    ];
    let mut unexpected = 0;
    for (id, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let secs = start.elapsed().as_secs_f64();
        let tag = match (o.pass, EXPECTED_FAILURES.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {id:>2} {tag:<12} {name}: {} [{secs:.1}s]", o.detail);
        if !o.pass && (strict || !EXPECTED_FAILURES.contains(&id)) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn verdict(dag: &CanonicalDag, kind: EffectKind, j: &str, i: &str, setting: Setting) -> bool {
    let q = IdQuery::pair(kind, dag.resolve(j).unwrap(), dag.resolve(i).unwrap(), setting);
    Certifier::new(dag).certify(&q).unwrap().identifiable
}

fn iv_table() -> Outcome {
    let iv = library::iv();
    let cells = [
        (EffectKind::Tce, Setting::Known),
        (EffectKind::Dce, Setting::Known),
        (EffectKind::Tce, Setting::Unknown),
        (EffectKind::Dce, Setting::Unknown),
    ];
    let expected = [
        ("I", "T", [true, true, true, true]),
        ("I", "Y", [true, true, true, false]),
        ("T", "Y", [true, true, false, false]),
    ];
    let mut matches = 0;
    for (j, i, row) in expected {
        for (&(kind, setting), want) in cells.iter().zip(row) {
            matches += usize::from(verdict(&iv, kind, j, i, setting) == want);
        }
    }
    let reps = 200;
    let start = Instant::now();
    for _ in 0..reps {
        for (j, i, _) in expected {
            for &(kind, setting) in &cells {
                std::hint::black_box(verdict(&iv, kind, j, i, setting));
            }
        }
    }
    let per_query_ms = start.elapsed().as_secs_f64() * 1e3 / (reps * 12) as f64;
    outcome(
        matches == 12 && per_query_ms < 1.0,
        format!("{matches}/12 verdicts match, {per_query_ms:.4} ms per query"),
    )
}

fn worked_examples() -> Outcome {
    let mut wrong = Vec::new();
    let mut check = |dag: &CanonicalDag, graph: &str, kinds: &[EffectKind], j: &str, i: &str, want: bool| {
        for &kind in kinds {
            if verdict(dag, kind, j, i, Setting::Known) != want {
                wrong.push(format!("{graph} {kind} {j}->{i}"));
            }
        }
    };
    let tce = [EffectKind::Tce];
    let both = [EffectKind::Tce, EffectKind::Dce];
    let proxy = library::proxy();
    check(&proxy, "proxy", &tce, "T", "Y", true);
    check(&proxy, "proxy", &both, "W", "T", false);
    check(&proxy, "proxy", &both, "W", "Y", false);
    let long = library::longitudinal_confounded();
    for (j, i) in [("T1", "T2"), ("T1", "Y1"), ("T2", "Y2")] {
        check(&long, "longitudinal", &both, j, i, true);
    }
    for (j, i) in [
        ("C1", "C2"),
        ("C1", "T1"),
        ("C1", "T2"),
        ("C2", "T2"),
        ("C1", "Y1"),
        ("C1", "Y2"),
        ("C2", "Y2"),
    ] {
        check(&long, "longitudinal", &both, j, i, false);
    }
    let uiv = library::underspecified_iv();
    check(&uiv, "underspecified_iv", &tce, "T1", "Y", true);
    check(&uiv, "underspecified_iv", &tce, "T2", "Y", true);
    outcome(
        wrong.is_empty(),
        if wrong.is_empty() {
            "proxy, time-varying confounder and underspecified IV verdicts match".to_owned()
        } else {
            format!("mismatches: {}", wrong.join(", "))
        },
    )
}

fn oracle_equivalence() -> Outcome {
    let config = OracleConfig::default();
    let mut graphs = 0;
    let mut queries = 0;
    let mut bad = Vec::new();
    let record = |dag: &CanonicalDag, config: &OracleConfig, bad: &mut Vec<String>| {
        let (n, dis) = cross_check(dag, config).unwrap();
        for d in dis {
            bad.push(format!("{:?} {:?}", dag.edges().collect::<Vec<_>>(), d.query));
        }
        n
    };
    for p_o in 1..=4 {
        for p_l in 0..=2 {
            if p_l > 0 && p_o < 2 {
                continue;
            }
            for dag in enumerate_canonical_dags(p_o, p_l) {
                graphs += 1;
                queries += record(&dag, &config, &mut bad);
            }
        }
    }
    let exhaustive = graphs;
    for seed in 0..200u64 {
        let p = 4 + (seed % 7) as usize;
        let p_l = (1 + (seed / 7 % 3) as usize).min(p / 2);
        let prob = [0.3, 0.5, 0.7][(seed / 21 % 3) as usize];
        let dag = random_canonical_dag(p - p_l, p_l, prob, 7000 + seed).unwrap();
        let config = OracleConfig { seed, ..config };
        graphs += 1;
        queries += record(&dag, &config, &mut bad);
    }
    for b in bad.iter().take(10) {
        eprintln!("disagreement: {b}");
    }
    outcome(
        bad.is_empty(),
        format!(
            "{exhaustive} enumerated + {} random graphs, {queries} queries, {} disagreements",
            graphs - exhaustive,
            bad.len()
        ),
    )
}

fn medians_by_grid(records: &[Record], metric: &str) -> Vec<(String, f64)> {
    let key = format!("median_{metric}");
    records
        .iter()
        .filter(|r| r.trial == "all" && r.metric == key)
        .map(|r| (r.grid_value.clone(), r.value))
        .collect()
}

fn means_by_grid(records: &[Record], metric: &str) -> Vec<(String, f64)> {
    let key = format!("mean_{metric}");
    records
        .iter()
        .filter(|r| r.trial == "all" && r.metric == key)
        .map(|r| (r.grid_value.clone(), r.value))
        .collect()
}

fn identifiability_curve() -> Outcome {
    let protocol = BenchProtocol::new(ProtocolId::IdentifiabilityCurve);
    let start = Instant::now();
    let records = run_collect(&protocol, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let known: Vec<_> = means_by_grid(&records, "tce_known")
        .into_iter()
        .zip(means_by_grid(&records, "dce_known"))
        .map(|((g, t), (_, d))| (g, t.min(d)))
        .collect();
    let unknown = means_by_grid(&records, "tce_unknown");
    let min_known = known.iter().map(|k| k.1).fold(1.0, f64::min);
    let all_known = known.iter().all(|k| k.1 == 1.0);
    let some_unknown = unknown.iter().any(|u| u.1 < 1.0);
    let fmt = |v: &[(String, f64)]| v.iter().map(|(_, x)| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    outcome(
        all_known && some_unknown && secs < 120.0,
        format!(
            "known fraction per grid point [{}] (min {min_known:.3}), unknown TCE [{}], {secs:.1}s",
            fmt(&known),
            fmt(&unknown)
        ),
    )
}

fn runtime() -> Outcome {
    let mut protocol = BenchProtocol::new(ProtocolId::RuntimeCurve);
    protocol.trials = 5;
    protocol.edge_probs = vec![0.5];
    let records = run_collect(&protocol, Some(1)).unwrap();
    let t = medians_by_grid(&records, "certify_seconds");
    let max_1000 = records
        .iter()
        .filter(|r| r.grid_value == "1000" && r.metric == "certify_seconds" && r.trial != "all")
        .map(|r| r.value)
        .fold(0.0, f64::max);
    let mut growth_ok = true;
    for w in t.windows(2) {
        let (p0, p1): (f64, f64) = (w[0].0.parse().unwrap(), w[1].0.parse().unwrap());
        let ratio = w[1].1 / w[0].1;
        growth_ok &= ratio <= 2.0 * (p1 / p0).powi(3);
    }
    let curve = t
        .iter()
        .map(|(p, s)| format!("p={p}: {:.3}ms", s * 1e3))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        max_1000 <= 10.0 && growth_ok,
        format!("slowest p=1000 call {:.3}ms; medians {curve}", max_1000 * 1e3),
    )
}

fn identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let p = 2 + (seed % 9) as usize;
        let p_l = ((seed / 9 % 3) as usize).min(p - 1);
        let model = random_general_model(p - p_l, p_l, 0.5, 3000 + seed).unwrap();
        let total = dense_total_effects(&model);
        for j in 0..p {
            for i in 0..p {
                let paths = path_sum_total_effect(&model, j, i).unwrap();
                worst = worst.max((paths - total[(i, j)]).abs());
            }
        }
    }
    let mut minors = 0;
    let mut worst_minor: f64 = 0.0;
    for seed in 0..50u64 {
        let p = 3 + (seed % 4) as usize;
        let model = random_general_model(p - 1, 1, 0.6, 4000 + seed).unwrap();
        for a0 in 0..p {
            for a1 in a0 + 1..p {
                for b0 in 0..p {
                    for b1 in b0 + 1..p {
                        let (minor, systems) = gessel_viennot_2x2(&model, [a0, a1], [b0, b1], 12).unwrap();
                        worst_minor = worst_minor.max((minor - systems).abs());
                        minors += 1;
                    }
                }
            }
        }
    }
    outcome(
        worst < 1e-10 && worst_minor < 1e-10,
        format!("path sums max error {worst:.1e} on 100 models; {minors} minors max error {worst_minor:.1e}"),
    )
}

fn swapped_adjacency() -> Outcome {
    let mut qualifying = 0;
    let mut failed = 0;
    for seed in 0..100u64 {
        let p = 3 + (seed % 6) as usize;
        let p_l = (1 + (seed / 6 % 2) as usize).min(p / 2);
        let dag = random_canonical_dag(p - p_l, p_l, 0.5, 5000 + seed).unwrap();
        let models = generic_draws(
            &dag,
            &OracleConfig {
                seed,
                ..OracleConfig::default()
            },
        );
        for l in dag.latent() {
            let de_l = dag.observed_descendants(l).unwrap();
            for j in dag.observed() {
                if dag.observed_descendants(j).unwrap() != de_l {
                    continue;
                }
                qualifying += 1;
                failed += models
                    .iter()
                    .filter(|m| !swapped_adjacency_check(m, j, l, 1e-8).unwrap())
                    .count();
            }
        }
    }
    outcome(
        failed == 0 && qualifying > 0,
        format!("{qualifying} qualifying pairs x 5 draws, {failed} failures"),
    )
}

fn gradient_check() -> Outcome {
    let c = Contrast::default();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let p = 3 + (seed % 6) as usize;
        let p_l = 1 + (seed % 2) as usize;
        let dag = random_canonical_dag(p - p_l, p_l, 0.5, 6000 + seed).unwrap();
        let m = sample_weights_in(&dag, 0.0, 1.0, seed);
        let data = simulate_linear(&m, &NoiseSpec::laplace(), 100, seed).unwrap();
        let g = gradient(&m, &data, c).unwrap();
        let free = m.free_weights();
        let h = 1e-5;
        for k in 0..free.len() {
            let at = |d: f64| {
                let mut w = free.clone();
                w[k] += d;
                objective(&WeightedModel::from_free_weights(dag.clone(), &w).unwrap(), &data, c).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            worst = worst.max((g[k] - fd).abs() / fd.abs());
        }
    }
    outcome(
        worst < 1e-5,
        format!("max relative error {worst:.2e} over 20 instances"),
    )
}

/// Median relative error of the T -> Y effect at each sample size.
fn error_curve(protocol: ProtocolId, graph: &str, sizes: &[usize]) -> Vec<(String, f64)> {
    let mut p = BenchProtocol::new(protocol);
    p.graph = graph.into();
    p.sample_sizes = sizes.to_vec();
    p.trials = 10;
    let records = run_collect(&p, None).unwrap();
    medians_by_grid(&records, "rel_error_total")
}

fn recovery() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for graph in ["g1", "iv"] {
        let curve = error_curve(ProtocolId::ErrorVsSamples, graph, &[500, 50_000]);
        let (small, large) = (curve[0].1, curve[1].1);
        pass &= large < 0.10 && large < small;
        parts.push(format!("{graph}: median {small:.4} at n=500, {large:.4} at n=50000"));
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 600.0;
    outcome(pass, parts.join("; "))
}

fn misspecification() -> Outcome {
    let curve = error_curve(ProtocolId::Misspecification, "g1", &[1000, 50_000]);
    let (small, large) = (curve[0].1, curve[1].1);
    outcome(
        large < 0.25 && large < small,
        format!("median {small:.4} at n=1000, {large:.4} at n=50000"),
    )
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_lingam-id"));
    c.env("RUST_LOG", "error");
    c
}

fn run_to(args: &[&str], out: &Path) -> Result<Vec<u8>, String> {
    let status = bin()
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .map_err(|e| e.to_string())?;
    if !status.success() {
        return Err(format!("{args:?} exited with {status}"));
    }
    std::fs::read(out).map_err(|e| e.to_string())
}

fn run_stdout(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited with {}", out.status));
    }
    Ok(out.stdout)
}

fn without_seconds(csv: &[u8]) -> Vec<u8> {
    String::from_utf8_lossy(csv)
        .lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_owned() + "\n")
        .collect::<String>()
        .into_bytes()
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("lingam-id-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = |name: &str| -> PathBuf { dir.join(name) };
    let graph = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/graphs/g1.json");
    let graph = graph.to_str().unwrap();
    let (model, data) = (path("model.json"), path("data.csv"));
    let (m, d) = (model.to_str().unwrap().to_owned(), data.to_str().unwrap().to_owned());

    type Step<'a> = (&'a str, Box<dyn Fn(&str) -> Result<Vec<u8>, String> + 'a>);
    let steps: Vec<Step> = vec![
        (
            "certify",
            Box::new(|_| {
                run_stdout(&[
                    "certify", graph, "--kind", "tce", "--source", "T", "--target", "Y", "--oracle",
                ])
            }),
        ),
        (
            "generate",
            Box::new(|suffix| {
                let out = run_to(
                    &["generate", "--po", "6", "--pl", "2", "--seed", "9"],
                    &path(&format!("gen{suffix}")),
                )?;
                std::fs::write(&model, &out).map_err(|e| e.to_string())?;
                Ok(out)
            }),
        ),
        (
            "simulate",
            Box::new(|suffix| {
                let out = run_to(
                    &["simulate", "--model", &m, "--n", "400", "--seed", "9"],
                    &path(&format!("sim{suffix}")),
                )?;
                std::fs::write(&data, &out).map_err(|e| e.to_string())?;
                Ok(out)
            }),
        ),
        (
            "estimate",
            Box::new(|suffix| {
                run_to(
                    &[
                        "estimate",
                        "--graph",
                        &m,
                        "--data",
                        &d,
                        "--restarts",
                        "3",
                        "--seed",
                        "9",
                        "--max-iter",
                        "200",
                    ],
                    &path(&format!("est{suffix}")),
                )
            }),
        ),
        (
            "bench",
            Box::new(|suffix| {
                run_to(
                    &[
                        "bench",
                        "--protocol",
                        "identifiability_curve",
                        "--trials",
                        "50",
                        "--seed",
                        "9",
                    ],
                    &path(&format!("bench{suffix}")),
                )
                .map(|b| without_seconds(&b))
            }),
        ),
    ];
    let mut differing = Vec::new();
    for (name, step) in &steps {
        match (step("a"), step("b")) {
            (Ok(a), Ok(b)) if a == b && !a.is_empty() => {}
            (Ok(_), Ok(_)) => differing.push(format!("{name} differs")),
            (Err(e), _) | (_, Err(e)) => differing.push(format!("{name}: {e}")),
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            "certify, generate, simulate, estimate and bench outputs identical on rerun".to_owned()
        } else {
            differing.join("; ")
        },
    )
}
