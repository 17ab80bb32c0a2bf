use lingam_id::graph::library;
use lingam_id::oracle::{cross_check, enumerate_canonical_dags, OracleConfig};

#[test]
fn exhaustive_small_graphs_agree() {
    let config = OracleConfig::default();
    let mut graphs = 0;
    let mut queries = 0;
    let mut failures = Vec::new();
    for p_o in 1..=4 {
        for p_l in 0..=2 {
            if p_l > 0 && p_o < 2 {
                continue;
            }
            for dag in enumerate_canonical_dags(p_o, p_l) {
                graphs += 1;
                let (n, bad) = cross_check(&dag, &config).unwrap();
                queries += n;
                for d in bad {
                    failures.push(format!(
                        "{:?} {:?}: certify {} oracle {}",
                        dag.edges().collect::<Vec<_>>(),
                        d.query,
                        d.certified.identifiable,
                        d.oracle.identifiable
                    ));
                }
            }
        }
    }
    eprintln!("{graphs} graphs, {queries} queries, {} disagreements", failures.len());
    for f in failures.iter().take(20) {
        eprintln!("{f}");
    }
    assert!(failures.is_empty());
}

#[test]
fn shipped_graphs_agree() {
    for (name, _) in library::ALL {
        let dag = library::by_name(name).unwrap();
        let (_, bad) = cross_check(&dag, &OracleConfig::default()).unwrap();
        assert!(bad.is_empty(), "{name}: {bad:?}");
    }
}

fn random_sweep(count: u64, base_seed: u64) -> Vec<String> {
    use lingam_id::sem::random_canonical_dag;
    let mut failures = Vec::new();
    for t in 0..count {
        let seed = base_seed + t;
        let p = 4 + (seed % 7) as usize;
        let p_l = 1 + (seed / 7 % 3) as usize;
        let p_l = p_l.min(p / 2);
        let p_o = p - p_l;
        let prob = [0.3, 0.5, 0.7][(seed / 21 % 3) as usize];
        let dag = random_canonical_dag(p_o, p_l, prob, seed).unwrap();
        let config = OracleConfig {
            seed,
            ..OracleConfig::default()
        };
        let (_, bad) = cross_check(&dag, &config).unwrap();
        for d in bad {
            failures.push(format!(
                "seed {seed} {:?} {:?}: certify {} oracle {}",
                dag.edges().collect::<Vec<_>>(),
                d.query,
                d.certified.identifiable,
                d.oracle.identifiable
            ));
        }
    }
    failures
}

#[test]
fn random_graphs_agree() {
    let failures = random_sweep(200, 1000);
    for f in failures.iter().take(20) {
        eprintln!("{f}");
    }
    assert!(failures.is_empty(), "{} disagreements", failures.len());
}

#[test]
#[ignore = "long sweep"]
fn many_random_graphs_agree() {
    let failures = random_sweep(5000, 50_000);
    for f in failures.iter().take(40) {
        eprintln!("{f}");
    }
    assert!(failures.is_empty(), "{} disagreements", failures.len());
}
