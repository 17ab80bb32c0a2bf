use lingam_id::oracle::{
    dense_total_effects, generic_draws, gessel_viennot_2x2, path_sum_total_effect, swapped_adjacency_check,
    OracleConfig,
};
use lingam_id::sem::{random_canonical_dag, random_general_model};

#[test]
fn path_sums_match_inverse() {
    for seed in 0..100u64 {
        let p = 2 + (seed % 9) as usize;
        let p_l = (seed / 9 % 3) as usize;
        let p_l = p_l.min(p - 1);
        let model = random_general_model(p - p_l, p_l, 0.5, seed).unwrap();
        let total = dense_total_effects(&model);
        for j in 0..p {
            for i in 0..p {
                let paths = path_sum_total_effect(&model, j, i).unwrap();
                assert!(
                    (paths - total[(i, j)]).abs() < 1e-10,
                    "seed {seed}: {j} -> {i}: {paths} vs {}",
                    total[(i, j)]
                );
            }
        }
    }
}

#[test]
fn two_path_minors_match_disjoint_systems() {
    let mut checked = 0;
    for seed in 0..50u64 {
        let p = 3 + (seed % 4) as usize;
        let model = random_general_model(p - 1, 1, 0.6, seed).unwrap();
        for a0 in 0..p {
            for a1 in a0 + 1..p {
                for b0 in 0..p {
                    for b1 in b0 + 1..p {
                        let (minor, signed) = gessel_viennot_2x2(&model, [a0, a1], [b0, b1], 12).unwrap();
                        assert!(
                            (minor - signed).abs() < 1e-10,
                            "seed {seed}: sources {a0},{a1} sinks {b0},{b1}"
                        );
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 1000);
}

#[test]
fn swapped_adjacency_matches_prediction() {
    let mut qualifying = 0;
    for seed in 0..100u64 {
        let p = 3 + (seed % 6) as usize;
        let p_l = 1 + (seed / 6 % 2) as usize;
        let p_l = p_l.min(p / 2);
        let dag = random_canonical_dag(p - p_l, p_l, 0.5, seed).unwrap();
        let config = OracleConfig {
            seed,
            ..OracleConfig::default()
        };
        let models = generic_draws(&dag, &config);
        for l in dag.latent() {
            let de_l = dag.observed_descendants(l).unwrap();
            for j in dag.observed() {
                if dag.observed_descendants(j).unwrap() != de_l {
                    continue;
                }
                qualifying += 1;
                for m in &models {
                    assert!(
                        swapped_adjacency_check(m, j, l, 1e-8).unwrap(),
                        "seed {seed}: j={j} l={l}"
                    );
                }
            }
        }
    }
    assert!(qualifying >= 50, "only {qualifying} qualifying pairs");
}
