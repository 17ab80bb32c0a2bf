use lingam_id::grica::{gradient, objective, Contrast};
use lingam_id::sem::{random_canonical_dag, sample_weights_in, simulate_linear, NoiseSpec};
use lingam_id::WeightedModel;

/// Largest `|analytic − fd| / |fd|` over all free weights of 20 random
/// instances, with central differences at `h = 1e-5`.
fn worst_relative_error() -> f64 {
    let c = Contrast::default();
    let mut worst: f64 = 0.0;
    for seed in 0..20u64 {
        let p = 3 + (seed % 6) as usize;
        let p_l = 1 + (seed % 2) as usize;
        let dag = random_canonical_dag(p - p_l, p_l, 0.5, seed).unwrap();
        let m = sample_weights_in(&dag, 0.0, 1.0, seed);
        let data = simulate_linear(&m, &NoiseSpec::laplace(), 100, seed).unwrap();
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
            worst = worst.max((g[k] - fd).abs() / fd.abs());
        }
    }
    worst
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let worst = worst_relative_error();
    eprintln!("worst relative error {worst:e}");
    assert!(worst < 1e-5);
}
