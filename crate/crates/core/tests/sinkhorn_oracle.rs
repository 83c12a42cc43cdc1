//! Solver values checked against independent brute-force minimizers.

mod support;

use ndarray::Array2;
use sinkdiv::{
    make_grid, sinkhorn_solve, squared_euclidean_cost, CostMatrix, DiscreteMeasure, SolverConfig,
};

use support::{brute_force_divergence, random_interior_measure, rng};

#[test]
fn two_point_symmetric_case_matches_grid_oracle() {
    let a = [0.5, 0.5];
    let cost = ndarray::array![[0.0, 1.0], [1.0, 0.0]];
    let oracle = brute_force_divergence(&a, &a, &cost, 1.0);
    let e = std::f64::consts::E;
    let t_star = e / (2.0 * (1.0 + e));
    let exact =
        2.0 * (0.5 - t_star) + 2.0 * (t_star * t_star.ln() + (0.5 - t_star) * (0.5 - t_star).ln());
    assert!(
        (oracle - exact).abs() < 1e-9,
        "oracle {oracle} vs exact {exact}"
    );

    let am = DiscreteMeasure::new(a.to_vec()).unwrap();
    let cm = CostMatrix::new(cost, 1.0).unwrap();
    let sol = sinkhorn_solve(&am, &am, &cm, &SolverConfig::new(1.0)).unwrap();
    assert!((sol.dual - oracle).abs() < 1e-7);
}

#[test]
fn random_small_instances_match_brute_force() {
    let mut rng = rng(314, 0);
    let lambdas = [0.5, 1.0, 5.0];
    for instance in 0..12 {
        let n = if instance % 2 == 0 { 2 } else { 3 };
        let lambda = lambdas[instance % 3];
        let a = random_interior_measure(n, &mut rng);
        let b = random_interior_measure(n, &mut rng);
        let mut cost = Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let c = 2.0 * rand::Rng::random::<f64>(&mut rng);
                cost[[i, j]] = c;
                cost[[j, i]] = c;
            }
        }
        let oracle = brute_force_divergence(&a, &b, &cost, lambda);
        let am = DiscreteMeasure::new(a).unwrap();
        let bm = DiscreteMeasure::new(b).unwrap();
        let cm = CostMatrix::new(cost, 1.0).unwrap();
        let sol = sinkhorn_solve(&am, &bm, &cm, &SolverConfig::new(lambda)).unwrap();
        assert!(sol.converged, "instance {instance} did not converge");
        assert!(
            (sol.dual - oracle).abs() < 1e-5,
            "instance {instance}: solver {} vs oracle {oracle}",
            sol.dual
        );
    }
}

#[test]
fn loss_matches_three_oracle_terms() {
    let mut rng = rng(99, 1);
    let a = random_interior_measure(2, &mut rng);
    let b = random_interior_measure(2, &mut rng);
    let cost = ndarray::array![[0.0, 1.3], [1.3, 0.0]];
    let lambda = 1.0;
    let oracle_loss = 2.0 * brute_force_divergence(&a, &b, &cost, lambda)
        - brute_force_divergence(&a, &a, &cost, lambda)
        - brute_force_divergence(&b, &b, &cost, lambda);
    let am = DiscreteMeasure::new(a).unwrap();
    let bm = DiscreteMeasure::new(b).unwrap();
    let cm = CostMatrix::new(cost, 1.0).unwrap();
    let loss = sinkdiv::sinkhorn_loss(&am, &bm, &cm, &SolverConfig::new(lambda)).unwrap();
    assert!(
        (loss - oracle_loss).abs() < 1e-5,
        "loss {loss} vs oracle {oracle_loss}"
    );
}

#[test]
fn duality_gap_on_random_grid_pairs() {
    let space = make_grid(5, 2);
    let cost = squared_euclidean_cost(&space);
    let mut rng = rng(2718, 0);
    for trial in 0..20 {
        let lambda = [0.5, 1.0, 5.0][trial % 3];
        let a = DiscreteMeasure::new(random_interior_measure(25, &mut rng)).unwrap();
        let b = DiscreteMeasure::new(random_interior_measure(25, &mut rng)).unwrap();
        let sol = sinkhorn_solve(&a, &b, &cost, &SolverConfig::new(lambda)).unwrap();
        assert!(sol.converged);
        let gap = (sol.primal - sol.dual).abs();
        assert!(
            gap <= 1e-8 * (1.0 + sol.primal.abs()),
            "trial {trial}: gap {gap:.3e} at primal {}",
            sol.primal
        );
        assert!(sol.marginal_err <= 1e-9);
    }
}

#[test]
fn log_domain_handles_small_lambda_on_medium_grid() {
    // Costs up to 162 with lambda = 0.5: the kernel underflows entrywise in
    // parts of the matrix, the log-domain iteration must not care.
    let space = make_grid(10, 2);
    let cost = squared_euclidean_cost(&space);
    let a = sinkdiv::uniform_measure(100);
    let b = sinkdiv::linear_trend_measure(100, 0.5);
    let sol = sinkhorn_solve(&a, &b, &cost, &SolverConfig::new(0.5)).unwrap();
    assert!(sol.converged, "err {}", sol.marginal_err);
    assert!(sol.alpha.iter().all(|x| x.is_finite()));
    assert!(sol.beta.iter().all(|x| x.is_finite()));
}
