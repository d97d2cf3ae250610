mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use rerank_core::bcd::{
    bcd_solve, bcd_solve_with, DiffusionOperator, cg_solve, compute_objectives, fixed_point_solve, lyapunov_residual,
    WeightVector,
};
use rerank_core::config::{InnerSolver, PipelineConfig};
use rerank_core::matrix::DenseMatrix;

fn frozen_config(mu: f64) -> PipelineConfig {
    PipelineConfig {
        mu,
        lambda: Some(1.0),
        maxiter: 40,
        inner_iters: 200,
        inner_solver: InnerSolver::ConjugateGradient,
        delta: 1e-13,
        outer_tol: 1e-15,
        ..PipelineConfig::default()
    }
}

#[test]
fn frozen_weights_reach_kronecker_solution() {
    let mut rng = rng(11);
    for case in 0..50 {
        let n = rng.random_range(4..=8);
        let ens = random_ensemble(&mut rng, n, 2);
        assert!(ens.m() <= 3);
        let mu = rng.random_range(0.01..1.0);
        let w = WeightVector::new(random_simplex(&mut rng, ens.m()), mu).unwrap();
        let e = random_matrix(&mut rng, n);
        let out = bcd_solve_with(&ens, &frozen_config(mu), &e, Some(w.clone())).unwrap();
        assert_eq!(out.weights, w);
        let oracle = kronecker_solution(&ens, &w, &e);
        let err = max_abs_diff(&out.f, &oracle);
        assert!(err <= 1e-6, "case {case}: n={n} err={err:e}");
    }
}

#[test]
fn cg_and_fixed_point_agree() {
    let mut rng = rng(12);
    for _ in 0..5 {
        let n = rng.random_range(10..=25);
        let ens = random_ensemble(&mut rng, n, 4);
        let w = WeightVector::new(random_simplex(&mut rng, ens.m()), 0.0101).unwrap();
        let e = DenseMatrix::identity(n);
        let op = DiffusionOperator::new(&ens, &w).unwrap();
        let mut fp = e.clone();
        for _ in 0..10_000 {
            fp = op.step(&fp, &e);
        }
        let cg = cg_solve(&ens, &w, &e, &e, 1e-11, 2_000).unwrap();
        assert!(cg.converged);
        let err = max_abs_diff(&fp, &cg.f);
        assert!(err <= 1e-7, "max difference {err:e}");

        let fp8 = fixed_point_solve(&ens, &w, &e, &e, 1e-8, 100_000).unwrap();
        let cg8 = cg_solve(&ens, &w, &e, &e, 1e-8, 100_000).unwrap();
        assert!(fp8.converged && cg8.converged);
        assert!(
            cg8.iterations < fp8.iterations,
            "cg {} vs fixed point {}",
            cg8.iterations,
            fp8.iterations
        );
        assert!(lyapunov_residual(&cg8.f, &ens, &w, &e).unwrap() < 1e-8);
    }
}

#[test]
fn objective_never_increases() {
    let mut rng = rng(13);
    for run in 0..20 {
        let n = rng.random_range(10..=30);
        let ens = random_ensemble(&mut rng, n, 5);
        assert_eq!(ens.m(), 3);
        let e = DenseMatrix::identity(n);
        let out = bcd_solve(&ens, &PipelineConfig::default(), &e).unwrap();
        for (t, pair) in out.objective_trace.windows(2).enumerate() {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "run {run} step {t}: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }
}

#[test]
fn normalized_graphs_have_unit_spectral_radius() {
    let mut rng = rng(14);
    for _ in 0..100 {
        let n = rng.random_range(5..=40);
        let k = rng.random_range(2..=(n / 2).max(2));
        let ens = random_ensemble(&mut rng, n, k);
        for g in &ens.graphs {
            let rho = spectral_radius(&g.s_bar.to_dense());
            assert!(rho <= 1.0 + 1e-6, "radius {rho}");
            assert!(g.s.is_exactly_symmetric());
        }
    }
}

#[test]
fn gram_objectives_match_quadruple_sum() {
    let mut rng = rng(15);
    for _ in 0..20 {
        let n = rng.random_range(4..=12);
        let ens = random_ensemble(&mut rng, n, 3);
        let f = random_matrix(&mut rng, n);
        let e = random_matrix(&mut rng, n);
        let mu = rng.random_range(0.0..1.0);
        let fast = compute_objectives(&f, &ens, &e, mu).unwrap();
        let slow = brute_objectives(&f, &ens, &e, mu);
        for (a, b) in fast.h.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn learned_weights_stay_on_simplex(seed in any::<u64>(), n in 6usize..20) {
        let mut rng = rng(seed);
        let ens = random_ensemble(&mut rng, n, 3);
        let config = PipelineConfig { maxiter: 5, ..PipelineConfig::default() };
        let out = bcd_solve(&ens, &config, &DenseMatrix::identity(n)).unwrap();
        let beta = out.weights.beta();
        prop_assert!((beta.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(beta.iter().all(|&b| b >= 0.0));
        prop_assert!(out.f.all_finite());
    }

    #[test]
    fn symmetric_regularizer_gives_symmetric_similarity(seed in any::<u64>(), n in 4usize..16) {
        let mut rng = rng(seed);
        let ens = random_ensemble(&mut rng, n, 3);
        let out = bcd_solve(&ens, &PipelineConfig::default(), &DenseMatrix::identity(n)).unwrap();
        prop_assert!(out.f.max_asymmetry() <= 1e-12);
    }
}
