//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::process::Command;
use std::time::Instant;

use common::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rerank_core::bcd::{
    bcd_solve, bcd_solve_with, cg_solve, fixed_point_solve, optimal_beta, DiffusionOperator,
    WeightVector,
};
use rerank_core::config::{InnerSolver, PipelineConfig};
use rerank_core::eval::{evaluate_rankings, generate_manifold, DEFAULT_NOISE};
use rerank_core::matrix::DenseMatrix;
use rerank_core::tmt::{exact_w1, min_transition_cost, sinkhorn_w1, SinkhornParams};
use rerank_core::{baseline_rankings, rerank, FeatureSet};

const KRONECKER_TOL: f64 = 1e-6;
const KRONECKER_SECONDS: f64 = 10.0;
const CG_MATCH_TOL: f64 = 1e-7;
const CG_TARGET_RESIDUAL: f64 = 1e-8;
const FIXED_POINT_STEPS: usize = 10_000;
const GRID_TOL: f64 = 2e-3;
const DESCENT_TOL: f64 = 1e-8;
const SIMPLEX_TOL: f64 = 1e-12;
const SINKHORN_REL_TOL: f64 = 0.02;
const SINKHORN_EPS_FRACTION: f64 = 1e-3;
const MONOTONE_SLACK: f64 = 1e-9;
const OBJECTIVE_SLACK: f64 = 1e-9;
const MAP_GAIN: f64 = 0.05;
const BASELINE_MAP_CEILING: f64 = 0.95;
const GENERATOR_SECONDS: f64 = 10.0;
const LARGE_SECONDS: f64 = 3.0;
const SPECTRAL_TOL: f64 = 1e-6;

type Verdict = (bool, String);
type Criterion = (&'static str, fn() -> Verdict);

fn c1_kronecker() -> Verdict {
    let mut rng = rng(101);
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(3..=8);
        let ens = random_ensemble(&mut rng, n, 2);
        let mu = rng.random_range(0.01..1.0);
        let w = WeightVector::new(random_simplex(&mut rng, ens.m()), mu).unwrap();
        let e = random_matrix(&mut rng, n);
        let config = PipelineConfig {
            mu,
            lambda: Some(1.0),
            maxiter: 40,
            inner_iters: 200,
            inner_solver: InnerSolver::ConjugateGradient,
            delta: 1e-13,
            outer_tol: 1e-15,
            ..PipelineConfig::default()
        };
        let out = bcd_solve_with(&ens, &config, &e, Some(w.clone())).unwrap();
        worst = worst.max(max_abs_diff(&out.f, &kronecker_solution(&ens, &w, &e)));
    }
    let secs = started.elapsed().as_secs_f64();
    (
        worst <= KRONECKER_TOL && secs < KRONECKER_SECONDS,
        format!("max |F - F_kron| = {worst:.2e} (tol {KRONECKER_TOL:e}), {secs:.2} s for 50 instances"),
    )
}

fn c2_cg() -> Verdict {
    let mut rng = rng(102);
    let mut worst: f64 = 0.0;
    let mut fewer = true;
    let mut counts = Vec::new();
    for _ in 0..5 {
        let n = rng.random_range(10..=30);
        let ens = random_ensemble(&mut rng, n, 4);
        let w = WeightVector::new(random_simplex(&mut rng, ens.m()), 0.0101).unwrap();
        let e = DenseMatrix::identity(n);
        let op = DiffusionOperator::new(&ens, &w).unwrap();
        let mut fp = e.clone();
        for _ in 0..FIXED_POINT_STEPS {
            fp = op.step(&fp, &e);
        }
        let cg = cg_solve(&ens, &w, &e, &e, 1e-11, 5_000).unwrap();
        worst = worst.max(max_abs_diff(&fp, &cg.f));
        let fp8 = fixed_point_solve(&ens, &w, &e, &e, CG_TARGET_RESIDUAL, 1_000_000).unwrap();
        let cg8 = cg_solve(&ens, &w, &e, &e, CG_TARGET_RESIDUAL, 1_000_000).unwrap();
        fewer &= fp8.converged && cg8.converged && cg8.iterations < fp8.iterations;
        counts.push(format!("{}<{}", cg8.iterations, fp8.iterations));
    }
    (
        worst <= CG_MATCH_TOL && fewer,
        format!(
            "max |F_cg - F_fp| = {worst:.2e} (tol {CG_MATCH_TOL:e}); iterations to {CG_TARGET_RESIDUAL:e} cg<fp: {}",
            counts.join(" ")
        ),
    )
}

fn c3_beta() -> Verdict {
    let mut rng = rng(103);
    let (mut grid_err, mut cd_err, mut simplex_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..200 {
        let m = rng.random_range(2..=4);
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let h: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.0) * scale).collect();
        let lambda = scale * 10f64.powf(rng.random_range(-1.5..1.5));
        let beta = optimal_beta(&h, lambda).unwrap();
        let grid = grid_beta(&h, lambda, 1000);
        let cd = coordinate_descent_beta(&h, lambda);
        for v in 0..m {
            grid_err = grid_err.max((beta[v] - grid[v]).abs());
            cd_err = cd_err.max((beta[v] - cd[v]).abs());
            if beta[v] < 0.0 {
                simplex_err = simplex_err.max(-beta[v]);
            }
        }
        simplex_err = simplex_err.max((beta.iter().sum::<f64>() - 1.0).abs());
    }
    (
        grid_err <= GRID_TOL && cd_err <= DESCENT_TOL && simplex_err <= SIMPLEX_TOL,
        format!(
            "grid {grid_err:.2e} (tol {GRID_TOL:e}), descent {cd_err:.2e} (tol {DESCENT_TOL:e}), simplex {simplex_err:.2e} (tol {SIMPLEX_TOL:e})"
        ),
    )
}

fn c4_sinkhorn() -> Verdict {
    let mut rng = rng(104);
    let mut worst_rel: f64 = 0.0;
    let mut monotone = true;
    let mut converged = true;
    for _ in 0..100 {
        let n = rng.random_range(4..=12);
        let cost = random_cost(&mut rng, n, 3);
        let p = random_distribution(&mut rng, n, 8);
        let q = random_distribution(&mut rng, n, 8);
        let lp = exact_w1(&p, &q, &cost).unwrap();
        let mut c_max: f64 = 1e-12;
        for &a in p.support() {
            for &b in q.support() {
                c_max = c_max.max(cost.get(a, b));
            }
        }
        let mut previous = f64::INFINITY;
        let mut last = f64::NAN;
        for halving in 0..=6 {
            let epsilon = SINKHORN_EPS_FRACTION * c_max * 2f64.powi(6 - halving);
            let params = SinkhornParams {
                epsilon,
                tol: 1e-10,
                maxiter: 1_000_000,
            };
            let out = sinkhorn_w1(&p, &q, &cost, params).unwrap();
            converged &= out.converged;
            let gap = (out.cost - lp).abs();
            monotone &= gap <= previous + MONOTONE_SLACK * c_max;
            previous = gap;
            last = out.cost;
        }
        let rel = if lp > 0.0 {
            (last - lp).abs() / lp
        } else {
            (last - lp).abs()
        };
        worst_rel = worst_rel.max(rel);
    }
    (
        worst_rel <= SINKHORN_REL_TOL && monotone && converged,
        format!(
            "worst relative gap {worst_rel:.2e} at eps = {SINKHORN_EPS_FRACTION:e} max C (tol {SINKHORN_REL_TOL}); monotone over 6 halvings: {monotone}"
        ),
    )
}

fn c5_dijkstra() -> Verdict {
    let mut rng = rng(105);
    let mut mismatches = 0;
    for _ in 0..30 {
        let n = rng.random_range(2..=8);
        let density = rng.random_range(0.2..0.9);
        let g = random_graph(&mut rng, n, density);
        for s in 0..n {
            if min_transition_cost(&g, s) != enumerate_paths(&g, s) {
                mismatches += 1;
            }
        }
    }
    (mismatches == 0, format!("{mismatches} sources differ from path enumeration"))
}

fn c6_monotone() -> Verdict {
    let mut rng = rng(106);
    let mut worst_rise = f64::NEG_INFINITY;
    for _ in 0..20 {
        let n = rng.random_range(10..=30);
        let ens = random_ensemble(&mut rng, n, 5);
        assert_eq!(ens.m(), 3);
        let out = bcd_solve(&ens, &PipelineConfig::default(), &DenseMatrix::identity(n)).unwrap();
        for w in out.objective_trace.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    (
        worst_rise <= OBJECTIVE_SLACK,
        format!("largest per-step change {worst_rise:.2e} (allowed {OBJECTIVE_SLACK:e})"),
    )
}

fn c7_generator() -> Verdict {
    let m = generate_manifold(0, 100, 3, DEFAULT_NOISE).unwrap();
    let config = PipelineConfig::default();
    let queries: Vec<usize> = (0..m.features.n()).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let (base, re, secs) = pool.install(|| {
        let base = baseline_rankings(&m.features, &queries, &config).unwrap();
        let started = Instant::now();
        let re = rerank(&m.features, &queries, &config).unwrap();
        (base, re, started.elapsed().as_secs_f64())
    });
    let b = evaluate_rankings(&base, &m.features, &m.truth).map;
    let r = evaluate_rankings(&re.rankings, &m.features, &m.truth).map;
    (
        r >= b + MAP_GAIN && b < BASELINE_MAP_CEILING && secs < GENERATOR_SECONDS,
        format!("baseline mAP {b:.4}, reranked mAP {r:.4}, {secs:.2} s on 1 thread"),
    )
}

fn c8_identity() -> Verdict {
    let dir = tempfile::TempDir::new().unwrap();
    let exe = env!("CARGO_BIN_EXE_mrerank");
    let status = |args: &[&str]| {
        Command::new(exe)
            .args(args)
            .current_dir(dir.path())
            .output()
            .unwrap()
            .status
            .code()
    };
    let gen = status(&["gen", "--out", "x.bin", "--truth", "t.txt"]);
    let re = status(&["rerank", "--features", "x.bin", "--out", "re.run", "--theta", "1"]);
    let base = status(&["rerank", "--features", "x.bin", "--out", "base.run", "--baseline"]);
    if (gen, re, base) != (Some(0), Some(0), Some(0)) {
        return (false, format!("exit codes gen={gen:?} rerank={re:?} baseline={base:?}"));
    }
    let a = fs::read(dir.path().join("re.run")).unwrap();
    let b = fs::read(dir.path().join("base.run")).unwrap();
    (a == b, format!("{} vs {} bytes, identical: {}", a.len(), b.len(), a == b))
}

fn c9_large() -> Verdict {
    let mut rng = rng(109);
    let (n, d) = (1000, 128);
    let data: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let x = FeatureSet::with_index_ids(data, d).unwrap();
    let config = PipelineConfig {
        rerank_depth: Some(1000),
        ..PipelineConfig::default()
    };
    let queries: Vec<usize> = (0..n).collect();
    let started = Instant::now();
    let out = rerank(&x, &queries, &config).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let cores = std::thread::available_parallelism().map_or(1, |c| c.get());
    (
        secs < LARGE_SECONDS && out.rankings.len() == n,
        format!(
            "{secs:.2} s with {} worker threads on {cores} cores (limit {LARGE_SECONDS} s on 8 cores)",
            rayon::current_num_threads()
        ),
    )
}

fn c10_spectral() -> Verdict {
    let mut rng = rng(110);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(5..=40);
        let k = rng.random_range(2..=(n / 2).max(2));
        let ens = random_ensemble(&mut rng, n, k);
        for g in &ens.graphs {
            worst = worst.max(spectral_radius(&g.s_bar.to_dense()));
        }
    }
    (
        worst <= 1.0 + SPECTRAL_TOL,
        format!("max spectral radius {worst:.12} (limit 1 + {SPECTRAL_TOL:e})"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("frozen-weight diffusion equals Kronecker solve", c1_kronecker),
        ("conjugate gradients match fixed point and converge faster", c2_cg),
        ("closed-form weights match grid and coordinate descent", c3_beta),
        ("regularized transport approaches the linear program", c4_sinkhorn),
        ("shortest transition paths match enumeration", c5_dijkstra),
        ("diffusion objective is non-increasing", c6_monotone),
        ("re-ranking beats the baseline on generated rings", c7_generator),
        ("theta = 1 run equals the baseline run byte for byte", c8_identity),
        ("n = 1000, d = 128 pipeline within the time budget", c9_large),
        ("normalized graphs have spectral radius at most one", c10_spectral),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let (ok, detail) = check();
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {}: {name}: {detail}",
            if ok { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
