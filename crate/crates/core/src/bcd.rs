//! Multi-graph similarity diffusion with jointly optimized graph weights.
//!
//! The similarity matrix `F` minimizes `sum_v beta_v H^v(F) + lambda/2 |beta|^2`
//! over the simplex. With `beta` fixed the optimum solves the Lyapunov
//! equation `(I - A) F + F (I - A) = 2 (1 - alpha) E` where
//! `A = sum_v alpha_v S_bar^v` and `alpha_v = beta_v / (mu + 1)`; with `F`
//! fixed the weights have a closed form on the active index set.

use log::debug;

use crate::affinity::GraphEnsemble;
use crate::config::{InnerSolver, PipelineConfig, Regularizer};
use crate::error::{invalid, Error, Result};
use crate::matrix::{dot, strictly_lower_tiles, CsrMatrix, DenseMatrix};
use crate::par;

/// Dense `n x n` diffused similarity.
pub type SimilarityMatrix = DenseMatrix;

/// Graph weights `beta` on the probability simplex, plus the damping `mu`
/// they were derived under.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    beta: Vec<f64>,
    mu: f64,
}

impl WeightVector {
    pub fn new(beta: Vec<f64>, mu: f64) -> Result<Self> {
        if beta.is_empty() {
            return Err(invalid("beta", "need at least one weight"));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(invalid("mu", format!("must be positive, got {mu}")));
        }
        if beta.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(invalid("beta", "weights must lie in [0, 1]"));
        }
        let sum: f64 = beta.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(invalid("beta", format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { beta, mu })
    }

    pub fn uniform(m: usize, mu: f64) -> Result<Self> {
        Self::new(vec![1.0 / m as f64; m], mu)
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn m(&self) -> usize {
        self.beta.len()
    }

    /// `alpha_v = beta_v / (mu + 1)`.
    pub fn alphas(&self) -> Vec<f64> {
        self.beta.iter().map(|b| b / (self.mu + 1.0)).collect()
    }

    /// `alpha = sum_v alpha_v = 1 / (mu + 1)`.
    pub fn alpha_sum(&self) -> f64 {
        1.0 / (self.mu + 1.0)
    }
}

/// Per-graph objective values `H^v`, computed under regularization weight `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValues {
    pub h: Vec<f64>,
    pub mu: f64,
}

/// Full objective `sum_v beta_v H^v + lambda/2 |beta|^2`.
pub fn total_objective(h: &ObjectiveValues, weights: &WeightVector, lambda: f64) -> f64 {
    let linear: f64 = h.h.iter().zip(weights.beta()).map(|(h, b)| h * b).sum();
    let quad: f64 = weights.beta().iter().map(|b| b * b).sum();
    linear + 0.5 * lambda * quad
}

/// Weighted combinations of the ensemble's normalized matrices.
#[derive(Debug, Clone)]
pub struct DiffusionOperator {
    /// `sum_v alpha_v S^v`
    a: CsrMatrix,
    /// `sum_v alpha_v S_bar^v`
    a_bar: CsrMatrix,
    a_symmetric: bool,
    alpha: f64,
}

impl DiffusionOperator {
    pub fn new(ensemble: &GraphEnsemble, weights: &WeightVector) -> Result<Self> {
        if ensemble.m() != weights.m() {
            return Err(Error::Shape(format!(
                "{} weights for {} graphs",
                weights.m(),
                ensemble.m()
            )));
        }
        let alphas = weights.alphas();
        let s: Vec<&CsrMatrix> = ensemble.graphs.iter().map(|g| &g.s).collect();
        let s_bar: Vec<&CsrMatrix> = ensemble.graphs.iter().map(|g| &g.s_bar).collect();
        let a = CsrMatrix::linear_combination(&s, &alphas)?;
        let a_symmetric = a.is_exactly_symmetric();
        let a_bar = if a_symmetric && ensemble.graphs.iter().all(|g| g.s == g.s_bar) {
            a.clone()
        } else {
            CsrMatrix::linear_combination(&s_bar, &alphas)?
        };
        Ok(Self {
            a,
            a_bar,
            a_symmetric,
            alpha: weights.alpha_sum(),
        })
    }

    pub fn n(&self) -> usize {
        self.a.n_rows()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `M X + X M^T` for sparse `M`; exploits symmetry of both operands.
    fn two_sided(m: &CsrMatrix, m_symmetric: bool, x: &DenseMatrix) -> DenseMatrix {
        let mut g = m.mul_dense(x);
        if m_symmetric && x.is_exactly_symmetric() {
            // X M^T = (M X)^T
            let n = g.rows();
            let data = g.as_mut_slice();
            strictly_lower_tiles(n, |i, j| {
                let v = data[i * n + j] + data[j * n + i];
                data[i * n + j] = v;
                data[j * n + i] = v;
            });
            for i in 0..n {
                data[i * n + i] *= 2.0;
            }
            g
        } else {
            let right = m.dense_mul_transpose(x);
            g.as_mut_slice()
                .iter_mut()
                .zip(right.as_slice())
                .for_each(|(a, b)| *a += b);
            g
        }
    }

    /// One fixed-point update `1/2 (F A^T + A F) + (1 - alpha) E`.
    pub fn step(&self, f: &DenseMatrix, e: &DenseMatrix) -> DenseMatrix {
        let mut out = Self::two_sided(&self.a, self.a_symmetric, f);
        let c = 1.0 - self.alpha;
        out.as_mut_slice()
            .iter_mut()
            .zip(e.as_slice())
            .for_each(|(o, ev)| *o = 0.5 * *o + c * ev);
        out
    }

    /// Lyapunov operator `(I - A_bar) X + X (I - A_bar)`.
    pub fn lyapunov(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut out = Self::two_sided(&self.a_bar, true, x);
        out.as_mut_slice()
            .iter_mut()
            .zip(x.as_slice())
            .for_each(|(o, xv)| *o = 2.0 * xv - *o);
        out
    }

    /// `2 (1 - alpha) E - L(F)`.
    pub fn residual(&self, f: &DenseMatrix, e: &DenseMatrix) -> DenseMatrix {
        let mut r = self.lyapunov(f);
        let c = 2.0 * (1.0 - self.alpha);
        r.as_mut_slice()
            .iter_mut()
            .zip(e.as_slice())
            .for_each(|(rv, ev)| *rv = c * ev - *rv);
        r
    }
}

fn check_shapes(f: &DenseMatrix, e: &DenseMatrix, n: usize) -> Result<()> {
    if !f.is_square() || !f.same_shape(e) || f.rows() != n {
        return Err(Error::Shape(format!(
            "F is {}x{}, E is {}x{}, graphs have {n} nodes",
            f.rows(),
            f.cols(),
            e.rows(),
            e.cols()
        )));
    }
    Ok(())
}

pub fn diffusion_step(
    f: &SimilarityMatrix,
    ensemble: &GraphEnsemble,
    weights: &WeightVector,
    e: &DenseMatrix,
) -> Result<SimilarityMatrix> {
    check_shapes(f, e, ensemble.n())?;
    Ok(DiffusionOperator::new(ensemble, weights)?.step(f, e))
}

/// Frobenius norm of the Lyapunov residual at `f`.
pub fn lyapunov_residual(
    f: &SimilarityMatrix,
    ensemble: &GraphEnsemble,
    weights: &WeightVector,
    e: &DenseMatrix,
) -> Result<f64> {
    check_shapes(f, e, ensemble.n())?;
    Ok(DiffusionOperator::new(ensemble, weights)?
        .residual(f, e)
        .frobenius_norm())
}

/// Result of an iterative similarity solve.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub f: SimilarityMatrix,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Conjugate gradients on the Lyapunov equation, started from `f0`.
pub fn cg_solve(
    ensemble: &GraphEnsemble,
    weights: &WeightVector,
    e: &DenseMatrix,
    f0: &SimilarityMatrix,
    delta: f64,
    maxiter: usize,
) -> Result<SolveOutcome> {
    check_shapes(f0, e, ensemble.n())?;
    if delta.is_nan() || delta <= 0.0 {
        return Err(invalid("delta", "must be positive"));
    }
    let op = DiffusionOperator::new(ensemble, weights)?;
    Ok(cg_with_operator(&op, e, f0.clone(), delta, maxiter))
}

pub(crate) fn cg_with_operator(
    op: &DiffusionOperator,
    e: &DenseMatrix,
    mut f: DenseMatrix,
    delta: f64,
    maxiter: usize,
) -> SolveOutcome {
    let mut r = op.residual(&f, e);
    let mut rr = r.dot(&r);
    let mut p = r.clone();
    let mut best = (rr.sqrt(), f.clone());
    let mut t = 0;
    loop {
        if rr.sqrt() < delta {
            // confirm against the true residual; recursive residuals drift
            let true_r = op.residual(&f, e);
            let true_norm = true_r.frobenius_norm();
            if true_norm < delta {
                return SolveOutcome {
                    f,
                    iterations: t,
                    residual_norm: true_norm,
                    converged: true,
                };
            }
            r = true_r;
            rr = true_norm * true_norm;
            p = r.clone();
        }
        if t >= maxiter {
            break;
        }
        let lp = op.lyapunov(&p);
        let curvature = p.dot(&lp);
        if curvature.is_nan() || curvature <= 0.0 {
            break;
        }
        let step = rr / curvature;
        f.as_mut_slice()
            .iter_mut()
            .zip(p.as_slice())
            .for_each(|(fv, pv)| *fv += step * pv);
        r.as_mut_slice()
            .iter_mut()
            .zip(lp.as_slice())
            .for_each(|(rv, lv)| *rv -= step * lv);
        let rr_next = r.dot(&r);
        let ratio = rr_next / rr;
        p.as_mut_slice()
            .iter_mut()
            .zip(r.as_slice())
            .for_each(|(pv, rv)| *pv = rv + ratio * *pv);
        rr = rr_next;
        t += 1;
        if rr.sqrt() < best.0 {
            best = (rr.sqrt(), f.clone());
        }
    }
    let final_norm = op.residual(&f, e).frobenius_norm();
    let (f, residual_norm) = if final_norm <= best.0 {
        (f, final_norm)
    } else {
        let norm = op.residual(&best.1, e).frobenius_norm();
        (best.1, norm)
    };
    SolveOutcome {
        f,
        iterations: t,
        residual_norm,
        converged: false,
    }
}

/// Repeated fixed-point steps until the Lyapunov residual drops below `delta`.
pub fn fixed_point_solve(
    ensemble: &GraphEnsemble,
    weights: &WeightVector,
    e: &DenseMatrix,
    f0: &SimilarityMatrix,
    delta: f64,
    maxiter: usize,
) -> Result<SolveOutcome> {
    check_shapes(f0, e, ensemble.n())?;
    let op = DiffusionOperator::new(ensemble, weights)?;
    let mut f = f0.clone();
    let mut t = 0;
    loop {
        let res = op.residual(&f, e).frobenius_norm();
        if res < delta || t >= maxiter {
            return Ok(SolveOutcome {
                f,
                iterations: t,
                residual_norm: res,
                converged: res < delta,
            });
        }
        f = op.step(&f, e);
        t += 1;
    }
}

/// Per-graph smoothness objective plus `mu |F - E|_F^2`, evaluated through
/// row/column Gram entries on the sparsity pattern instead of the triple sum.
pub fn compute_objectives(
    f: &SimilarityMatrix,
    ensemble: &GraphEnsemble,
    e: &DenseMatrix,
    mu: f64,
) -> Result<ObjectiveValues> {
    check_shapes(f, e, ensemble.n())?;
    let n = f.rows();
    let ft;
    let cols: &DenseMatrix = if f.is_exactly_symmetric() {
        f
    } else {
        ft = f.transpose();
        &ft
    };
    let row_sq: Vec<f64> = (0..n).map(|i| dot(f.row(i), f.row(i))).collect();
    let col_sq: Vec<f64> = (0..n).map(|i| dot(cols.row(i), cols.row(i))).collect();

    // Gram entries on the union pattern of every graph.
    let patterns: Vec<&CsrMatrix> = ensemble.graphs.iter().map(|g| &g.w).collect();
    let union = CsrMatrix::linear_combination(&patterns, &vec![1.0; patterns.len()])?;
    let same = std::ptr::eq(cols, f);
    let grams: Vec<Vec<(usize, f64, f64)>> = par::map_indices(n, |i| {
        union
            .row(i)
            .map(|(j, _)| {
                let rg = dot(f.row(i), f.row(j));
                let cg = if same {
                    rg
                } else {
                    dot(cols.row(i), cols.row(j))
                };
                (j, rg, cg)
            })
            .collect()
    });

    let reg = mu * f.frobenius_distance(e).powi(2);
    let h = ensemble
        .graphs
        .iter()
        .map(|g| {
            let col_sum = g.w.col_sums();
            let mut diag = 0.0;
            for j in 0..n {
                let ratio = col_sum[j] / g.degree[j];
                diag += (1.0 + ratio) * (row_sq[j] + col_sq[j]);
            }
            let mut cross = 0.0;
            for (i, gram_row) in grams.iter().enumerate() {
                for (j, s) in g.s.row(i) {
                    let pos = gram_row
                        .binary_search_by_key(&j, |&(c, _, _)| c)
                        .expect("union pattern covers every graph");
                    let (_, rg, cg) = gram_row[pos];
                    cross += s * (rg + cg);
                }
            }
            0.25 * diag - 0.5 * cross + reg
        })
        .collect();
    Ok(ObjectiveValues { h, mu })
}

/// Closed-form simplex-constrained minimizer of
/// `sum_v beta_v H^v + lambda/2 |beta|^2`.
pub fn update_beta(h: &ObjectiveValues, lambda: f64) -> Result<WeightVector> {
    let beta = optimal_beta(&h.h, lambda)?;
    Ok(WeightVector { beta, mu: h.mu })
}

pub fn optimal_beta(h: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid("lambda", format!("must be positive, got {lambda}")));
    }
    if h.is_empty() || h.iter().any(|v| !v.is_finite()) {
        return Err(invalid("objectives", "need finite objective values"));
    }
    let m = h.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| h[b].total_cmp(&h[a]).then(a.cmp(&b)));
    // peel the largest objectives until the rest satisfy the slack condition
    let mut start = 0;
    let mut sum: f64 = h.iter().sum();
    while start < m - 1 {
        let size = (m - start) as f64;
        let eta = (sum + lambda) / size;
        if h[order[start]] < eta {
            break;
        }
        sum -= h[order[start]];
        start += 1;
    }
    let active = &order[start..];
    let size = active.len() as f64;
    let sum: f64 = active.iter().map(|&v| h[v]).sum();
    let mut beta = vec![0.0; m];
    for &v in active {
        beta[v] = (sum - size * h[v] + lambda) / (lambda * size);
    }
    Ok(beta)
}

/// Build the regularizer `E`.
pub fn regularizer_matrix(ensemble: &GraphEnsemble, kind: Regularizer) -> DenseMatrix {
    match kind {
        Regularizer::Identity => DenseMatrix::identity(ensemble.n()),
        Regularizer::ReferenceGraph => ensemble.graphs[ensemble.reference].s_bar.to_dense(),
    }
}

/// Everything produced by a diffusion run.
#[derive(Debug, Clone)]
pub struct BcdOutcome {
    pub f: SimilarityMatrix,
    pub weights: WeightVector,
    pub lambda: f64,
    /// Objective after initialization and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternate inner similarity updates with closed-form weight refreshes.
pub fn bcd_solve(
    ensemble: &GraphEnsemble,
    config: &PipelineConfig,
    e: &DenseMatrix,
) -> Result<BcdOutcome> {
    bcd_solve_with(ensemble, config, e, None)
}

/// As [`bcd_solve`]; with `frozen` set the weights are never refreshed.
pub fn bcd_solve_with(
    ensemble: &GraphEnsemble,
    config: &PipelineConfig,
    e: &DenseMatrix,
    frozen: Option<WeightVector>,
) -> Result<BcdOutcome> {
    if !e.is_square() || e.rows() != ensemble.n() {
        return Err(Error::Shape("regularizer does not match the graphs".into()));
    }
    let m = ensemble.m();
    let learn = frozen.is_none();
    let mut weights = match frozen {
        Some(w) => w,
        None => WeightVector::uniform(m, config.mu)?,
    };
    let mut f = e.clone();
    if config.maxiter == 0 {
        return Ok(BcdOutcome {
            f,
            weights,
            lambda: config.lambda.unwrap_or(f64::NAN),
            objective_trace: Vec::new(),
            iterations: 0,
            converged: false,
        });
    }

    let h0 = compute_objectives(&f, ensemble, e, config.mu)?;
    let mut lambda = config.lambda;
    let mut pending_first = Some((h0, weights.clone()));
    let mut trace = Vec::with_capacity(config.maxiter + 1);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.maxiter {
        let op = DiffusionOperator::new(ensemble, &weights)?;
        let next = match config.inner_solver {
            InnerSolver::FixedPoint => {
                let mut g = f.clone();
                for _ in 0..config.inner_iters {
                    g = op.step(&g, e);
                }
                g
            }
            InnerSolver::ConjugateGradient => {
                cg_with_operator(&op, e, f.clone(), config.delta, config.inner_iters).f
            }
        };
        let h = compute_objectives(&next, ensemble, e, config.mu)?;
        let lam = *lambda.get_or_insert_with(|| {
            let mean = h.h.iter().sum::<f64>() / m as f64;
            if mean > 0.0 {
                mean
            } else {
                1.0
            }
        });
        if let Some((h0, w0)) = pending_first.take() {
            trace.push(total_objective(&h0, &w0, lam));
        }
        if learn {
            weights = update_beta(&h, lam)?;
        }
        trace.push(total_objective(&h, &weights, lam));

        let change = next.frobenius_distance(&f);
        let scale = f.frobenius_norm();
        f = next;
        iterations += 1;
        debug!(
            "diffusion iteration {iterations}: relative change {:.3e}",
            change / scale
        );
        if change <= config.outer_tol * scale {
            converged = true;
            break;
        }
    }
    Ok(BcdOutcome {
        f,
        weights,
        lambda: lambda.unwrap_or(f64::NAN),
        objective_trace: trace,
        iterations,
        converged,
    })
}
