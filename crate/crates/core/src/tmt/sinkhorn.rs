//! Entropy-regularized transport between two sparse distributions.

use crate::error::{invalid, Error, Result};
use crate::geometry::CostMatrix;
use crate::lse::StateDistribution;
use crate::matrix::dot;

/// Largest `C / epsilon` for which the plain kernel `exp(-C / epsilon)` is
/// used; beyond it the scaling vectors risk overflow and the solver works
/// with log-domain potentials instead.
const KERNEL_RANGE_LIMIT: f64 = 200.0;

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornParams {
    pub epsilon: f64,
    pub tol: f64,
    pub maxiter: usize,
}

impl SinkhornParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(
                "epsilon",
                format!("must be positive, got {}", self.epsilon),
            ));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(invalid("sinkhorn_tol", "must be positive"));
        }
        if self.maxiter == 0 {
            return Err(invalid("sinkhorn_maxiter", "must be at least 1"));
        }
        Ok(())
    }
}

/// Coupling between the support of the start and end distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    /// `rows.len() x cols.len()`, row-major.
    pub q: Vec<f64>,
}

impl TransportPlan {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.q[a * self.cols.len() + b]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.q
            .chunks(self.cols.len())
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let t = self.cols.len();
        let mut out = vec![0.0; t];
        for row in self.q.chunks(t) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornOutcome {
    /// `<Q, C>` of the plan after projection onto exact marginals; the
    /// entropic term is not included.
    pub cost: f64,
    pub plan: TransportPlan,
    pub iterations: usize,
    /// L1 violation of the start marginal by the unprojected iterate.
    pub marginal_error: f64,
    pub converged: bool,
    pub log_domain: bool,
}

/// Regularized transport from `start` to `end` under ground cost `cost`.
pub fn sinkhorn_w1(
    start: &StateDistribution,
    end: &StateDistribution,
    cost: &CostMatrix,
    params: SinkhornParams,
) -> Result<SinkhornOutcome> {
    TransportSolver::new(cost, params)?.solve(start, end)
}

/// Ground cost and settings shared by many solves, optionally with the
/// Gibbs kernel `exp(-C / epsilon)` precomputed over all node pairs.
#[derive(Debug, Clone)]
pub struct TransportSolver<'a> {
    cost: &'a CostMatrix,
    params: SinkhornParams,
    /// `(K, C)` per node pair, interleaved so one gather fetches both.
    kernel: Option<Vec<[f64; 2]>>,
}

impl<'a> TransportSolver<'a> {
    pub fn new(cost: &'a CostMatrix, params: SinkhornParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            cost,
            params,
            kernel: None,
        })
    }

    /// Precompute the kernel so individual solves skip the exponentials.
    pub fn with_kernel(mut self) -> Self {
        let eps = self.params.epsilon;
        self.kernel = Some(
            self.cost
                .as_matrix()
                .as_slice()
                .iter()
                .map(|&c| [(-c / eps).exp(), c])
                .collect(),
        );
        self
    }

    pub fn params(&self) -> SinkhornParams {
        self.params
    }

    pub fn solve(
        &self,
        start: &StateDistribution,
        end: &StateDistribution,
    ) -> Result<SinkhornOutcome> {
        self.solve_with(start, end, self.params)
    }

    fn solve_with(
        &self,
        start: &StateDistribution,
        end: &StateDistribution,
        params: SinkhornParams,
    ) -> Result<SinkhornOutcome> {
        let cost = self.cost;
        if start.is_empty() || end.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        let n = cost.n();
        if start.support().iter().chain(end.support()).any(|&i| i >= n) {
            return Err(Error::Shape(format!(
                "support exceeds the {n}-node cost matrix"
            )));
        }
        let rows = start.support().to_vec();
        let cols = end.support().to_vec();
        let (s, t) = (rows.len(), cols.len());
        let p = start.mass();
        let q = end.mass();
        let full_cost = cost.as_matrix().as_slice();
        let gather = || -> Vec<f64> {
            let mut out = Vec::with_capacity(s * t);
            for &a in &rows {
                let row = &full_cost[a * n..(a + 1) * n];
                out.extend(cols.iter().map(|&b| row[b]));
            }
            out
        };

        // forced plans
        if s == 1 || t == 1 {
            let plan: Vec<f64> = if s == 1 { q.to_vec() } else { p.to_vec() };
            let cost = dot(&plan, &gather());
            return Ok(SinkhornOutcome {
                cost,
                plan: TransportPlan {
                    rows,
                    cols,
                    q: plan,
                },
                iterations: 0,
                marginal_error: 0.0,
                converged: true,
                log_domain: false,
            });
        }

        let (kernel, c) = match &self.kernel {
            Some(full) if params.epsilon == self.params.epsilon => {
                let mut k = Vec::with_capacity(s * t);
                let mut c = Vec::with_capacity(s * t);
                let mut k_min = f64::INFINITY;
                for &a in &rows {
                    let row = &full[a * n..(a + 1) * n];
                    for &b in &cols {
                        let [kab, cab] = row[b];
                        k_min = k_min.min(kab);
                        k.push(kab);
                        c.push(cab);
                    }
                }
                ((k_min >= (-KERNEL_RANGE_LIMIT).exp()).then_some(k), c)
            }
            _ => {
                let c = gather();
                let c_max = c.iter().copied().fold(0.0, f64::max);
                let k = (c_max / params.epsilon <= KERNEL_RANGE_LIMIT)
                    .then(|| c.iter().map(|v| (-v / params.epsilon).exp()).collect());
                (k, c)
            }
        };
        let scaled = kernel.and_then(|k| kernel_sinkhorn(p, q, k, params));
        let (plan, iterations, marginal_error, converged, log_domain) = match scaled {
            Some(k) => (k.0, k.1, k.2, k.3, false),
            None => {
                let c_max = c.iter().copied().fold(0.0, f64::max);
                let l = log_sinkhorn(p, q, &c, c_max, params);
                (round_to_marginals(l.0, p, q), l.1, l.2, l.3, true)
            }
        };
        let total = dot(&plan, &c);
        Ok(SinkhornOutcome {
            cost: total,
            plan: TransportPlan {
                rows,
                cols,
                q: plan,
            },
            iterations,
            marginal_error,
            converged,
            log_domain,
        })
    }

    /// As [`solve`](Self::solve), but mass shared by both distributions
    /// stays in place at zero cost and only the excess `(p - q)+` is moved
    /// onto `(q - p)+`. For a metric ground cost this leaves the
    /// unregularized optimum unchanged. The returned plan covers the excess
    /// supports only.
    pub fn solve_excess(
        &self,
        start: &StateDistribution,
        end: &StateDistribution,
    ) -> Result<SinkhornOutcome> {
        let mut give = Vec::new();
        let mut take = Vec::new();
        let (mut a, mut b) = (start.iter().peekable(), end.iter().peekable());
        loop {
            let (node, diff) = match (a.peek().copied(), b.peek().copied()) {
                (None, None) => break,
                (Some((i, pm)), Some((j, qm))) if i == j => {
                    a.next();
                    b.next();
                    (i, pm - qm)
                }
                (Some((i, pm)), Some((j, _))) if i < j => {
                    a.next();
                    (i, pm)
                }
                (Some((i, pm)), None) => {
                    a.next();
                    (i, pm)
                }
                (_, Some((j, qm))) => {
                    b.next();
                    (j, -qm)
                }
            };
            if diff > 0.0 {
                give.push((node, diff));
            } else if diff < 0.0 {
                take.push((node, -diff));
            }
        }
        let moved: f64 = give.iter().map(|e| e.1).sum();
        if give.is_empty() || take.is_empty() || moved.is_nan() || moved <= 0.0 {
            return Ok(SinkhornOutcome {
                cost: 0.0,
                plan: TransportPlan {
                    rows: Vec::new(),
                    cols: Vec::new(),
                    q: Vec::new(),
                },
                iterations: 0,
                marginal_error: 0.0,
                converged: true,
                log_domain: false,
            });
        }
        let owed: f64 = take.iter().map(|e| e.1).sum();
        let normalize = |v: Vec<(usize, f64)>, total: f64| {
            let mut v: Vec<(usize, f64)> = v.into_iter().map(|(i, m)| (i, m / total)).collect();
            // absorb rounding so the masses sum to one
            let sum: f64 = v.iter().map(|e| e.1).sum();
            let last = v.len() - 1;
            v[last].1 += 1.0 - sum;
            StateDistribution::new(v)
        };
        // the tolerance applies to the marginals of the original problem
        let params = SinkhornParams {
            tol: self.params.tol / moved,
            ..self.params
        };
        let mut out = self.solve_with(&normalize(give, moved)?, &normalize(take, owed)?, params)?;
        out.cost *= moved;
        out.plan.q.iter_mut().for_each(|x| *x *= moved);
        out.marginal_error *= moved;
        Ok(out)
    }
}

/// See [`TransportSolver::solve_excess`].
pub fn sinkhorn_w1_excess(
    start: &StateDistribution,
    end: &StateDistribution,
    cost: &CostMatrix,
    params: SinkhornParams,
) -> Result<SinkhornOutcome> {
    TransportSolver::new(cost, params)?.solve_excess(start, end)
}

type RawSolve = (Vec<f64>, usize, f64, bool);

/// Scaling iterations on `K = exp(-C / eps)`, returning the plan already
/// rounded onto the marginals. Each iteration is a single sweep over the
/// rows of `K`: the row product with `v` gives the new `u_a`, and the row
/// is folded into `K^T u` while still in cache. Returns `None` if the
/// iterates stop being finite and positive.
fn kernel_sinkhorn(p: &[f64], q: &[f64], k: Vec<f64>, params: SinkhornParams) -> Option<RawSolve> {
    let (s, t) = (p.len(), q.len());
    let mut u = vec![1.0; s];
    let mut u_next = vec![0.0; s];
    let mut v = vec![1.0; t];
    let mut kv = vec![0.0; s];
    let mut ktu = vec![0.0; t];
    let mut err = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    loop {
        ktu.iter_mut().for_each(|x| *x = 0.0);
        let mut sweep_err = 0.0;
        for a in 0..s {
            let row = &k[a * t..(a + 1) * t];
            let d = dot(row, &v);
            kv[a] = d;
            sweep_err += (u[a] * d - p[a]).abs();
            let ua = p[a] / d;
            u_next[a] = ua;
            for (acc, kab) in ktu.iter_mut().zip(row) {
                *acc += kab * ua;
            }
        }
        if iterations > 0 {
            err = sweep_err;
            if !err.is_finite() {
                return None;
            }
            if err <= params.tol {
                converged = true;
                break;
            }
        }
        if iterations >= params.maxiter {
            break;
        }
        std::mem::swap(&mut u, &mut u_next);
        for b in 0..t {
            v[b] = q[b] / ktu[b];
        }
        if u.iter().chain(&v).any(|x| !(x.is_finite() && *x > 0.0)) {
            return None;
        }
        iterations += 1;
    }
    let plan = round_scaled(k, Some((&u, &v)), p, q);
    Some((plan, iterations, err, converged))
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Scaling iterations on a kernel stabilized by dual potentials `f`, `g`:
/// `K = exp((f + g - C) / eps)`. Scalings that grow too large are absorbed
/// into the potentials and the kernel rebuilt. `eps` is lowered
/// geometrically, each stage warm-starting the next.
fn log_sinkhorn(p: &[f64], q: &[f64], c: &[f64], c_max: f64, params: SinkhornParams) -> RawSolve {
    const ABSORB: f64 = 1e30;
    let (s, t) = (p.len(), q.len());
    let mut f = vec![0.0; s];
    let mut g = vec![0.0; t];
    let build = |f: &[f64], g: &[f64], eps: f64| -> Vec<f64> {
        (0..s * t)
            .map(|ab| ((f[ab / t] + g[ab % t] - c[ab]) / eps).exp())
            .collect()
    };

    let mut schedule = Vec::new();
    let mut eps = c_max / 4.0;
    while eps > params.epsilon {
        schedule.push(eps);
        eps *= 0.5;
    }
    schedule.push(params.epsilon);

    let mut iterations = 0;
    let mut err = f64::INFINITY;
    let mut converged = false;
    let mut k = Vec::new();
    let last = schedule.len() - 1;
    for (stage, &eps) in schedule.iter().enumerate() {
        let final_stage = stage == last;
        let stage_tol = if final_stage {
            params.tol
        } else {
            params.tol.sqrt().max(1e-6)
        };
        k = build(&f, &g, eps);
        let mut u = vec![1.0; s];
        let mut v = vec![1.0; t];
        let mut kv = vec![0.0; s];
        let mut ktu = vec![0.0; t];
        loop {
            for a in 0..s {
                kv[a] = dot(&k[a * t..(a + 1) * t], &v);
            }
            err = (0..s).map(|a| (u[a] * kv[a] - p[a]).abs()).sum();
            if iterations > 0 && err <= stage_tol {
                if final_stage {
                    converged = true;
                }
                break;
            }
            if iterations >= params.maxiter {
                break;
            }
            for a in 0..s {
                u[a] = p[a] / kv[a];
            }
            ktu.iter_mut().for_each(|x| *x = 0.0);
            for a in 0..s {
                let ua = u[a];
                for (acc, kab) in ktu.iter_mut().zip(&k[a * t..(a + 1) * t]) {
                    *acc += kab * ua;
                }
            }
            for b in 0..t {
                v[b] = q[b] / ktu[b];
            }
            iterations += 1;
            let healthy = |x: &f64| x.is_finite() && *x > 1.0 / ABSORB && *x < ABSORB;
            if !(u.iter().all(healthy) && v.iter().all(healthy)) {
                if u.iter().chain(&v).all(|x| x.is_finite() && *x > 0.0) {
                    absorb(&mut f, &mut u, eps);
                    absorb(&mut g, &mut v, eps);
                } else {
                    exact_log_update(&mut f, &mut g, p, q, c, eps);
                    u.iter_mut().for_each(|x| *x = 1.0);
                    v.iter_mut().for_each(|x| *x = 1.0);
                }
                k = build(&f, &g, eps);
            }
        }
        absorb(&mut f, &mut u, eps);
        absorb(&mut g, &mut v, eps);
        if iterations >= params.maxiter {
            k = build(&f, &g, eps);
            break;
        }
        if final_stage {
            k = build(&f, &g, eps);
        }
    }
    (k, iterations, err, converged)
}

fn absorb(potential: &mut [f64], scaling: &mut [f64], eps: f64) {
    for (pot, x) in potential.iter_mut().zip(scaling.iter_mut()) {
        *pot += eps * x.ln();
        *x = 1.0;
    }
}

/// One alternating update computed entirely with log-sum-exp.
fn exact_log_update(f: &mut [f64], g: &mut [f64], p: &[f64], q: &[f64], c: &[f64], eps: f64) {
    let (s, t) = (p.len(), q.len());
    for a in 0..s {
        f[a] = eps * p[a].ln() - eps * log_sum_exp((0..t).map(|b| (g[b] - c[a * t + b]) / eps));
    }
    for b in 0..t {
        g[b] = eps * q[b].ln() - eps * log_sum_exp((0..s).map(|a| (f[a] - c[a * t + b]) / eps));
    }
}

/// Project an approximate coupling onto the exact transport polytope:
/// shrink rows and columns that carry too much mass, then spread the
/// remaining deficit as a rank-one correction.
pub fn round_to_marginals(plan: Vec<f64>, p: &[f64], q: &[f64]) -> Vec<f64> {
    round_scaled(plan, None, p, q)
}

/// [`round_to_marginals`] of `diag(u) plan diag(v)` when scalings are given.
fn round_scaled(mut plan: Vec<f64>, scale: Option<(&[f64], &[f64])>, p: &[f64], q: &[f64]) -> Vec<f64> {
    let (s, t) = (p.len(), q.len());
    let mut col = vec![0.0; t];
    for a in 0..s {
        let row = &mut plan[a * t..(a + 1) * t];
        if let Some((u, v)) = scale {
            let ua = u[a];
            row.iter_mut().zip(v).for_each(|(x, vb)| *x *= ua * vb);
        }
        let sum: f64 = row.iter().sum();
        if sum > p[a] {
            let x = p[a] / sum;
            row.iter_mut().for_each(|v| *v *= x);
        }
        col.iter_mut().zip(row.iter()).for_each(|(c, v)| *c += v);
    }
    let y: Vec<f64> = col
        .iter()
        .zip(q)
        .map(|(&c, &qb)| if c > qb { qb / c } else { 1.0 })
        .collect();
    let mut err_r = vec![0.0; s];
    let mut err_c = q.to_vec();
    for a in 0..s {
        let row = &mut plan[a * t..(a + 1) * t];
        let mut sum = 0.0;
        for ((x, yb), ec) in row.iter_mut().zip(&y).zip(err_c.iter_mut()) {
            *x *= yb;
            sum += *x;
            *ec -= *x;
        }
        err_r[a] = (p[a] - sum).max(0.0);
    }
    err_c.iter_mut().for_each(|v| *v = v.max(0.0));
    let total: f64 = err_r.iter().sum();
    if total > 0.0 {
        for a in 0..s {
            let w = err_r[a] / total;
            plan[a * t..(a + 1) * t]
                .iter_mut()
                .zip(&err_c)
                .for_each(|(x, ec)| *x += w * ec);
        }
    }
    plan
}
