//! Exact transport cost by linear programming, for small supports only.
//! Serves as the reference against which the regularized solver is checked.

use crate::error::{Error, Result};
use crate::geometry::CostMatrix;
use crate::lse::StateDistribution;

/// Largest union support accepted by [`exact_w1`].
pub const EXACT_SUPPORT_LIMIT: usize = 12;

const PIVOT_TOL: f64 = 1e-12;

/// Optimal `min <Q, C>` over couplings of `start` and `end`.
pub fn exact_w1(
    start: &StateDistribution,
    end: &StateDistribution,
    cost: &CostMatrix,
) -> Result<f64> {
    let mut union: Vec<usize> = start
        .support()
        .iter()
        .chain(end.support())
        .copied()
        .collect();
    union.sort_unstable();
    union.dedup();
    if union.len() > EXACT_SUPPORT_LIMIT {
        return Err(Error::SupportTooLarge {
            got: union.len(),
            limit: EXACT_SUPPORT_LIMIT,
        });
    }
    let (rows, cols) = (start.support(), end.support());
    let (s, t) = (rows.len(), cols.len());
    let nv = s * t;
    // row-marginal constraints, then all but the last column constraint
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..s {
        let mut row = vec![0.0; nv];
        row[i * t..(i + 1) * t].iter_mut().for_each(|v| *v = 1.0);
        a.push(row);
        b.push(start.mass()[i]);
    }
    for j in 0..t.saturating_sub(1) {
        let mut row = vec![0.0; nv];
        for i in 0..s {
            row[i * t + j] = 1.0;
        }
        a.push(row);
        b.push(end.mass()[j]);
    }
    let c: Vec<f64> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&k| cost.get(r, k)))
        .collect();
    Ok(simplex_min(a, b, &c))
}

/// Two-phase tableau simplex with Bland's rule for
/// `min c.x  s.t.  A x = b, x >= 0` where `b >= 0` and the problem is
/// feasible and bounded (always true for transport problems).
fn simplex_min(a: Vec<Vec<f64>>, b: Vec<f64>, c: &[f64]) -> f64 {
    let m = a.len();
    let nv = c.len();
    let width = nv + m + 1;
    let mut tab: Vec<Vec<f64>> = a
        .into_iter()
        .zip(&b)
        .enumerate()
        .map(|(i, (mut row, &bi))| {
            row.resize(width, 0.0);
            row[nv + i] = 1.0;
            row[width - 1] = bi;
            row
        })
        .collect();
    let mut basis: Vec<usize> = (nv..nv + m).collect();

    // phase 1: minimize the sum of artificials
    let mut phase1 = vec![0.0; nv + m];
    phase1[nv..].iter_mut().for_each(|v| *v = 1.0);
    run_simplex(&mut tab, &mut basis, &phase1, nv + m);

    // pivot remaining artificials out where possible
    for r in 0..m {
        if basis[r] >= nv {
            if let Some(col) = (0..nv).find(|&j| tab[r][j].abs() > PIVOT_TOL) {
                pivot(&mut tab, &mut basis, r, col);
            }
        }
    }

    let mut phase2 = c.to_vec();
    phase2.resize(nv + m, 0.0);
    run_simplex(&mut tab, &mut basis, &phase2, nv);
    basis
        .iter()
        .enumerate()
        .map(|(r, &j)| phase2[j] * tab[r][width - 1])
        .sum()
}

fn run_simplex(tab: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], enter_limit: usize) {
    let m = tab.len();
    let rhs = tab.first().map_or(0, |r| r.len() - 1);
    loop {
        // Bland: lowest-index column with negative reduced cost
        let entering = (0..enter_limit).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let reduced = cost[j] - (0..m).map(|r| cost[basis[r]] * tab[r][j]).sum::<f64>();
            reduced < -PIVOT_TOL
        });
        let Some(col) = entering else { return };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            if tab[r][col] > PIVOT_TOL {
                let ratio = tab[r][rhs] / tab[r][col];
                let better = match leave {
                    None => true,
                    Some((lr, best)) => {
                        ratio < best - PIVOT_TOL
                            || (ratio <= best + PIVOT_TOL && basis[r] < basis[lr])
                    }
                };
                if better {
                    leave = Some((r, ratio));
                }
            }
        }
        match leave {
            Some((r, _)) => pivot(tab, basis, r, col),
            None => return, // unbounded; cannot happen for transport problems
        }
    }
}

fn pivot(tab: &mut [Vec<f64>], basis: &mut [usize], row: usize, col: usize) {
    let p = tab[row][col];
    tab[row].iter_mut().for_each(|v| *v /= p);
    let pivot_row = tab[row].clone();
    for (r, other) in tab.iter_mut().enumerate() {
        if r != row {
            let factor = other[col];
            if factor != 0.0 {
                other
                    .iter_mut()
                    .zip(&pivot_row)
                    .for_each(|(v, pv)| *v -= factor * pv);
            }
        }
    }
    basis[row] = col;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::DenseMatrix;

    fn path_cost(n: usize) -> CostMatrix {
        CostMatrix::from_matrix(DenseMatrix::from_fn(n, n, |i, j| {
            (i as f64 - j as f64).abs()
        }))
        .unwrap()
    }

    #[test]
    fn identical_distributions_cost_zero() {
        let p = StateDistribution::new(vec![(0, 0.3), (1, 0.3), (2, 0.4)]).unwrap();
        assert!(exact_w1(&p, &p, &path_cost(3)).unwrap().abs() < 1e-12);
    }

    #[test]
    fn deltas_cost_ground_distance() {
        let a = StateDistribution::point_mass(0);
        let b = StateDistribution::point_mass(2);
        assert!((exact_w1(&a, &b, &path_cost(3)).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn half_shift_on_a_path() {
        let p = StateDistribution::new(vec![(0, 0.5), (1, 0.5)]).unwrap();
        let q = StateDistribution::new(vec![(1, 0.5), (2, 0.5)]).unwrap();
        assert!((exact_w1(&p, &q, &path_cost(3)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_support_rejected() {
        let p = StateDistribution::new((0..7).map(|i| (i, 1.0 / 7.0)).collect()).unwrap();
        let q = StateDistribution::new((7..14).map(|i| (i, 1.0 / 7.0)).collect()).unwrap();
        assert!(matches!(
            exact_w1(&p, &q, &path_cost(14)),
            Err(Error::SupportTooLarge { got: 14, .. })
        ));
    }
}
