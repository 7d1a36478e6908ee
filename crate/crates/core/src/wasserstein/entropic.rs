//! Entropic optimal transport by log-domain Sinkhorn iterations.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::{check_pair, marginal_error, EmpiricalMeasure, ScaledCost, TransportPlan, PARALLEL_ROWS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct EntropicOptions {
    /// Regularization as a multiple of the median pairwise cost.
    pub epsilon_rel: f64,
    pub max_iter: usize,
    /// Stopping tolerance on the largest marginal deviation from `1/n`.
    pub tol: f64,
}

impl Default for EntropicOptions {
    fn default() -> Self {
        Self { epsilon_rel: 0.05, max_iter: 10_000, tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct EntropicResult {
    /// Cost of the returned coupling, to the power `1/ρ`; never below the exact distance.
    pub distance: f64,
    pub plan: TransportPlan,
    pub iterations: usize,
    /// Marginal deviation of the Sinkhorn iterate before rounding.
    pub marginal_error: f64,
    pub converged: bool,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `lse_i = log Σ_j exp((g_j - C_ij)/ε)` for every row (or column when `by_col`).
fn soft_min(cost: &ScaledCost, pot: &[f64], eps: f64, by_col: bool) -> Vec<f64> {
    let n = cost.n;
    let one = |i: usize| {
        let it = (0..n).map(move |j| {
            let c = if by_col { cost.at(j, i) } else { cost.at(i, j) };
            (pot[j] - c) / eps
        });
        log_sum_exp(it)
    };
    if n >= PARALLEL_ROWS {
        (0..n).into_par_iter().map(one).collect()
    } else {
        (0..n).map(one).collect()
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let mid = v.len() / 2;
    let (_, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Projects a nearly feasible plan onto the set of couplings with exact
/// marginals `1/n` (row and column down-scaling plus a rank-one correction).
fn round_to_coupling(mut p: DMatrix<f64>) -> DMatrix<f64> {
    let n = p.nrows();
    let target = 1.0 / n as f64;
    for i in 0..n {
        let s = p.row(i).sum();
        if s > target {
            p.row_mut(i).scale_mut(target / s);
        }
    }
    for j in 0..n {
        let s = p.column(j).sum();
        if s > target {
            p.column_mut(j).scale_mut(target / s);
        }
    }
    let er: Vec<f64> = (0..n).map(|i| (target - p.row(i).sum()).max(0.0)).collect();
    let ec: Vec<f64> = (0..n).map(|j| (target - p.column(j).sum()).max(0.0)).collect();
    let mass: f64 = er.iter().sum();
    if mass > 0.0 {
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] += er[i] * ec[j] / mass;
            }
        }
    }
    p
}

/// Entropic approximation of `W_ρ`. The Sinkhorn plan is rounded to an exact
/// coupling before its cost is reported, so the estimate is an upper bound
/// on the exact distance. Non-convergence is reported through
/// [`EntropicResult::converged`], not as an error.
pub fn w_rho_entropic(a: &EmpiricalMeasure, b: &EmpiricalMeasure, rho: f64, opts: EntropicOptions) -> Result<EntropicResult> {
    check_pair(a, b, rho)?;
    if !(opts.epsilon_rel > 0.0) || !(opts.tol > 0.0) {
        return Err(Error::invalid("epsilon and tolerance must be positive"));
    }
    let n = a.len();
    let cost = ScaledCost::new(a, b, rho);
    if cost.scale == 0.0 {
        let plan = DMatrix::identity(n, n) / n as f64;
        return Ok(EntropicResult {
            distance: 0.0,
            plan: TransportPlan::Coupling(plan),
            iterations: 0,
            marginal_error: 0.0,
            converged: true,
        });
    }
    let mut reference = median(&cost.values);
    if reference <= 0.0 {
        reference = cost.values.iter().sum::<f64>() / (n * n) as f64;
    }
    let eps = opts.epsilon_rel * reference;
    let log_mass = -(n as f64).ln();
    let target = 1.0 / n as f64;
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut iterations = 0;
    let mut err = f64::INFINITY;
    while iterations < opts.max_iter {
        let lse = soft_min(&cost, &g, eps, false);
        // row sums of the current iterate, whose columns are exact
        err = f.iter().zip(&lse).map(|(fi, l)| ((fi / eps + l).exp() - target).abs()).fold(0.0, f64::max);
        if iterations > 0 && err < opts.tol {
            break;
        }
        for (fi, l) in f.iter_mut().zip(&lse) {
            *fi = eps * (log_mass - l);
        }
        let lse = soft_min(&cost, &f, eps, true);
        for (gj, l) in g.iter_mut().zip(&lse) {
            *gj = eps * (log_mass - l);
        }
        iterations += 1;
    }
    let converged = err < opts.tol;
    let raw = DMatrix::from_fn(n, n, |i, j| ((f[i] + g[j] - cost.at(i, j)) / eps).exp());
    let plan = round_to_coupling(raw);
    debug_assert!(marginal_error(&plan) < 1e-12);
    let mean: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| plan[(i, j)] * cost.at(i, j)).sum();
    Ok(EntropicResult {
        distance: cost.distance(mean, rho),
        plan: TransportPlan::Coupling(plan),
        iterations,
        marginal_error: err,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wasserstein::{plan_cost, w_rho_exact};
    use rand::Rng;

    fn cloud(r: &mut impl Rng, n: usize, d: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new(d, (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn self_transport_is_near_diagonal() {
        let mut r = crate::rng::seeded(1);
        let a = cloud(&mut r, 40, 2);
        let res = w_rho_entropic(&a, &a, 2.0, EntropicOptions { epsilon_rel: 1e-3, ..Default::default() }).unwrap();
        assert!(res.converged);
        assert!(res.distance <= 0.05 * a.diameter(), "{}", res.distance);
    }

    #[test]
    fn upper_bound_and_monotone_in_epsilon() {
        let mut r = crate::rng::seeded(2);
        for trial in 0..6 {
            let n = 8 + 11 * trial;
            let (a, b) = (cloud(&mut r, n, 2), cloud(&mut r, n, 2));
            let exact = w_rho_exact(&a, &b, 2.0).unwrap().0;
            let mut prev = f64::INFINITY;
            let mut first_gap = None;
            for eps in [1.0, 0.3, 0.1, 0.03] {
                let res = w_rho_entropic(&a, &b, 2.0, EntropicOptions { epsilon_rel: eps, max_iter: 200_000, tol: 1e-8 }).unwrap();
                assert!(res.converged, "n={n} eps={eps} err={} it={}", res.marginal_error, res.iterations);
                assert!(res.distance >= exact - 1e-9, "n={n} eps={eps}");
                assert!(res.distance <= prev + 1e-7, "n={n} eps={eps}");
                assert!(super::marginal_error(match &res.plan {
                    TransportPlan::Coupling(m) => m,
                    _ => unreachable!(),
                }) < 1e-12);
                let pc = plan_cost(&res.plan, &a, &b, 2.0).unwrap();
                assert!((pc - res.distance).abs() < 1e-12);
                prev = res.distance;
                first_gap.get_or_insert(res.distance - exact);
            }
            assert!(prev - exact < 0.5 * first_gap.unwrap(), "n={n}");
        }
    }

    #[test]
    fn non_convergence_is_flagged() {
        let mut r = crate::rng::seeded(3);
        let (a, b) = (cloud(&mut r, 30, 2), cloud(&mut r, 30, 2));
        let res = w_rho_entropic(&a, &b, 2.0, EntropicOptions { epsilon_rel: 0.01, max_iter: 2, tol: 1e-14 }).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 2);
        assert!(res.distance.is_finite());
    }
}
