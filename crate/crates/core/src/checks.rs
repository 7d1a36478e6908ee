//! Self-test suites behind the `ot-selftest` and `oracle-check` commands.
//! Each check compares a solver against an independent computation.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::catalog;
use crate::error::Result;
use crate::euler_sim;
use crate::gaussian_oracle::{self, GaussianLaw, DEFAULT_ODE_TOLERANCE};
use crate::rate_harness::sample_gaussian;
use crate::rng;
use crate::time_grid::TimeGrid;
use crate::wasserstein::{self, EmpiricalMeasure, EntropicOptions, TransportPlan};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub outcomes: Vec<CheckOutcome>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for o in &self.outcomes {
            s.push_str(&format!("[{}] {}: {}\n", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail));
        }
        let passed = self.outcomes.iter().filter(|o| o.passed).count();
        s.push_str(&format!("{}: {passed}/{} checks passed\n", self.suite, self.outcomes.len()));
        s
    }
}

fn outcome(name: &str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome { name: name.to_string(), passed, detail }
}

/// Minimum of `Σ|aᵢ - b_{π(i)}|^ρ` over all permutations (Heap's algorithm).
pub fn brute_force_cost(a: &EmpiricalMeasure, b: &EmpiricalMeasure, rho: f64) -> f64 {
    let n = a.len();
    let cost = |i: usize, j: usize| {
        a.point(i).iter().zip(b.point(j)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt().powf(rho)
    };
    let mut perm: Vec<usize> = (0..n).collect();
    let total = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| cost(i, j)).sum::<f64>();
    let mut best = total(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(total(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

fn random_cloud(r: &mut impl Rng, n: usize, d: usize, scale: f64) -> EmpiricalMeasure {
    let data = (0..n * d).map(|_| r.random_range(-scale..scale)).collect();
    EmpiricalMeasure::new(d, data).expect("finite cloud")
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE).max(1e-300)
}

/// Exact solver against factorial brute force on `trials` instances with
/// n ≤ 7, d = 2, ρ ∈ {1, 2, 3}; returns the worst relative error.
pub fn brute_force_agreement(trials: usize, seed: u64) -> Result<f64> {
    let base = rng::sub_seed(seed, "ot-brute-force");
    let errs = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::seeded(rng::indexed_seed(base, k as u64));
            let n = r.random_range(1..=7);
            let rho = [1.0, 2.0, 3.0][k % 3];
            let (a, b) = (random_cloud(&mut r, n, 2, 1.0), random_cloud(&mut r, n, 2, 1.0));
            let (w, _) = wasserstein::w_rho_exact(&a, &b, rho)?;
            let brute = (brute_force_cost(&a, &b, rho) / n as f64).powf(1.0 / rho);
            Ok(if brute == 0.0 { w } else { rel_err(w, brute) })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// `w_rho_1d` against the exact solver on one-dimensional clouds.
pub fn one_dim_agreement(trials: usize, seed: u64) -> Result<f64> {
    let mut r = rng::seeded(rng::sub_seed(seed, "ot-1d"));
    let mut worst = 0.0_f64;
    for k in 0..trials {
        let n = r.random_range(1..=40);
        let rho = [1.0, 1.5, 2.0, 3.0][k % 4];
        let a: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..3.0)).collect();
        let d1 = wasserstein::w_rho_1d(&a, &b, rho)?;
        let (ex, _) = wasserstein::w_rho_exact(&EmpiricalMeasure::from_scalars(&a)?, &EmpiricalMeasure::from_scalars(&b)?, rho)?;
        worst = worst.max(rel_err(ex, d1));
    }
    Ok(worst)
}

/// Metric axioms, ρ-monotonicity, translation and plan checks for the exact
/// solver, brute-force agreement, and the entropic upper bound.
pub fn ot_selftest(seed: u64, brute_force_trials: usize) -> Result<SuiteReport> {
    let mut out = Vec::new();
    let worst = brute_force_agreement(brute_force_trials, seed)?;
    out.push(outcome("brute-force", worst <= 1e-10, format!("{brute_force_trials} instances, worst relative error {worst:.2e} (limit 1e-10)")));
    let worst = one_dim_agreement(300, seed)?;
    out.push(outcome("1d-vs-exact", worst <= 1e-12, format!("300 instances, worst relative error {worst:.2e} (limit 1e-12)")));

    let mut r = rng::seeded(rng::sub_seed(seed, "ot-axioms"));
    let (mut sym, mut tri, mut ident, mut mono, mut trans) = (0.0_f64, 0usize, 0.0_f64, 0usize, 0.0_f64);
    let triples = 500;
    for k in 0..triples {
        let n = r.random_range(1..=64);
        let d = 1 + k % 3;
        let rho = [1.0, 2.0, 3.0][k % 3];
        let a = random_cloud(&mut r, n, d, 1.0);
        let b = random_cloud(&mut r, n, d, 1.5);
        let c = random_cloud(&mut r, n, d, 0.7);
        let ab = wasserstein::w_rho_exact(&a, &b, rho)?.0;
        let ba = wasserstein::w_rho_exact(&b, &a, rho)?.0;
        let bc = wasserstein::w_rho_exact(&b, &c, rho)?.0;
        let ac = wasserstein::w_rho_exact(&a, &c, rho)?.0;
        sym = sym.max(rel_err(ab, ba));
        tri += usize::from(ac > ab + bc + 1e-12 * (ab + bc));
        ident = ident.max(wasserstein::w_rho_exact(&a, &a, rho)?.0);
        if k < 100 {
            let ws: Vec<f64> = [1.0, 1.5, 2.0, 3.0, 4.0]
                .iter()
                .map(|&p| wasserstein::w_rho_exact(&a, &b, p).map(|x| x.0))
                .collect::<Result<_>>()?;
            mono += usize::from(ws.windows(2).any(|w| w[1] < w[0] * (1.0 - 1e-12)));
            let shift: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
            let moved = wasserstein::w_rho_exact(&a.translated(&shift)?, &b.translated(&shift)?, rho)?.0;
            trans = trans.max(rel_err(moved, ab).min((moved - ab).abs()));
        }
    }
    out.push(outcome("symmetry", sym <= 1e-12, format!("{triples} pairs, worst relative asymmetry {sym:.2e}")));
    out.push(outcome("identity", ident == 0.0, format!("largest W(A, A) = {ident:e}")));
    out.push(outcome("triangle", tri == 0, format!("{tri} violations over {triples} triples")));
    out.push(outcome("rho-monotone", mono == 0, format!("{mono} decreasing sequences over rho in {{1,1.5,2,3,4}}")));
    out.push(outcome("translation", trans <= 1e-9, format!("largest change under a common shift {trans:.2e}")));

    let a = random_cloud(&mut r, 2, 1, 1.0);
    let pair = EmpiricalMeasure::from_scalars(&[0.0, 2.0])?;
    let swap = wasserstein::plan_cost(&TransportPlan::Permutation(vec![1, 0]), &pair, &pair, 2.0)?;
    let id = wasserstein::plan_cost(&TransportPlan::Permutation(vec![0, 1]), &a, &a, 2.0)?;
    out.push(outcome("plan-cost", (swap - 2.0).abs() < 1e-15 && id == 0.0, format!("swap plan {swap}, identity plan {id}")));

    let mut worst_gap = f64::INFINITY;
    for _ in 0..20 {
        let n = r.random_range(5..=48);
        let (a, b) = (random_cloud(&mut r, n, 2, 1.0), random_cloud(&mut r, n, 2, 1.0));
        let exact = wasserstein::w_rho_exact(&a, &b, 2.0)?.0;
        let ent = wasserstein::w_rho_entropic(&a, &b, 2.0, EntropicOptions::default())?;
        worst_gap = worst_gap.min(ent.distance - exact);
    }
    out.push(outcome("entropic-upper-bound", worst_gap >= -1e-9, format!("smallest entropic - exact gap {worst_gap:.2e}")));
    Ok(SuiteReport { suite: "ot-selftest".into(), outcomes: out })
}

/// Empirical `w_rho_exact` between samples of two Gaussian laws together with
/// a percentile bootstrap half-width over the matched-pair costs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BuresComparison {
    pub oracle: f64,
    pub empirical: f64,
    pub ci_half_width: f64,
    pub passed: bool,
}

pub fn bures_vs_empirical(p: &GaussianLaw, q: &GaussianLaw, n: usize, seed: u64) -> Result<BuresComparison> {
    let oracle = gaussian_oracle::gaussian_w2(p, q)?;
    let xs = sample_gaussian(p, n, rng::indexed_seed(seed, 0));
    let ys = sample_gaussian(q, n, rng::indexed_seed(seed, 1));
    let (a, b) = (EmpiricalMeasure::from_matrix(&xs)?, EmpiricalMeasure::from_matrix(&ys)?);
    let (empirical, plan) = wasserstein::w_rho_exact(&a, &b, 2.0)?;
    let TransportPlan::Permutation(perm) = plan else { unreachable!("exact plans are permutations") };
    let costs: Vec<f64> = perm.iter().enumerate().map(|(i, &j)| (xs.row(i) - ys.row(j)).norm_squared()).collect();
    let mut r = rng::seeded(rng::sub_seed(seed, "bootstrap"));
    let mut boot: Vec<f64> = (0..1000)
        .map(|_| ((0..n).map(|_| costs[r.random_range(0..n)]).sum::<f64>() / n as f64).sqrt())
        .collect();
    boot.sort_by(f64::total_cmp);
    let ci_half_width = 0.5 * (boot[974] - boot[25]);
    let passed = (empirical - oracle).abs() <= 0.03 * oracle + ci_half_width;
    Ok(BuresComparison { oracle, empirical, ci_half_width, passed })
}

/// Five law pairs in d = 2.
pub fn bures_law_pairs() -> Result<Vec<(GaussianLaw, GaussianLaw)>> {
    let v = |x: &[f64]| nalgebra::DVector::from_row_slice(x);
    let m = |d: usize, x: &[f64]| DMatrix::from_row_slice(d, d, x);
    let ou = catalog::bures_2d();
    let grid = TimeGrid::uniform(ou.horizon(), 4)?;
    Ok(vec![
        (GaussianLaw::new(v(&[0.0, 0.0]), m(2, &[1.0, 0.0, 0.0, 1.0]))?, GaussianLaw::new(v(&[1.5, 0.0]), m(2, &[2.25, 0.0, 0.0, 1.0]))?),
        (GaussianLaw::new(v(&[0.0, 0.0]), m(2, &[1.0, 0.0, 0.0, 4.0]))?, GaussianLaw::new(v(&[0.0, 0.0]), m(2, &[1.0, 0.0, 0.0, 1.0]))?),
        (GaussianLaw::new(v(&[0.5, -1.0]), m(2, &[2.0, 0.8, 0.8, 1.0]))?, GaussianLaw::new(v(&[-0.5, 0.0]), m(2, &[0.6, -0.2, -0.2, 1.5]))?),
        (GaussianLaw::new(v(&[1.0, 1.0]), m(2, &[0.3, 0.0, 0.0, 0.3]))?, GaussianLaw::new(v(&[0.0, 0.0]), m(2, &[1.0, 0.9, 0.9, 1.0]))?),
        (
            gaussian_oracle::euler_marginal_law(&ou, &grid, 1.0)?,
            GaussianLaw::new(v(&[-0.5, 0.5]), m(2, &[0.5, 0.0, 0.0, 0.5]))?,
        ),
    ])
}

/// Monte Carlo moments of the Euler scheme against its Gaussian law, Bures
/// distance against empirical OT, and convergence of the Euler law.
pub fn oracle_check(seed: u64, paths: usize) -> Result<SuiteReport> {
    let mut out = Vec::new();

    let spec = catalog::const_ou(2);
    let grid = TimeGrid::uniform(spec.horizon(), 64)?;
    let batch = euler_sim::simulate_euler(&spec, &grid, &[0.5, 1.0], paths, rng::sub_seed(seed, "oracle-mc"))?;
    let mut worst_z = 0.0_f64;
    for &t in &[0.5, 1.0] {
        let law = gaussian_oracle::euler_marginal_law(&spec, &grid, t)?;
        let (mean, cov) = batch.moments(t)?;
        let n = paths as f64;
        for i in 0..2 {
            worst_z = worst_z.max((mean[i] - law.mean[i]).abs() / (law.cov[(i, i)] / n).sqrt());
            for j in 0..2 {
                let se = ((law.cov[(i, i)] * law.cov[(j, j)] + law.cov[(i, j)].powi(2)) / n).sqrt();
                worst_z = worst_z.max((cov[(i, j)] - law.cov[(i, j)]).abs() / se);
            }
        }
    }
    out.push(outcome("mc-vs-euler-law", worst_z <= 5.0, format!("const-ou N=64, {paths} paths, worst deviation {worst_z:.2} standard errors (limit 5)")));

    let pairs = bures_law_pairs()?;
    let cmp = pairs
        .iter()
        .enumerate()
        .map(|(k, (p, q))| bures_vs_empirical(p, q, 4000, rng::indexed_seed(rng::sub_seed(seed, "bures"), k as u64)))
        .collect::<Result<Vec<_>>>()?;
    for (k, c) in cmp.iter().enumerate() {
        out.push(outcome(
            &format!("bures-vs-empirical-{k}"),
            c.passed,
            format!("oracle {:.5}, empirical {:.5}, bootstrap half-width {:.5}", c.oracle, c.empirical, c.ci_half_width),
        ));
    }

    let ws = [16, 64, 256, 1024]
        .iter()
        .map(|&n| {
            let g = TimeGrid::uniform(1.0, n)?;
            let e = gaussian_oracle::euler_marginal_law(&spec, &g, 1.0)?;
            let s = gaussian_oracle::sde_marginal_law(&spec, 1.0, DEFAULT_ODE_TOLERANCE)?;
            gaussian_oracle::gaussian_w2(&e, &s)
        })
        .collect::<Result<Vec<f64>>>()?;
    out.push(outcome("euler-law-converges", ws.windows(2).all(|w| w[1] < w[0]), format!("W2 at T for N=16,64,256,1024: {:?}", ws.iter().map(|w| format!("{w:.3e}")).collect::<Vec<_>>())));

    let stable = gaussian_oracle::hermite_doubling_gap(&[(0.3, 1.2, 2.0), (-1.0, 0.4, 4.0), (2.0, 0.1, 6.0)]);
    out.push(outcome("hermite-doubling", stable < 1e-10, format!("largest relative change from 64 to 128 nodes {stable:.2e}")));
    Ok(SuiteReport { suite: "oracle-check".into(), outcomes: out })
}
