//! N-sweeps of the sup-in-time marginal-law distance between an Euler scheme
//! and a reference law, rate fitting, and envelope checks.

mod fit;

pub use fit::{
    bound_report, check_theorem_bound, envelope_ratios, fit_loglog, fit_power_law, BoundReport, ModelFit,
    PreferredModel, RateFitReport, BOOTSTRAP_RESAMPLES,
};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::euler_sim::{self, PathBatch};
use crate::gaussian_oracle::{self, GaussianLaw, DEFAULT_ODE_TOLERANCE};
use crate::linalg;
use crate::rng;
use crate::sde_model::{catalog, SdeSpec};
use crate::time_grid::{GridKind, TimeGrid};
use crate::wasserstein::{self, EmpiricalMeasure, EntropicOptions, TransportPlan};

/// Smallest fine/coarse step ratio accepted for a fine-Euler reference.
pub const MIN_REFINEMENT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Closed-form Gaussian distance; affine specs with ρ = 2 or d = 1.
    GaussianOracle,
    ExactOt,
    Entropic,
    #[serde(rename = "1d-exact")]
    OneDimExact,
}

impl Estimator {
    pub fn is_sampled(self) -> bool {
        self != Estimator::GaussianOracle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Reference {
    /// The exact SDE marginal (affine specs only).
    Oracle,
    /// The Euler scheme with `refinement × N` steps on the same grid family.
    FineEuler { refinement: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointSet {
    GridNodes,
    #[default]
    NodesAndMidpoints,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CheckpointPolicy {
    Named(CheckpointSet),
    Times(Vec<f64>),
}

impl Default for CheckpointPolicy {
    fn default() -> Self {
        CheckpointPolicy::Named(CheckpointSet::default())
    }
}

impl CheckpointPolicy {
    pub fn times(&self, grid: &TimeGrid) -> Vec<f64> {
        match self {
            CheckpointPolicy::Named(CheckpointSet::GridNodes) => grid.nodes().to_vec(),
            CheckpointPolicy::Named(CheckpointSet::NodesAndMidpoints) => grid.nodes_and_midpoints(),
            CheckpointPolicy::Times(t) => t.clone(),
        }
    }
}

fn default_paths() -> usize {
    1000
}

/// One rate experiment, as read from a TOML config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub sde: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub rho: f64,
    pub grid: GridKind,
    pub ns: Vec<usize>,
    pub reference: Reference,
    #[serde(default)]
    pub checkpoints: CheckpointPolicy,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub estimator: Estimator,
    #[serde(default)]
    pub entropic: EntropicOptions,
}

impl ExperimentSpec {
    /// Oracle-estimator experiment against the exact SDE law on uniform grids.
    pub fn oracle(sde: &str, gamma: Option<f64>, rho: f64, ns: Vec<usize>) -> Self {
        Self {
            sde: sde.to_string(),
            gamma,
            rho,
            grid: GridKind::Uniform,
            ns,
            reference: Reference::Oracle,
            checkpoints: CheckpointPolicy::default(),
            paths: default_paths(),
            seed: None,
            estimator: Estimator::GaussianOracle,
            entropic: EntropicOptions::default(),
        }
    }

    pub fn sde_spec(&self) -> Result<SdeSpec> {
        catalog::lookup(&self.sde, self.gamma)
    }

    /// Checks everything that does not require running the experiment.
    pub fn validate(&self) -> Result<SdeSpec> {
        let spec = self.sde_spec()?;
        if self.ns.len() < 2 || self.ns[0] == 0 || self.ns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("ns must be strictly increasing with at least 2 positive entries".into()));
        }
        if !(self.rho >= 1.0 && self.rho.is_finite()) {
            return Err(Error::Config(format!("rho must be >= 1, got {}", self.rho)));
        }
        if let GridKind::Power { beta } = self.grid {
            if !(beta > 1.0) {
                return Err(Error::Config(format!("power grid needs beta > 1, got {beta}")));
            }
        }
        match self.reference {
            Reference::FineEuler { refinement } if refinement < MIN_REFINEMENT => {
                return Err(Error::Config(format!("refinement must be >= {MIN_REFINEMENT}, got {refinement}")));
            }
            Reference::Oracle if spec.affine_part().is_none() => {
                return Err(Error::Config(format!("oracle reference needs an affine spec, '{}' is not", self.sde)));
            }
            _ => {}
        }
        let d = spec.dimension();
        match self.estimator {
            Estimator::GaussianOracle => {
                if spec.affine_part().is_none() {
                    return Err(Error::Config("gaussian-oracle estimator needs an affine spec".into()));
                }
                if self.rho != 2.0 && d != 1 {
                    return Err(Error::Config("gaussian-oracle estimator needs rho = 2 or d = 1".into()));
                }
            }
            Estimator::OneDimExact if d != 1 => {
                return Err(Error::Config(format!("1d-exact estimator needs d = 1, spec has d = {d}")));
            }
            _ => {}
        }
        if self.estimator.is_sampled() {
            if self.seed.is_none() {
                return Err(Error::Config("a seed is required for sampled estimators".into()));
            }
            if self.paths < 2 {
                return Err(Error::Config("paths must be at least 2".into()));
            }
        }
        if let CheckpointPolicy::Times(ts) = &self.checkpoints {
            if ts.is_empty() || ts.iter().any(|&t| !(0.0..=spec.horizon()).contains(&t)) {
                return Err(Error::Config("explicit checkpoints must lie in [0, T]".into()));
            }
        }
        Ok(spec)
    }

    fn grid(&self, horizon: f64, n: usize) -> Result<TimeGrid> {
        TimeGrid::build(self.grid, horizon, n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    /// Largest estimated distance over checkpoints.
    pub sup_w: f64,
    /// Standard error at the maximizing checkpoint (0 for oracle values).
    pub stderr: f64,
    pub t_argmax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupWCurve {
    pub points: Vec<CurvePoint>,
    pub experiment: ExperimentSpec,
    /// Caveat attached to sampled estimators.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SupWCurve {
    pub fn ns(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.n).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sup_w).collect()
    }

    /// `N,sup_w,stderr` rows with 17 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,sup_w,stderr")?;
        for p in &self.points {
            writeln!(w, "{},{:.16e},{:.16e}", p.n, p.sup_w, p.stderr)?;
        }
        Ok(())
    }
}

const SAMPLED_NOTE: &str = "empirical OT bias decays like n^(-1/d); quantitative rate checks rely on the Gaussian oracle, sampled estimates are a cross-validation for d <= 2";

/// Distance at one checkpoint with a standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

fn sup_of(points: &[PointEstimate]) -> PointEstimate {
    *points
        .iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least one checkpoint")
}

/// Oracle distance between the Euler law on `grid` and either the exact SDE law
/// (`reference = None`) or the Euler law on `reference`, at each checkpoint.
pub fn oracle_distances(
    spec: &SdeSpec,
    grid: &TimeGrid,
    reference: Option<&TimeGrid>,
    checkpoints: &[f64],
    rho: f64,
) -> Result<Vec<PointEstimate>> {
    let scheme = gaussian_oracle::euler_marginal_laws(spec, grid, checkpoints)?;
    let target = match reference {
        Some(r) => gaussian_oracle::euler_marginal_laws(spec, r, checkpoints)?,
        None => gaussian_oracle::sde_marginal_laws(spec, checkpoints, DEFAULT_ODE_TOLERANCE)?,
    };
    checkpoints
        .par_iter()
        .zip(scheme.par_iter().zip(&target))
        .map(|(&t, (p, q))| {
            let value = if rho == 2.0 { gaussian_oracle::gaussian_w2(p, q)? } else { gaussian_oracle::gaussian_w_rho_1d(p, q, rho)? };
            Ok(PointEstimate { t, value, stderr: 0.0 })
        })
        .collect()
}

/// `n` i.i.d. draws from a Gaussian law, one per row.
pub fn sample_gaussian(law: &GaussianLaw, n: usize, seed: u64) -> DMatrix<f64> {
    let (root, _) = linalg::sqrt_psd_clamped(&law.cov);
    let d = law.dim();
    let mut r = rng::seeded(seed);
    let mut out = DMatrix::zeros(n, d);
    for i in 0..n {
        let z = DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal));
        let x = &law.mean + &root * z;
        out.set_row(i, &x.transpose());
    }
    out
}

/// Per-sample transport costs whose mean is the plan cost.
fn row_costs(plan: &TransportPlan, a: &EmpiricalMeasure, b: &EmpiricalMeasure, rho: f64) -> Vec<f64> {
    let dist = |i: usize, j: usize| {
        a.point(i).iter().zip(b.point(j)).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt().powf(rho)
    };
    match plan {
        TransportPlan::Permutation(p) => p.iter().enumerate().map(|(i, &j)| dist(i, j)).collect(),
        TransportPlan::Coupling(m) => {
            let n = a.len() as f64;
            (0..a.len()).map(|i| n * (0..b.len()).map(|j| m[(i, j)] * dist(i, j)).sum::<f64>()).collect()
        }
    }
}

/// Empirical distance between two equal-size clouds with a jackknife error
/// over the per-sample costs of the optimal plan.
pub fn empirical_distance(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    rho: f64,
    estimator: Estimator,
    opts: &EntropicOptions,
) -> Result<(f64, f64)> {
    let (ma, mb) = (EmpiricalMeasure::from_matrix(a)?, EmpiricalMeasure::from_matrix(b)?);
    let plan = match estimator {
        Estimator::ExactOt => wasserstein::w_rho_exact(&ma, &mb, rho)?.1,
        Estimator::Entropic => {
            let res = wasserstein::w_rho_entropic(&ma, &mb, rho, *opts)?;
            if !res.converged {
                log::warn!("Sinkhorn stopped at marginal error {:e}; the rounded plan is still a coupling", res.marginal_error);
            }
            res.plan
        }
        Estimator::OneDimExact => {
            let value = wasserstein::w_rho_1d(a.as_slice(), b.as_slice(), rho)?;
            let mut xa: Vec<f64> = a.as_slice().to_vec();
            let mut xb: Vec<f64> = b.as_slice().to_vec();
            xa.sort_by(f64::total_cmp);
            xb.sort_by(f64::total_cmp);
            let costs: Vec<f64> = xa.iter().zip(&xb).map(|(x, y)| (x - y).abs().powf(rho)).collect();
            let se = euler_sim::power_mean_with_jackknife(&costs, rho).stderr;
            return Ok((value, se));
        }
        Estimator::GaussianOracle => return Err(Error::invalid("oracle estimator does not sample")),
    };
    let costs = row_costs(&plan, &ma, &mb, rho);
    let e = euler_sim::power_mean_with_jackknife(&costs, rho);
    Ok((e.value, e.stderr))
}

fn cloud_seed(seed: u64, n: usize, role: u64) -> u64 {
    rng::indexed_seed(rng::sub_seed(seed, "simulation"), ((n as u64) << 1) | role)
}

fn sampled_distances(exp: &ExperimentSpec, spec: &SdeSpec, n: usize, checkpoints: &[f64]) -> Result<Vec<PointEstimate>> {
    let seed = exp.seed.ok_or_else(|| Error::Config("a seed is required for sampled estimators".into()))?;
    let grid = exp.grid(spec.horizon(), n)?;
    let scheme = euler_sim::simulate_euler(spec, &grid, checkpoints, exp.paths, cloud_seed(seed, n, 0))?;
    let ref_seed = cloud_seed(seed, n, 1);
    let reference: Vec<DMatrix<f64>> = match exp.reference {
        Reference::FineEuler { refinement } => {
            let fine = exp.grid(spec.horizon(), n * refinement)?;
            let batch: PathBatch = euler_sim::simulate_euler(spec, &fine, checkpoints, exp.paths, ref_seed)?;
            checkpoints.iter().map(|&t| batch.at(t).cloned()).collect::<Result<_>>()?
        }
        Reference::Oracle => {
            let laws = gaussian_oracle::sde_marginal_laws(spec, checkpoints, DEFAULT_ODE_TOLERANCE)?;
            laws.iter()
                .enumerate()
                .map(|(k, law)| sample_gaussian(law, exp.paths, rng::indexed_seed(ref_seed, k as u64)))
                .collect()
        }
    };
    checkpoints
        .par_iter()
        .zip(reference.par_iter())
        .map(|(&t, y)| {
            let x = scheme.at(t)?;
            let (value, stderr) = empirical_distance(x, y, exp.rho, exp.estimator, &exp.entropic)?;
            Ok(PointEstimate { t, value, stderr })
        })
        .collect()
}

fn sweep_point(exp: &ExperimentSpec, spec: &SdeSpec, n: usize) -> Result<CurvePoint> {
    let grid = exp.grid(spec.horizon(), n)?;
    let checkpoints = exp.checkpoints.times(&grid);
    let estimates = if exp.estimator.is_sampled() {
        sampled_distances(exp, spec, n, &checkpoints)?
    } else {
        let fine = match exp.reference {
            Reference::FineEuler { refinement } => Some(exp.grid(spec.horizon(), n * refinement)?),
            Reference::Oracle => None,
        };
        oracle_distances(spec, &grid, fine.as_ref(), &checkpoints, exp.rho)?
    };
    let best = sup_of(&estimates);
    if !best.value.is_finite() {
        return Err(Error::invalid(format!("non-finite distance at t={}", best.t)));
    }
    Ok(CurvePoint { n, sup_w: best.value, stderr: best.stderr, t_argmax: best.t })
}

/// For each N: the largest distance over checkpoints between the N-step
/// scheme and the reference. Errors carry the offending N.
pub fn run_marginal_sweep(exp: &ExperimentSpec) -> Result<SupWCurve> {
    let spec = exp.validate()?;
    let points = exp
        .ns
        .par_iter()
        .map(|&n| sweep_point(exp, &spec, n).map_err(|e| e.at_n(n)))
        .collect::<Result<Vec<_>>>()?;
    let note = exp.estimator.is_sampled().then(|| SAMPLED_NOTE.to_string());
    Ok(SupWCurve { points, experiment: exp.clone(), note })
}

/// For each N: the sup over checkpoints of the synchronous-coupling strong
/// error `E^{1/ρ}|X̄ᴺ - X̄ʳᴺ|^ρ` against the fine-Euler reference. It bounds
/// the marginal-law distance from above.
pub fn run_strong_sweep(exp: &ExperimentSpec) -> Result<SupWCurve> {
    let spec = exp.validate()?;
    let Reference::FineEuler { refinement } = exp.reference else {
        return Err(Error::Config("strong sweep needs a fine-euler reference".into()));
    };
    let seed = exp.seed.ok_or_else(|| Error::Config("a seed is required for the strong sweep".into()))?;
    let points = exp
        .ns
        .iter()
        .map(|&n| {
            let run = || -> Result<CurvePoint> {
                let coarse = exp.grid(spec.horizon(), n)?;
                let fine = exp.grid(spec.horizon(), n * refinement)?;
                let cps = exp.checkpoints.times(&coarse);
                let (a, b) = euler_sim::simulate_coupled(&spec, &coarse, &fine, &cps, exp.paths, cloud_seed(seed, n, 0))?;
                let est = cps
                    .iter()
                    .map(|&t| {
                        let e = euler_sim::strong_error_estimate(&a, &b, t, exp.rho)?;
                        Ok(PointEstimate { t, value: e.value, stderr: e.stderr })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let best = sup_of(&est);
                Ok(CurvePoint { n, sup_w: best.value, stderr: best.stderr, t_argmax: best.t })
            };
            run().map_err(|e| e.at_n(n))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SupWCurve { points, experiment: exp.clone(), note: None })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagIntegralRow {
    pub n: usize,
    pub uniform: f64,
    pub power: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridComparison {
    pub beta: f64,
    pub uniform: SupWCurve,
    pub power: SupWCurve,
    pub uniform_fit: RateFitReport,
    pub power_fit: RateFitReport,
    /// Uniform grid envelope, with the `√ln N` factor when γ = 1.
    pub uniform_bound: BoundReport,
    /// Power grid envelope, never with the log factor.
    pub power_bound: BoundReport,
    pub lag_integrals: Vec<LagIntegralRow>,
}

impl GridComparison {
    /// `N,uniform,power` rows of the step-lag integral.
    pub fn write_lag_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "N,uniform,power")?;
        for r in &self.lag_integrals {
            writeln!(w, "{},{:.16e},{:.16e}", r.n, r.uniform, r.power)?;
        }
        Ok(())
    }
}

/// Runs `base` on a uniform grid and on the power grid with exponent `beta`,
/// sharing every seed.
pub fn compare_grids(base: &ExperimentSpec, beta: f64) -> Result<GridComparison> {
    let uniform_exp = ExperimentSpec { grid: GridKind::Uniform, ..base.clone() };
    let power_exp = ExperimentSpec { grid: GridKind::Power { beta }, ..base.clone() };
    let spec = power_exp.validate()?;
    let gamma = spec.holder_exponent();
    let uniform = run_marginal_sweep(&uniform_exp)?;
    let power = run_marginal_sweep(&power_exp)?;
    let fit_seed = base.seed.unwrap_or(0);
    let lag_integrals = base
        .ns
        .iter()
        .map(|&n| {
            Ok(LagIntegralRow {
                n,
                uniform: TimeGrid::uniform(spec.horizon(), n)?.step_lag_integral(),
                power: TimeGrid::power(spec.horizon(), n, beta)?.step_lag_integral(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridComparison {
        beta,
        uniform_fit: fit_loglog(&uniform, fit_seed)?,
        power_fit: fit_loglog(&power, fit_seed)?,
        uniform_bound: check_theorem_bound(&uniform, gamma, true)?,
        power_bound: check_theorem_bound(&power, gamma, false)?,
        uniform,
        power,
        lag_integrals,
    })
}

#[cfg(test)]
mod tests;
