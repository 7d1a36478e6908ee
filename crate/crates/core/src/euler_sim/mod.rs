//! Euler scheme simulation on a shared, counter-based Brownian lattice.
//!
//! Between grid nodes the scheme is evaluated through its continuous
//! extension `X̄_t = X̄_τ + b(τ, X̄_τ)(t-τ) + σ(τ, X̄_τ)(W_t - W_τ)`, where the
//! Brownian increment is carved out of the lattice, never interpolated.

mod export;

pub use export::{read_columnar, COLUMNAR_MAGIC};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{self, NormalStream};
use crate::sde_model::SdeSpec;
use crate::time_grid::{GridKind, TimeGrid};

/// Relative tolerance used to identify lattice times with grid nodes and checkpoints.
const TIME_TOL: f64 = 1e-12;

/// Brownian increments over a fixed set of lattice times, addressed by
/// `(seed, path, step)`. Increments are generated on demand; nothing is stored.
#[derive(Debug, Clone)]
pub struct BrownianLattice {
    times: Vec<f64>,
    dim: usize,
    seed: u64,
}

impl BrownianLattice {
    /// Lattice on explicit sorted times starting at 0.
    pub fn new(times: Vec<f64>, dim: usize, seed: u64) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::invalid("lattice needs at least two times starting at 0"));
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("lattice times must be strictly increasing"));
        }
        if dim == 0 {
            return Err(Error::invalid("lattice dimension must be positive"));
        }
        Ok(Self { times, dim, seed })
    }

    /// Smallest lattice containing every grid node and every checkpoint.
    pub fn covering(grids: &[&TimeGrid], checkpoints: &[f64], dim: usize, seed: u64) -> Result<Self> {
        let horizon = grids
            .first()
            .ok_or_else(|| Error::invalid("at least one grid is required"))?
            .horizon();
        let tol = TIME_TOL * horizon;
        let mut all: Vec<f64> = grids.iter().flat_map(|g| g.nodes().iter().copied()).collect();
        for &t in checkpoints {
            if !(0.0..=horizon).contains(&t) {
                return Err(Error::TimeOutOfRange { t, horizon });
            }
            all.push(t);
        }
        all.sort_by(f64::total_cmp);
        let mut times: Vec<f64> = Vec::with_capacity(all.len());
        for t in all {
            match times.last() {
                Some(&last) if t - last <= tol => {}
                _ => times.push(t),
            }
        }
        Self::new(times, dim, seed)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Lattice index of `t`, matched to `1e-12·T`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = TIME_TOL * self.times[self.times.len() - 1];
        let i = self.times.partition_point(|&v| v < t - tol);
        (i < self.times.len() && (self.times[i] - t).abs() <= tol).then_some(i)
    }

    fn stream(&self, path: usize) -> NormalStream {
        NormalStream::new(self.seed, path as u64, self.dim)
    }

    /// Increment `W_{s_{k+1}} - W_{s_k}` of `path` over lattice step `step`.
    pub fn increment(&self, path: usize, step: usize, out: &mut [f64]) {
        let mut s = self.stream(path);
        s.fill(step as u64, out);
        let sd = (self.times[step + 1] - self.times[step]).sqrt();
        out.iter_mut().for_each(|v| *v *= sd);
    }

    /// All increments of `path`, step-major (`steps × dim`).
    pub fn path_increments(&self, path: usize) -> Vec<f64> {
        let mut s = self.stream(path);
        let mut out = vec![0.0; self.steps() * self.dim];
        for (k, chunk) in out.chunks_mut(self.dim).enumerate() {
            s.fill(k as u64, chunk);
            let sd = (self.times[k + 1] - self.times[k]).sqrt();
            chunk.iter_mut().for_each(|v| *v *= sd);
        }
        out
    }
}

/// Where a batch came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub spec_id: String,
    pub grid: GridKind,
    pub steps: usize,
    pub seed: u64,
}

/// Euler states at checkpoint times: one `n_paths × d` matrix per checkpoint.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub times: Vec<f64>,
    pub states: Vec<DMatrix<f64>>,
    pub provenance: Provenance,
}

impl PathBatch {
    pub fn n_paths(&self) -> usize {
        self.states.first().map_or(0, |m| m.nrows())
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |m| m.ncols())
    }

    pub fn checkpoint_index(&self, t: f64) -> Option<usize> {
        let tol = TIME_TOL * self.times.last().copied().unwrap_or(1.0).max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }

    /// States at checkpoint `t`.
    pub fn at(&self, t: f64) -> Result<&DMatrix<f64>> {
        self.checkpoint_index(t)
            .map(|i| &self.states[i])
            .ok_or(Error::MissingCheckpoint(t))
    }

    /// Sample mean and (unbiased) covariance of the states at `t`.
    pub fn moments(&self, t: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let x = self.at(t)?;
        let n = x.nrows() as f64;
        let mean = x.row_mean().transpose();
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - mean[j]);
        let cov = centered.transpose() * &centered / (n - 1.0);
        Ok((mean, cov))
    }
}

/// First-variation matrices `Ē_{0,t}` at checkpoints: `matrices[c][p]`.
#[derive(Debug, Clone)]
pub struct FirstVariationBatch {
    pub times: Vec<f64>,
    pub matrices: Vec<Vec<DMatrix<f64>>>,
    pub provenance: Provenance,
}

impl FirstVariationBatch {
    pub fn at(&self, t: f64) -> Result<&[DMatrix<f64>]> {
        let tol = TIME_TOL * self.times.last().copied().unwrap_or(1.0).max(1.0);
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= tol)
            .map(|i| self.matrices[i].as_slice())
            .ok_or(Error::MissingCheckpoint(t))
    }
}

/// `(E|X̃_t - X̄_t|^ρ)^{1/ρ}` with its jackknife standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrongError {
    pub value: f64,
    pub stderr: f64,
}

fn sorted_checkpoints(checkpoints: &[f64], horizon: f64) -> Result<Vec<f64>> {
    let mut cps = checkpoints.to_vec();
    if let Some(&t) = cps.iter().find(|t| !(0.0..=horizon).contains(*t)) {
        return Err(Error::TimeOutOfRange { t, horizon });
    }
    cps.sort_by(f64::total_cmp);
    cps.dedup_by(|a, b| (*a - *b).abs() <= TIME_TOL * horizon);
    Ok(cps)
}

/// Lattice indices of a grid's nodes and of the checkpoints.
struct GridPlan {
    node_idx: Vec<usize>,
}

impl GridPlan {
    fn new(grid: &TimeGrid, lattice: &BrownianLattice) -> Self {
        let node_idx = grid
            .nodes()
            .iter()
            .map(|&t| lattice.index_of(t).expect("lattice covers grid nodes"))
            .collect();
        Self { node_idx }
    }
}

struct PathOutput {
    states: Vec<f64>,
    variation: Vec<DMatrix<f64>>,
}

/// One-step first-variation factor `I + h ∇b + σ'ΔW` with
/// `(∇b)_{kj} = ∂_k b_j` and `(σ'ΔW)_{kj} = Σ_l ∂_k σ_{jl} ΔW_l`.
fn variation_factor(jac: &DMatrix<f64>, dsigma: &[DMatrix<f64>], h: f64, dw: &DVector<f64>) -> DMatrix<f64> {
    let d = jac.nrows();
    let mut f = DMatrix::identity(d, d) + jac.transpose() * h;
    for (k, ds) in dsigma.iter().enumerate() {
        let row = ds * dw;
        for j in 0..d {
            f[(k, j)] += row[j];
        }
    }
    f
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    spec: &SdeSpec,
    grid: &TimeGrid,
    plan: &GridPlan,
    lattice: &BrownianLattice,
    incs: &[f64],
    checkpoint_idx: &[usize],
    path: usize,
    with_variation: bool,
) -> Result<PathOutput> {
    let d = spec.dimension();
    let lt = lattice.times();
    let mut x = spec.initial_point().clone();
    let mut e = DMatrix::<f64>::identity(d, d);
    let mut states = Vec::with_capacity(checkpoint_idx.len() * d);
    let mut variation = Vec::new();
    let mut next_cp = 0;
    let mut dw = DVector::<f64>::zeros(d);
    let last = *plan.node_idx.last().unwrap();

    for k in 0..grid.steps() {
        let (i0, i1) = (plan.node_idx[k], plan.node_idx[k + 1]);
        let tk = grid.nodes()[k];
        let b = spec.drift(tk, &x);
        let s = spec.diffusion(tk, &x);
        let (jac, dsig) = if with_variation {
            (spec.drift_jacobian(tk, &x), spec.diffusion_derivative(tk, &x))
        } else {
            (DMatrix::zeros(0, 0), Vec::new())
        };
        dw.fill(0.0);
        let mut j = i0;
        loop {
            while next_cp < checkpoint_idx.len() && checkpoint_idx[next_cp] == j && j < i1 {
                let h = lt[j] - tk;
                let xt = &x + &b * h + &s * &dw;
                if !xt.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFiniteState { path, t: lt[j] });
                }
                states.extend(xt.iter());
                if with_variation {
                    let et = &e * variation_factor(&jac, &dsig, h, &dw);
                    if !et.iter().all(|v| v.is_finite()) {
                        return Err(Error::NonFiniteState { path, t: lt[j] });
                    }
                    variation.push(et);
                }
                next_cp += 1;
            }
            if j == i1 {
                break;
            }
            for (acc, inc) in dw.iter_mut().zip(&incs[j * d..(j + 1) * d]) {
                *acc += inc;
            }
            j += 1;
        }
        let h = grid.step_len(k);
        if with_variation {
            e = &e * variation_factor(&jac, &dsig, h, &dw);
        }
        x = &x + &b * h + &s * &dw;
        if !x.iter().all(|v| v.is_finite()) || (with_variation && !e.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFiniteState { path, t: grid.nodes()[k + 1] });
        }
    }
    while next_cp < checkpoint_idx.len() && checkpoint_idx[next_cp] == last {
        states.extend(x.iter());
        if with_variation {
            variation.push(e.clone());
        }
        next_cp += 1;
    }
    debug_assert_eq!(next_cp, checkpoint_idx.len());
    Ok(PathOutput { states, variation })
}

struct Simulated {
    batches: Vec<PathBatch>,
    variations: Vec<Option<FirstVariationBatch>>,
}

fn simulate_grids(
    spec: &SdeSpec,
    grids: &[&TimeGrid],
    checkpoints: &[f64],
    n_paths: usize,
    seed: u64,
    with_variation: bool,
) -> Result<Simulated> {
    if n_paths == 0 {
        return Err(Error::invalid("n_paths must be positive"));
    }
    for g in grids {
        if (g.horizon() - spec.horizon()).abs() > TIME_TOL * spec.horizon() {
            return Err(Error::invalid("grid horizon differs from the SDE horizon"));
        }
    }
    let d = spec.dimension();
    let cps = sorted_checkpoints(checkpoints, spec.horizon())?;
    let lattice = BrownianLattice::covering(grids, &cps, d, rng::sub_seed(seed, "simulation"))?;
    let cp_idx: Vec<usize> = cps
        .iter()
        .map(|&t| lattice.index_of(t).expect("lattice covers checkpoints"))
        .collect();
    let plans: Vec<GridPlan> = grids.iter().map(|g| GridPlan::new(g, &lattice)).collect();

    let per_path: Vec<Result<Vec<PathOutput>>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let incs = lattice.path_increments(p);
            grids
                .iter()
                .zip(&plans)
                .map(|(g, plan)| run_path(spec, g, plan, &lattice, &incs, &cp_idx, p, with_variation))
                .collect()
        })
        .collect();
    let mut outputs = Vec::with_capacity(n_paths);
    for r in per_path {
        outputs.push(r?);
    }

    let mut batches = Vec::with_capacity(grids.len());
    let mut variations = Vec::with_capacity(grids.len());
    for (gi, g) in grids.iter().enumerate() {
        let provenance = Provenance {
            spec_id: spec.id().to_string(),
            grid: g.kind(),
            steps: g.steps(),
            seed,
        };
        let states = (0..cps.len())
            .map(|c| DMatrix::from_fn(n_paths, d, |p, j| outputs[p][gi].states[c * d + j]))
            .collect();
        batches.push(PathBatch { times: cps.clone(), states, provenance: provenance.clone() });
        variations.push(with_variation.then(|| FirstVariationBatch {
            times: cps.clone(),
            matrices: (0..cps.len())
                .map(|c| (0..n_paths).map(|p| outputs[p][gi].variation[c].clone()).collect())
                .collect(),
            provenance,
        }));
    }
    Ok(Simulated { batches, variations })
}

/// Simulates `n_paths` Euler paths of `spec` on `grid` and records the
/// continuous-time scheme at `checkpoints` (sorted and de-duplicated).
/// Deterministic in `(spec, grid, checkpoints, seed)`; a given path does not
/// depend on `n_paths` or on the thread count.
pub fn simulate_euler(spec: &SdeSpec, grid: &TimeGrid, checkpoints: &[f64], n_paths: usize, seed: u64) -> Result<PathBatch> {
    let mut sim = simulate_grids(spec, &[grid], checkpoints, n_paths, seed, false)?;
    Ok(sim.batches.remove(0))
}

fn require_refinement(coarse: &TimeGrid, fine: &TimeGrid) -> Result<()> {
    if fine.refines(coarse) {
        Ok(())
    } else {
        Err(Error::NotRefining { coarse: coarse.steps(), fine: fine.steps() })
    }
}

/// Coarse and fine schemes driven by the same Brownian lattice; coarse
/// increments are sums of fine increments.
pub fn simulate_coupled(
    spec: &SdeSpec,
    coarse: &TimeGrid,
    fine: &TimeGrid,
    checkpoints: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<(PathBatch, PathBatch)> {
    require_refinement(coarse, fine)?;
    let mut sim = simulate_grids(spec, &[coarse, fine], checkpoints, n_paths, seed, false)?;
    let f = sim.batches.pop().unwrap();
    let c = sim.batches.pop().unwrap();
    Ok((c, f))
}

/// Euler first-variation process: per step `Ē ← Ē·(I + ∇b h + σ'ΔW)`.
pub fn simulate_first_variation(
    spec: &SdeSpec,
    grid: &TimeGrid,
    checkpoints: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<FirstVariationBatch> {
    let mut sim = simulate_grids(spec, &[grid], checkpoints, n_paths, seed, true)?;
    Ok(sim.variations.remove(0).unwrap())
}

/// Coarse and fine first-variation processes on a shared lattice.
pub fn simulate_coupled_first_variation(
    spec: &SdeSpec,
    coarse: &TimeGrid,
    fine: &TimeGrid,
    checkpoints: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<(FirstVariationBatch, FirstVariationBatch)> {
    require_refinement(coarse, fine)?;
    let mut sim = simulate_grids(spec, &[coarse, fine], checkpoints, n_paths, seed, true)?;
    let f = sim.variations.pop().unwrap().unwrap();
    let c = sim.variations.pop().unwrap().unwrap();
    Ok((c, f))
}

/// `(mean cᵢ)^{1/ρ}` with a leave-one-out jackknife standard error.
pub(crate) fn power_mean_with_jackknife(costs: &[f64], rho: f64) -> StrongError {
    let n = costs.len();
    let total: f64 = costs.iter().sum();
    let value = (total / n as f64).powf(1.0 / rho);
    if n < 2 {
        return StrongError { value, stderr: f64::NAN };
    }
    let loo: Vec<f64> = costs
        .iter()
        .map(|c| ((total - c).max(0.0) / (n - 1) as f64).powf(1.0 / rho))
        .collect();
    let m = loo.iter().sum::<f64>() / n as f64;
    let var = loo.iter().map(|v| (v - m).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    StrongError { value, stderr: var.sqrt() }
}

/// `(mean over paths of |X̃_t - X̄_t|^ρ)^{1/ρ}` between two path-aligned batches.
pub fn strong_error_estimate(a: &PathBatch, b: &PathBatch, t: f64, rho: f64) -> Result<StrongError> {
    if !(rho >= 1.0) {
        return Err(Error::invalid(format!("rho must be >= 1, got {rho}")));
    }
    let (xa, xb) = (a.at(t)?, b.at(t)?);
    if xa.shape() != xb.shape() {
        return Err(Error::SizeMismatch(xa.nrows(), xb.nrows()));
    }
    let costs: Vec<f64> = (0..xa.nrows())
        .map(|i| (xa.row(i) - xb.row(i)).norm().powf(rho))
        .collect();
    Ok(power_mean_with_jackknife(&costs, rho))
}

/// `(E|𝓔_{0,t} - Ē_{0,t}|^ρ)^{1/ρ}` in Frobenius norm between two path-aligned batches.
pub fn first_variation_error(a: &FirstVariationBatch, b: &FirstVariationBatch, t: f64, rho: f64) -> Result<StrongError> {
    if !(rho >= 1.0) {
        return Err(Error::invalid(format!("rho must be >= 1, got {rho}")));
    }
    let (ea, eb) = (a.at(t)?, b.at(t)?);
    if ea.len() != eb.len() {
        return Err(Error::SizeMismatch(ea.len(), eb.len()));
    }
    let costs: Vec<f64> = ea.iter().zip(eb).map(|(x, y)| (x - y).norm().powf(rho)).collect();
    Ok(power_mean_with_jackknife(&costs, rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::sde_model::{AffineStructure, Regularity};
    use approx::assert_relative_eq;

    fn degenerate() -> SdeSpec {
        SdeSpec::new(
            "zero",
            DVector::from_vec(vec![0.7, -1.3]),
            1.0,
            |_, _| DVector::zeros(2),
            |_, _| DMatrix::zeros(2, 2),
            Regularity { holder_exponent: 1.0, holder_constant: 0.0, ellipticity_floor: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn zero_coefficients_stay_put() {
        let g = TimeGrid::power(1.0, 7, 2.0).unwrap();
        let b = simulate_euler(&degenerate(), &g, &[0.0, 0.33, 1.0], 10, 1).unwrap();
        for m in &b.states {
            for i in 0..m.nrows() {
                assert_eq!(m.row(i).iter().copied().collect::<Vec<_>>(), vec![0.7, -1.3]);
            }
        }
    }

    #[test]
    fn one_step_ou_is_brownian() {
        let spec = catalog::const_ou(2);
        let g = TimeGrid::uniform(1.0, 1).unwrap();
        let n = 40_000;
        let b = simulate_euler(&spec, &g, &[1.0], n, 5).unwrap();
        let (m, c) = b.moments(1.0).unwrap();
        let se = (1.0 / n as f64).sqrt();
        for j in 0..2 {
            assert!(m[j].abs() < 5.0 * se, "mean {m}");
            assert!((c[(j, j)] - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt(), "cov {c}");
        }
        assert!(c[(0, 1)].abs() < 5.0 * se);
    }

    #[test]
    fn checkpoint_at_node_equals_node_state() {
        let spec = catalog::tanh_2d(0.5);
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let a = simulate_euler(&spec, &g, &[0.25, 0.5], 8, 9).unwrap();
        let b = simulate_euler(&spec, &g, &g.nodes_and_midpoints(), 8, 9).unwrap();
        // the lattice differs (midpoints split steps) so only the start is shared exactly
        assert_eq!(a.n_paths(), 8);
        assert_eq!(b.times.len(), 9);
        assert_eq!(b.at(0.0).unwrap().row(0)[0], 0.5);
    }

    #[test]
    fn path_independent_of_batch_size() {
        let spec = catalog::tanh_2d(0.5);
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let small = simulate_euler(&spec, &g, &[0.5, 1.0], 3, 77).unwrap();
        let large = simulate_euler(&spec, &g, &[0.5, 1.0], 50, 77).unwrap();
        for c in 0..2 {
            for p in 0..3 {
                assert_eq!(small.states[c].row(p), large.states[c].row(p));
            }
        }
    }

    #[test]
    fn coupled_identical_grids_identical_batches() {
        let spec = catalog::holder_ou(0.5);
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let (a, b) = simulate_coupled(&spec, &g, &g, &g.nodes(), 20, 3).unwrap();
        assert_eq!(a.states, b.states);
        let e = strong_error_estimate(&a, &b, 1.0, 2.0).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn coupled_exact_for_constant_noise() {
        let spec = SdeSpec::from_affine(
            "bm",
            DVector::from_vec(vec![0.0, 1.0]),
            1.0,
            AffineStructure::constant(
                DMatrix::zeros(2, 2),
                DVector::zeros(2),
                DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]),
            ),
            Regularity { holder_exponent: 1.0, holder_constant: 0.0, ellipticity_floor: 0.5 },
        )
        .unwrap();
        let c = TimeGrid::uniform(1.0, 4).unwrap();
        let f = TimeGrid::uniform(1.0, 64).unwrap();
        let (a, b) = simulate_coupled(&spec, &c, &f, c.nodes(), 50, 8).unwrap();
        for &t in c.nodes() {
            assert!(strong_error_estimate(&a, &b, t, 2.0).unwrap().value < 1e-12);
        }
    }

    #[test]
    fn non_refining_rejected() {
        let spec = catalog::const_ou(2);
        let c = TimeGrid::uniform(1.0, 3).unwrap();
        let f = TimeGrid::uniform(1.0, 8).unwrap();
        assert!(matches!(
            simulate_coupled(&spec, &c, &f, &[1.0], 2, 0),
            Err(Error::NotRefining { .. })
        ));
    }

    #[test]
    fn strong_error_small_cases() {
        let prov = Provenance { spec_id: "x".into(), grid: GridKind::Uniform, steps: 1, seed: 0 };
        let mk = |rows: &[f64]| PathBatch {
            times: vec![1.0],
            states: vec![DMatrix::from_row_slice(rows.len() / 2, 2, rows)],
            provenance: prov.clone(),
        };
        let a = mk(&[0.0, 0.0]);
        let b = mk(&[3.0, 4.0]);
        assert_relative_eq!(strong_error_estimate(&a, &b, 1.0, 2.0).unwrap().value, 5.0);
        assert!(matches!(strong_error_estimate(&a, &b, 0.5, 2.0), Err(Error::MissingCheckpoint(_))));
        let a = mk(&[0.0, 0.0, 1.0, 1.0, 2.0, 0.0]);
        let b = mk(&[3.0, 4.0, 1.0, 1.0, 0.0, 0.0]);
        let direct = (5.0 + 0.0 + 2.0) / 3.0;
        assert_relative_eq!(strong_error_estimate(&a, &b, 1.0, 1.0).unwrap().value, direct, epsilon = 1e-15);
    }

    #[test]
    fn jackknife_matches_mean_stderr_for_rho_one() {
        let costs = [1.0, 2.0, 4.0, 7.0, 3.0];
        let e = power_mean_with_jackknife(&costs, 1.0);
        let n = costs.len() as f64;
        let m = costs.iter().sum::<f64>() / n;
        let s2 = costs.iter().map(|c| (c - m).powi(2)).sum::<f64>() / (n - 1.0);
        assert_relative_eq!(e.value, m);
        assert_relative_eq!(e.stderr, (s2 / n).sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn first_variation_trivial_and_ou() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let fv = simulate_first_variation(&degenerate(), &g, g.nodes(), 4, 1).unwrap();
        for mats in &fv.matrices {
            for m in mats {
                assert_eq!(*m, DMatrix::identity(2, 2));
            }
        }
        let spec = catalog::const_ou(2);
        let n = 32;
        let g = TimeGrid::uniform(1.0, n).unwrap();
        let fv = simulate_first_variation(&spec, &g, &[1.0], 3, 1).unwrap();
        let expect = (1.0 - 1.0 / n as f64).powi(n as i32);
        for m in fv.at(1.0).unwrap() {
            assert_relative_eq!(*m, DMatrix::identity(2, 2) * expect, epsilon = 1e-14);
        }
        assert_eq!(fv.at(0.0).is_err(), true);
    }

    #[test]
    fn first_variation_starts_at_identity() {
        let spec = catalog::tanh_2d(0.5);
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let fv = simulate_first_variation(&spec, &g, &[0.0, 0.5, 1.0], 5, 2).unwrap();
        for m in fv.at(0.0).unwrap() {
            assert_eq!(*m, DMatrix::identity(2, 2));
        }
    }

    #[test]
    fn blow_up_reported_with_path() {
        let spec = SdeSpec::new(
            "explode",
            DVector::from_vec(vec![1.0]),
            1.0,
            |_, x| x.map(|v| v * v * 1e200),
            |_, _| DMatrix::identity(1, 1),
            Regularity { holder_exponent: 1.0, holder_constant: 0.0, ellipticity_floor: 1.0 },
        )
        .unwrap();
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        match simulate_euler(&spec, &g, &[1.0], 3, 0) {
            Err(Error::NonFiniteState { path, .. }) => assert_eq!(path, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lattice_rejects_bad_times() {
        assert!(BrownianLattice::new(vec![0.0], 1, 0).is_err());
        assert!(BrownianLattice::new(vec![0.1, 0.2], 1, 0).is_err());
        assert!(BrownianLattice::new(vec![0.0, 0.2, 0.2], 1, 0).is_err());
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        assert!(BrownianLattice::covering(&[&g], &[1.5], 1, 0).is_err());
    }
}
