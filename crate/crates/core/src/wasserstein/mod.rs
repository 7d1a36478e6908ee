//! ρ-Wasserstein distances between equal-size, equal-weight point clouds.

pub mod assignment;
mod entropic;

pub use entropic::{w_rho_entropic, EntropicOptions, EntropicResult};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest cloud accepted by [`w_rho_exact`].
pub const EXACT_SIZE_CAP: usize = 4096;
/// Tolerance on coupling marginals accepted by [`plan_cost`].
pub const MARGINAL_TOL: f64 = 1e-8;
const PARALLEL_ROWS: usize = 256;

/// `n` equal-weight points in `ℝ^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    data: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || data.len() % dim != 0 {
            return Err(Error::invalid("need at least one point and a positive dimension"));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("empirical measure has non-finite coordinates"));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("rows have different lengths"));
        }
        Self::new(dim, rows.concat())
    }

    /// One point per matrix row.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.ncols(), m.transpose().as_slice().to_vec())
    }

    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(1, values.to_vec())
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch(self.dim, shift.len()));
        }
        let data = self.data.chunks(self.dim).flat_map(|p| p.iter().zip(shift).map(|(x, s)| x + s)).collect();
        Self::new(self.dim, data)
    }

    pub fn diameter(&self) -> f64 {
        let n = self.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| distance(self.point(i), self.point(j)))
            .fold(0.0, f64::max)
    }
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn check_pair(a: &EmpiricalMeasure, b: &EmpiricalMeasure, rho: f64) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch(a.len(), b.len()));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(a.dim(), b.dim()));
    }
    if !(rho >= 1.0) || !rho.is_finite() {
        return Err(Error::invalid(format!("rho must be a finite number >= 1, got {rho}")));
    }
    Ok(())
}

/// Optimal coupling: a permutation for the exact solver, a dense matrix for
/// the entropic one.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportPlan {
    /// Point `i` of the first cloud is sent to point `perm[i]` of the second.
    Permutation(Vec<usize>),
    /// `π_{ij}` with row and column sums `1/n`.
    Coupling(DMatrix<f64>),
}

/// Pairwise costs `(|x_i - y_j| / D)^ρ` with `D` the largest pairwise
/// distance, so that large exponents cannot overflow.
pub(crate) struct ScaledCost {
    pub n: usize,
    pub scale: f64,
    pub values: Vec<f64>,
}

impl ScaledCost {
    pub fn new(a: &EmpiricalMeasure, b: &EmpiricalMeasure, rho: f64) -> Self {
        let n = a.len();
        let mut values = vec![0.0; n * n];
        let fill = |(i, row): (usize, &mut [f64])| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = distance(a.point(i), b.point(j));
            }
        };
        if n >= PARALLEL_ROWS {
            values.par_chunks_mut(n).enumerate().for_each(fill);
        } else {
            values.chunks_mut(n).enumerate().for_each(fill);
        }
        let scale = values.iter().copied().fold(0.0, f64::max);
        if scale > 0.0 {
            let map = |v: &mut f64| *v = power(*v / scale, rho);
            if n >= PARALLEL_ROWS {
                values.par_iter_mut().for_each(map);
            } else {
                values.iter_mut().for_each(map);
            }
        }
        Self { n, scale, values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Converts an average scaled cost back to a distance.
    pub fn distance(&self, mean_cost: f64, rho: f64) -> f64 {
        self.scale * mean_cost.max(0.0).powf(1.0 / rho)
    }
}

fn power(x: f64, rho: f64) -> f64 {
    if rho == 1.0 {
        x
    } else if rho == 2.0 {
        x * x
    } else {
        x.powf(rho)
    }
}

/// Exact one-dimensional distance by matching order statistics. Ties are
/// broken by index (stable sort).
pub fn w_rho_1d(a: &[f64], b: &[f64], rho: f64) -> Result<f64> {
    let (ma, mb) = (EmpiricalMeasure::from_scalars(a)?, EmpiricalMeasure::from_scalars(b)?);
    check_pair(&ma, &mb, rho)?;
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let scale = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mean = sa.iter().zip(&sb).map(|(x, y)| power((x - y).abs() / scale, rho)).sum::<f64>() / a.len() as f64;
    Ok(scale * mean.powf(1.0 / rho))
}

/// Exact distance and an optimal permutation plan via dense assignment.
/// Clouds larger than [`EXACT_SIZE_CAP`] are refused; use [`w_rho_entropic`].
pub fn w_rho_exact(a: &EmpiricalMeasure, b: &EmpiricalMeasure, rho: f64) -> Result<(f64, TransportPlan)> {
    check_pair(a, b, rho)?;
    let n = a.len();
    if n > EXACT_SIZE_CAP {
        return Err(Error::SizeOverCap { n, cap: EXACT_SIZE_CAP });
    }
    let cost = ScaledCost::new(a, b, rho);
    if cost.scale == 0.0 {
        return Ok((0.0, TransportPlan::Permutation((0..n).collect())));
    }
    let perm = assignment::solve(n, &cost.values);
    let mean = perm.iter().enumerate().map(|(i, &j)| cost.at(i, j)).sum::<f64>() / n as f64;
    Ok((cost.distance(mean, rho), TransportPlan::Permutation(perm)))
}

/// Largest deviation of a coupling's row and column sums from `1/n`.
pub fn marginal_error(plan: &DMatrix<f64>) -> f64 {
    let target = 1.0 / plan.nrows() as f64;
    let rows = plan.row_iter().map(|r| (r.sum() - target).abs());
    let cols = plan.column_iter().map(|c| (c.sum() - target).abs());
    rows.chain(cols).fold(0.0, f64::max)
}

/// `(Σ π_{ij} |x_i - y_j|^ρ)^{1/ρ}` for a plan between `a` and `b`.
pub fn plan_cost(plan: &TransportPlan, a: &EmpiricalMeasure, b: &EmpiricalMeasure, rho: f64) -> Result<f64> {
    check_pair(a, b, rho)?;
    let n = a.len();
    let cost = ScaledCost::new(a, b, rho);
    let mean = match plan {
        TransportPlan::Permutation(p) => {
            let mut seen = vec![false; n];
            if p.len() != n || !p.iter().all(|&j| j < n && !std::mem::replace(&mut seen[j], true)) {
                return Err(Error::MarginalViolation(1.0 / n as f64));
            }
            p.iter().enumerate().map(|(i, &j)| cost.at(i, j)).sum::<f64>() / n as f64
        }
        TransportPlan::Coupling(m) => {
            if m.shape() != (n, n) {
                return Err(Error::SizeMismatch(m.nrows(), n));
            }
            let err = marginal_error(m);
            if err > MARGINAL_TOL || m.iter().any(|&v| v < -MARGINAL_TOL) {
                return Err(Error::MarginalViolation(err));
            }
            (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| m[(i, j)] * cost.at(i, j)).sum()
        }
    };
    Ok(cost.distance(mean, rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn cloud(r: &mut impl Rng, n: usize, d: usize) -> EmpiricalMeasure {
        EmpiricalMeasure::new(d, (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn brute_force(a: &EmpiricalMeasure, b: &EmpiricalMeasure, rho: f64) -> f64 {
        let n = a.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        permute(&mut perm, 0, &mut |p| {
            let c: f64 = p.iter().enumerate().map(|(i, &j)| distance(a.point(i), b.point(j)).powf(rho)).sum();
            best = best.min(c);
        });
        (best / n as f64).powf(1.0 / rho)
    }

    fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }

    #[test]
    fn one_d_examples() {
        assert_eq!(w_rho_1d(&[0.0, 1.0], &[0.0, 1.0], 2.0).unwrap(), 0.0);
        for rho in [1.0, 2.0, 3.7] {
            assert_relative_eq!(w_rho_1d(&[0.0], &[3.0], rho).unwrap(), 3.0);
        }
        assert_relative_eq!(w_rho_1d(&[0.0, 2.0], &[1.0, 3.0], 2.0).unwrap(), 1.0);
        assert_relative_eq!(w_rho_1d(&[2.0, 0.0], &[3.0, 1.0], 2.0).unwrap(), 1.0);
        assert!(matches!(w_rho_1d(&[0.0], &[1.0, 2.0], 2.0), Err(Error::SizeMismatch(1, 2))));
    }

    #[test]
    fn exact_examples() {
        let mut r = crate::rng::seeded(1);
        let a = cloud(&mut r, 20, 2);
        let (d, plan) = w_rho_exact(&a, &a, 2.0).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(plan_cost(&plan, &a, &a, 2.0).unwrap(), 0.0);
        let big = EmpiricalMeasure::new(1, vec![0.0; EXACT_SIZE_CAP + 1]).unwrap();
        assert!(matches!(w_rho_exact(&big, &big, 2.0), Err(Error::SizeOverCap { .. })));
    }

    #[test]
    fn exact_matches_brute_force() {
        let mut r = crate::rng::seeded(2);
        for trial in 0..150 {
            let n = 1 + trial % 7;
            let rho = [1.0, 2.0, 3.0][trial % 3];
            let (a, b) = (cloud(&mut r, n, 2), cloud(&mut r, n, 2));
            let (d, plan) = w_rho_exact(&a, &b, rho).unwrap();
            assert_relative_eq!(d, brute_force(&a, &b, rho), max_relative = 1e-10);
            assert_relative_eq!(plan_cost(&plan, &a, &b, rho).unwrap(), d, max_relative = 1e-12);
        }
    }

    #[test]
    fn exact_equals_1d_in_one_dimension() {
        let mut r = crate::rng::seeded(5);
        for n in [1, 5, 33, 200] {
            let (a, b) = (cloud(&mut r, n, 1), cloud(&mut r, n, 1));
            for rho in [1.0, 2.0, 3.5] {
                let (d, _) = w_rho_exact(&a, &b, rho).unwrap();
                let one = w_rho_1d(&a.data, &b.data, rho).unwrap();
                assert_relative_eq!(d, one, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn large_rho_does_not_overflow() {
        let a = EmpiricalMeasure::from_scalars(&[0.0, 1e60]).unwrap();
        let b = EmpiricalMeasure::from_scalars(&[1e60, 3e60]).unwrap();
        let (d, _) = w_rho_exact(&a, &b, 12.0).unwrap();
        assert!(d.is_finite());
        assert_relative_eq!(d, w_rho_1d(&[0.0, 1e60], &[1e60, 3e60], 12.0).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn plan_cost_examples_and_errors() {
        let a = EmpiricalMeasure::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let swap = TransportPlan::Permutation(vec![1, 0]);
        assert_relative_eq!(plan_cost(&swap, &a, &a, 2.0).unwrap(), 2.0);
        let ident = TransportPlan::Permutation(vec![0, 1]);
        assert_eq!(plan_cost(&ident, &a, &a, 2.0).unwrap(), 0.0);
        let bad = TransportPlan::Permutation(vec![0, 0]);
        assert!(matches!(plan_cost(&bad, &a, &a, 2.0), Err(Error::MarginalViolation(_))));
        let skew = TransportPlan::Coupling(DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.4]));
        assert!(matches!(plan_cost(&skew, &a, &a, 2.0), Err(Error::MarginalViolation(_))));
        let indep = TransportPlan::Coupling(DMatrix::from_element(2, 2, 0.25));
        assert_relative_eq!(plan_cost(&indep, &a, &a, 2.0).unwrap(), 2f64.sqrt());
    }

    #[test]
    fn metric_axioms_and_monotonicity() {
        let mut r = crate::rng::seeded(8);
        for _ in 0..40 {
            let n = r.random_range(2..24);
            let (a, b, c) = (cloud(&mut r, n, 2), cloud(&mut r, n, 2), cloud(&mut r, n, 2));
            let dab = w_rho_exact(&a, &b, 2.0).unwrap().0;
            let dba = w_rho_exact(&b, &a, 2.0).unwrap().0;
            assert_relative_eq!(dab, dba, max_relative = 1e-12);
            let dbc = w_rho_exact(&b, &c, 2.0).unwrap().0;
            let dac = w_rho_exact(&a, &c, 2.0).unwrap().0;
            assert!(dac <= dab + dbc + 1e-12);
            let ws: Vec<f64> = [1.0, 1.5, 2.0, 3.0, 4.0].iter().map(|&p| w_rho_exact(&a, &b, p).unwrap().0).collect();
            assert!(ws.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)), "{ws:?}");
        }
    }

    #[test]
    fn translation() {
        let mut r = crate::rng::seeded(9);
        let (a, b) = (cloud(&mut r, 30, 2), cloud(&mut r, 30, 2));
        let v = [0.3, -1.2];
        let base = w_rho_exact(&a, &b, 2.0).unwrap().0;
        let both = w_rho_exact(&a.translated(&v).unwrap(), &b.translated(&v).unwrap(), 2.0).unwrap().0;
        assert_relative_eq!(base, both, max_relative = 1e-10);
        let one = w_rho_exact(&a.translated(&v).unwrap(), &b, 2.0).unwrap().0;
        assert!((one - base).abs() <= (v[0] * v[0] + v[1] * v[1]).sqrt() + 1e-12);
        // identical centered shapes: shifting one copy moves W₂ by exactly |v|
        let shift = w_rho_exact(&a.translated(&v).unwrap(), &a, 2.0).unwrap().0;
        assert_relative_eq!(shift, (v[0] * v[0] + v[1] * v[1]).sqrt(), max_relative = 1e-12);
    }
}
