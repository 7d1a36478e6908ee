//! A trace inequality between positive definite matrices, its evaluation
//! routes, and randomized / adversarial searches for counterexamples.
//!
//! With `A = I + (ρ-2)vv*` for a unit vector `v`, SPD `M`, and `a₁, a₂ ⪰ a̲I`:
//!
//! `Tr[A{(I - A⁻¹M)a₁ + (I - M⁻¹A)a₂}] ≤ (1∨(ρ-1))² / (4a̲(1∧(ρ-1))) · Tr[(a₁-a₂)²]`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Relative tolerance of [`check_inequality`].
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Regularization added to `GG*` when drawing `M`.
const M_JITTER: f64 = 1e-3;
/// Smallest exponent admitted by the fuzzers: the constant blows up as ρ → 1.
pub const RHO_FLOOR: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaInstance {
    pub v: DVector<f64>,
    pub rho: f64,
    pub m: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    /// Ellipticity floor `a̲`.
    pub floor: f64,
}

impl LemmaInstance {
    pub fn new(v: DVector<f64>, rho: f64, m: DMatrix<f64>, a1: DMatrix<f64>, a2: DMatrix<f64>, floor: f64) -> Result<Self> {
        let inst = Self { v, rho, m, a1, a2, floor };
        inst.validate()?;
        Ok(inst)
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        for (name, m) in [("M", &self.m), ("a1", &self.a1), ("a2", &self.a2)] {
            if m.shape() != (d, d) {
                return Err(Error::DimensionMismatch(d, m.nrows()));
            }
            if !linalg::all_finite(m) {
                return Err(Error::invalid(format!("{name} has non-finite entries")));
            }
            if !linalg::is_symmetric(m, 1e-12) {
                return Err(Error::NotPositiveDefinite(format!("{name} is not symmetric")));
            }
            if linalg::min_eigenvalue(m) <= 0.0 {
                return Err(Error::NotPositiveDefinite(name.to_string()));
            }
        }
        if (self.v.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("v must be a unit vector"));
        }
        if !(self.rho > 1.0) || !self.rho.is_finite() {
            return Err(Error::invalid(format!("rho must exceed 1, got {}", self.rho)));
        }
        if !(self.floor > 0.0) {
            return Err(Error::invalid("ellipticity floor must be positive"));
        }
        for (name, a) in [("a1", &self.a1), ("a2", &self.a2)] {
            if linalg::min_eigenvalue(a) < self.floor * (1.0 - 1e-9) {
                return Err(Error::invalid(format!("{name} - floor·I is not positive semidefinite")));
            }
        }
        Ok(())
    }

    /// `A = I + (ρ-2)vv*`.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::identity(d, d) + &self.v * self.v.transpose() * (self.rho - 2.0)
    }

    /// The instance with `M ↦ AM⁻¹A` and `a₁ ↔ a₂`; the left-hand side is invariant.
    pub fn mirrored(&self) -> Result<Self> {
        let a = self.a_matrix();
        let m = linalg::symmetrize(&(&a * linalg::inv_spd(&self.m, "M")? * &a));
        Ok(Self { m, a1: self.a2.clone(), a2: self.a1.clone(), ..self.clone() })
    }
}

struct Factored {
    a_half: DMatrix<f64>,
    m_tilde: DMatrix<f64>,
}

fn factor(inst: &LemmaInstance) -> Result<Factored> {
    let a = inst.a_matrix();
    let eig = linalg::require_spd(&a, "A")?;
    let a_half = linalg::spectral_apply(&eig, f64::sqrt);
    let a_inv_half = linalg::spectral_apply(&eig, |l| 1.0 / l.sqrt());
    linalg::require_spd(&inst.m, "M")?;
    let m_tilde = linalg::symmetrize(&(&a_inv_half * &inst.m * &a_inv_half));
    Ok(Factored { a_half, m_tilde })
}

/// Left-hand side through `M̃ = A^{-1/2} M A^{-1/2}`:
/// `Tr[(I - M̃)(A^{1/2}a₁A^{1/2} - M̃⁻¹A^{1/2}a₂A^{1/2})]`.
pub fn lemma_lhs(inst: &LemmaInstance) -> Result<f64> {
    let f = factor(inst)?;
    let d = inst.dim();
    let s1 = &f.a_half * &inst.a1 * &f.a_half;
    let s2 = &f.a_half * &inst.a2 * &f.a_half;
    let m_inv = linalg::inv_spd(&f.m_tilde, "M̃")?;
    Ok(((DMatrix::identity(d, d) - &f.m_tilde) * (s1 - m_inv * s2)).trace())
}

/// Left-hand side as written: `Tr[(A - M)a₁ + (A - AM⁻¹A)a₂]`.
pub fn lemma_lhs_direct(inst: &LemmaInstance) -> Result<f64> {
    let a = inst.a_matrix();
    let m_inv = linalg::inv_spd(&inst.m, "M")?;
    Ok(((&a - &inst.m) * &inst.a1 + (&a - &a * m_inv * &a) * &inst.a2).trace())
}

/// Left-hand side from the eigendecomposition of `M̃`, as the sum of a
/// cross term and two non-positive terms:
/// `Tr[(I-M̃)(I∨M̃)⁻¹S] - Tr[M̃⁻¹((M̃-I)⁺)²S₁] - Tr[M̃⁻¹((I-M̃)⁺)²S₂]`
/// with `S = A^{1/2}(a₁-a₂)A^{1/2}` and `Sᵢ = A^{1/2}aᵢA^{1/2}`.
pub fn lemma_lhs_spectral(inst: &LemmaInstance) -> Result<f64> {
    let f = factor(inst)?;
    let eig = linalg::require_spd(&f.m_tilde, "M̃")?;
    let s1 = &f.a_half * &inst.a1 * &f.a_half;
    let s2 = &f.a_half * &inst.a2 * &f.a_half;
    let s = &s1 - &s2;
    let cross = linalg::spectral_apply(&eig, |l| (1.0 - l) / l.max(1.0));
    let above = linalg::spectral_apply(&eig, |l| (l - 1.0).max(0.0).powi(2) / l);
    let below = linalg::spectral_apply(&eig, |l| (1.0 - l).max(0.0).powi(2) / l);
    Ok((cross * s).trace() - (above * s1).trace() - (below * s2).trace())
}

/// `(1∨(ρ-1))² / (4a̲(1∧(ρ-1))) · Tr[(a₁-a₂)²]`.
pub fn lemma_rhs(inst: &LemmaInstance) -> f64 {
    let r = inst.rho - 1.0;
    let diff = &inst.a1 - &inst.a2;
    r.max(1.0).powi(2) / (4.0 * inst.floor * r.min(1.0)) * linalg::frobenius_sq(&diff)
}

/// Sharper scalar bound `((ρ-1)/(4a̲))(a₁-a₂)²`, valid in dimension one.
pub fn remark_bound_1d(inst: &LemmaInstance) -> Result<f64> {
    if inst.dim() != 1 {
        return Err(Error::DimensionMismatch(1, inst.dim()));
    }
    Ok((inst.rho - 1.0) / (4.0 * inst.floor) * (inst.a1[(0, 0)] - inst.a2[(0, 0)]).powi(2))
}

/// Cauchy–Schwarz bound `√((d+ρ-2)(1∨(ρ-1))) · ‖a₁-a₂‖_F`.
pub fn remark_bound_cs(inst: &LemmaInstance) -> f64 {
    let d = inst.dim() as f64;
    ((d + inst.rho - 2.0) * (inst.rho - 1.0).max(1.0)).sqrt() * linalg::frobenius_sq(&(&inst.a1 - &inst.a2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub slack: f64,
}

/// `lhs ≤ rhs + tol·(|lhs| + |rhs| + 1)`.
pub fn check_inequality(inst: &LemmaInstance, tol: f64) -> Result<InequalityCheck> {
    let lhs = lemma_lhs(inst)?;
    let rhs = lemma_rhs(inst);
    Ok(InequalityCheck { holds: lhs <= rhs + tol * (lhs.abs() + rhs.abs() + 1.0), lhs, rhs, slack: rhs - lhs })
}

fn gaussian_matrix(r: &mut impl Rng, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |_, _| r.sample(StandardNormal))
}

/// Factor-space parameters: every point maps to a valid instance.
#[derive(Debug, Clone)]
struct Factors {
    w: DVector<f64>,
    g: DMatrix<f64>,
    h1: DMatrix<f64>,
    h2: DMatrix<f64>,
}

impl Factors {
    fn draw(r: &mut impl Rng, d: usize) -> Self {
        let w = loop {
            let w = DVector::from_fn(d, |_, _| r.sample(StandardNormal));
            if w.norm() > 1e-8 {
                break w;
            }
        };
        Self { w, g: gaussian_matrix(r, d), h1: gaussian_matrix(r, d), h2: gaussian_matrix(r, d) }
    }

    fn instance(&self, rho: f64, floor: f64) -> LemmaInstance {
        let d = self.w.len();
        let id = DMatrix::<f64>::identity(d, d);
        let gram = |h: &DMatrix<f64>| linalg::symmetrize(&(h * h.transpose()));
        LemmaInstance {
            v: self.w.normalize(),
            rho,
            m: gram(&self.g) + &id * M_JITTER,
            a1: gram(&self.h1) + &id * floor,
            a2: gram(&self.h2) + &id * floor,
            floor,
        }
    }

    fn len(&self) -> usize {
        self.w.len() + 3 * self.g.len()
    }

    fn coord_mut(&mut self, k: usize) -> &mut f64 {
        let d = self.w.len();
        let dd = d * d;
        match k {
            k if k < d => &mut self.w[k],
            k if k < d + dd => &mut self.g.as_mut_slice()[k - d],
            k if k < d + 2 * dd => &mut self.h1.as_mut_slice()[k - d - dd],
            k => &mut self.h2.as_mut_slice()[k - d - 2 * dd],
        }
    }
}

/// Draws `v` uniformly on the sphere, `M = GG* + 10⁻³I`, `aᵢ = HᵢHᵢ* + a̲I`
/// with Gaussian factors.
pub fn random_instance(r: &mut impl Rng, d: usize, rho: f64, floor: f64) -> Result<LemmaInstance> {
    if d == 0 || !(rho > 1.0) || !(floor > 0.0) {
        return Err(Error::invalid("need d >= 1, rho > 1, floor > 0"));
    }
    Ok(Factors::draw(r, d).instance(rho, floor))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    pub instances: usize,
    pub dims: Vec<usize>,
    pub rhos: Vec<f64>,
    pub floor: f64,
    pub seed: u64,
    pub tolerance: f64,
}

impl FuzzConfig {
    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.rhos.is_empty() || self.dims.contains(&0) {
            return Err(Error::invalid("dims and rhos must be non-empty, dims positive"));
        }
        if let Some(r) = self.rhos.iter().find(|&&r| !(r >= RHO_FLOOR)) {
            return Err(Error::invalid(format!("rho {r} below the fuzzing floor {RHO_FLOOR}")));
        }
        if !(self.floor > 0.0) || !(self.tolerance >= 0.0) {
            return Err(Error::invalid("floor must be positive and tolerance non-negative"));
        }
        Ok(())
    }

    /// `(d, ρ)` cell of instance `k`; cells are visited round-robin.
    fn cell(&self, k: usize) -> (usize, f64) {
        let nd = self.dims.len();
        (self.dims[k % nd], self.rhos[(k / nd) % self.rhos.len()])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FuzzReport {
    pub instances: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` relative to `|lhs| + |rhs| + 1`.
    pub min_slack: f64,
    pub argmin: LemmaInstance,
    /// Largest `lhs / rhs` among instances with `rhs > 0`.
    pub max_ratio: f64,
}

fn relative_slack(c: &InequalityCheck) -> f64 {
    c.slack / (c.lhs.abs() + c.rhs.abs() + 1.0)
}

/// Checks `instances` random instances in parallel; instance `k` is drawn
/// from its own seed so the report does not depend on the thread count.
pub fn fuzz_campaign(cfg: &FuzzConfig) -> Result<FuzzReport> {
    cfg.validate()?;
    if cfg.instances == 0 {
        return Err(Error::invalid("instances must be positive"));
    }
    let base = rng::sub_seed(cfg.seed, "fuzzing");
    let results: Vec<(usize, f64, bool, f64)> = (0..cfg.instances)
        .into_par_iter()
        .map(|k| {
            let (d, rho) = cfg.cell(k);
            let mut r = rng::seeded(rng::indexed_seed(base, k as u64));
            let inst = random_instance(&mut r, d, rho, cfg.floor)?;
            let c = check_inequality(&inst, cfg.tolerance)?;
            let ratio = if c.rhs > 0.0 { c.lhs / c.rhs } else { f64::NEG_INFINITY };
            Ok((k, relative_slack(&c), c.holds, ratio))
        })
        .collect::<Result<_>>()?;
    let violations = results.iter().filter(|r| !r.2).count();
    let max_ratio = results.iter().map(|r| r.3).fold(f64::NEG_INFINITY, f64::max);
    let (k_min, min_slack) = results
        .iter()
        .map(|r| (r.0, r.1))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .unwrap();
    let (d, rho) = cfg.cell(k_min);
    let mut r = rng::seeded(rng::indexed_seed(base, k_min as u64));
    let argmin = random_instance(&mut r, d, rho, cfg.floor)?;
    Ok(FuzzReport { instances: cfg.instances, violations, min_slack, argmin, max_ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialConfig {
    pub starts: usize,
    pub iterations: usize,
    pub dims: Vec<usize>,
    pub rhos: Vec<f64>,
    pub floor: f64,
    pub seed: u64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdversarialReport {
    pub evaluations: usize,
    /// Largest `lhs / rhs` reached; the inequality says it never exceeds 1.
    pub max_ratio: f64,
    pub best: LemmaInstance,
    pub violations: usize,
}

fn ratio_of(inst: &LemmaInstance) -> f64 {
    match (lemma_lhs(inst), lemma_rhs(inst)) {
        (Ok(l), r) if r > 0.0 && l.is_finite() => l / r,
        _ => f64::NEG_INFINITY,
    }
}

/// Gradient-free local search maximizing `lhs / rhs` over factor space:
/// coordinate-wise expansion/contraction moves with random restarts.
pub fn adversarial_search(cfg: &AdversarialConfig) -> Result<AdversarialReport> {
    if cfg.dims.is_empty() || cfg.rhos.is_empty() || cfg.starts == 0 {
        return Err(Error::invalid("adversarial search needs dims, rhos and starts"));
    }
    if let Some(r) = cfg.rhos.iter().find(|&&r| !(r >= RHO_FLOOR)) {
        return Err(Error::invalid(format!("rho {r} below the fuzzing floor {RHO_FLOOR}")));
    }
    let base = rng::sub_seed(cfg.seed, "adversarial");
    let runs: Vec<(usize, f64, LemmaInstance, usize)> = (0..cfg.starts)
        .into_par_iter()
        .map(|s| {
            let nd = cfg.dims.len();
            let (d, rho) = (cfg.dims[s % nd], cfg.rhos[(s / nd) % cfg.rhos.len()]);
            let mut r = rng::seeded(rng::indexed_seed(base, s as u64));
            let mut x = Factors::draw(&mut r, d);
            let mut fx = ratio_of(&x.instance(rho, cfg.floor));
            let mut steps = vec![0.5; x.len()];
            let mut evals = 1;
            let mut violations = 0;
            for _ in 0..cfg.iterations {
                let k = r.random_range(0..x.len());
                let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
                let mut y = x.clone();
                *y.coord_mut(k) += sign * steps[k];
                let inst = y.instance(rho, cfg.floor);
                let fy = ratio_of(&inst);
                evals += 1;
                if let Ok(c) = check_inequality(&inst, cfg.tolerance) {
                    violations += usize::from(!c.holds);
                }
                if fy > fx {
                    x = y;
                    fx = fy;
                    steps[k] *= 2.0;
                } else {
                    steps[k] = (steps[k] * 0.5).max(1e-6);
                }
            }
            (evals, fx, x.instance(rho, cfg.floor), violations)
        })
        .collect();
    let evaluations = runs.iter().map(|r| r.0).sum();
    let violations = runs.iter().map(|r| r.3).sum();
    let (_, max_ratio, best, _) = runs.into_iter().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
    Ok(AdversarialReport { evaluations, max_ratio, best, violations })
}
