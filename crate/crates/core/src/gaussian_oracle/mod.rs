//! Exact marginal laws of affine SDEs and of their Euler schemes, together
//! with closed-form Gaussian Wasserstein distances.

mod increment;

pub use increment::{conditional_increment_moment, gaussian_norm_moment, malliavin_bound};

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::{self, GaussHermite};
use crate::sde_model::{AffineStructure, SdeSpec};
use crate::time_grid::TimeGrid;

/// Default relative tolerance of the ODE integration in [`sde_marginal_law`].
pub const DEFAULT_ODE_TOLERANCE: f64 = 1e-10;
/// Grading exponent of the sub-steps adjacent to `t = 0` for time-Hölder coefficients.
const GRADING_EXPONENT: i32 = 5;
const MAX_SUBSTEPS: usize = 1 << 17;
const CLAMP_WARN_RATIO: f64 = 1e-10;

/// Gauss–Hermite rule of order 64 shared by the 1D moment routines.
pub(crate) fn hermite64() -> &'static GaussHermite {
    static RULE: OnceLock<GaussHermite> = OnceLock::new();
    RULE.get_or_init(|| GaussHermite::new(64))
}

/// Normal law `N(mean, cov)`; the covariance may be singular.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianLaw {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianLaw {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.shape() != (d, d) {
            return Err(Error::DimensionMismatch(d, cov.nrows()));
        }
        if !mean.iter().all(|v| v.is_finite()) || !linalg::all_finite(&cov) {
            return Err(Error::invalid("law has non-finite entries"));
        }
        let scale = cov.amax().max(1.0);
        if !linalg::is_symmetric(&cov, 1e-12 * scale) {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        if linalg::min_eigenvalue(&cov) < -1e-12 * scale {
            return Err(Error::NotPositiveDefinite("covariance has a negative eigenvalue".into()));
        }
        Ok(Self { mean, cov })
    }

    /// Point mass at `x`.
    pub fn dirac(x: DVector<f64>) -> Self {
        let d = x.len();
        Self { mean: x, cov: DMatrix::zeros(d, d) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Standard deviation of a one-dimensional law.
    pub fn std_dev_1d(&self) -> Result<f64> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch(1, self.dim()));
        }
        Ok(self.cov[(0, 0)].max(0.0).sqrt())
    }
}

fn affine(spec: &SdeSpec) -> Result<&AffineStructure> {
    spec.affine_part()
        .ok_or_else(|| Error::NotAffine(spec.id().to_string()))
}

fn check_time(spec: &SdeSpec, t: f64) -> Result<()> {
    if (0.0..=spec.horizon()).contains(&t) {
        Ok(())
    } else {
        Err(Error::TimeOutOfRange { t, horizon: spec.horizon() })
    }
}

/// One Euler step of length `h` from `(m, C)` with coefficients frozen at `s`.
fn euler_step(a: &AffineStructure, s: f64, h: f64, m: &DVector<f64>, c: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let d = m.len();
    let b = (a.matrix)(s);
    let sig = (a.noise)(s);
    let f = DMatrix::identity(d, d) + &b * h;
    let m1 = &f * m + (a.offset)(s) * h;
    let c1 = linalg::symmetrize(&(&f * c * f.transpose() + &sig * sig.transpose() * h));
    (m1, c1)
}

/// Exact law of the continuous Euler scheme `X̄_t` of an affine SDE.
pub fn euler_marginal_law(spec: &SdeSpec, grid: &TimeGrid, t: f64) -> Result<GaussianLaw> {
    Ok(euler_marginal_laws(spec, grid, &[t])?.remove(0))
}

/// [`euler_marginal_law`] at several times in one pass over the grid.
pub fn euler_marginal_laws(spec: &SdeSpec, grid: &TimeGrid, times: &[f64]) -> Result<Vec<GaussianLaw>> {
    let a = affine(spec)?;
    if (grid.horizon() - spec.horizon()).abs() > 1e-12 * spec.horizon() {
        return Err(Error::invalid("grid horizon differs from the SDE horizon"));
    }
    let d = spec.dimension();
    let nodes = grid.nodes();
    let mut node_laws = Vec::with_capacity(nodes.len());
    let (mut m, mut c) = (spec.initial_point().clone(), DMatrix::zeros(d, d));
    node_laws.push((m.clone(), c.clone()));
    for k in 0..grid.steps() {
        (m, c) = euler_step(a, nodes[k], grid.step_len(k), &m, &c);
        node_laws.push((m.clone(), c.clone()));
    }
    times
        .iter()
        .map(|&t| {
            check_time(spec, t)?;
            let (k, tau) = grid.last_node_before(t)?;
            let (m, c) = &node_laws[k];
            let h = t - tau;
            let (m, c) = if h > 0.0 { euler_step(a, tau, h, m, c) } else { (m.clone(), c.clone()) };
            Ok(GaussianLaw { mean: m, cov: c })
        })
        .collect()
}

type Moments = (DVector<f64>, DMatrix<f64>);

fn moment_rhs(a: &AffineStructure, s: f64, m: &DVector<f64>, c: &DMatrix<f64>) -> Moments {
    let b = (a.matrix)(s);
    let sig = (a.noise)(s);
    let dm = &b * m + (a.offset)(s);
    let bc = &b * c;
    let dc = &bc + bc.transpose() + &sig * sig.transpose();
    (dm, dc)
}

fn rk4_step(a: &AffineStructure, s: f64, h: f64, y: &Moments) -> Moments {
    let (m, c) = y;
    let k1 = moment_rhs(a, s, m, c);
    let k2 = moment_rhs(a, s + 0.5 * h, &(m + &k1.0 * (0.5 * h)), &(c + &k1.1 * (0.5 * h)));
    let k3 = moment_rhs(a, s + 0.5 * h, &(m + &k2.0 * (0.5 * h)), &(c + &k2.1 * (0.5 * h)));
    let k4 = moment_rhs(a, s + h, &(m + &k3.0 * h), &(c + &k3.1 * h));
    let m1 = m + (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (h / 6.0);
    let c1 = c + (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (h / 6.0);
    (m1, linalg::symmetrize(&c1))
}

/// Integrates the moment ODEs through the sorted `stops`, using `n` RK4
/// sub-steps per segment. The first segment is graded towards `t = 0` when
/// the coefficients are only Hölder in time there.
fn integrate_moments(spec: &SdeSpec, a: &AffineStructure, stops: &[f64], n: usize) -> Vec<Moments> {
    let d = spec.dimension();
    let graded = spec.holder_exponent() < 1.0;
    let mut y: Moments = (spec.initial_point().clone(), DMatrix::zeros(d, d));
    let mut s0 = 0.0;
    let mut out = Vec::with_capacity(stops.len());
    for &s1 in stops {
        if s1 > s0 {
            if graded && s0 == 0.0 {
                let node = |i: usize| s1 * (i as f64 / n as f64).powi(GRADING_EXPONENT);
                for i in 0..n {
                    let (u0, u1) = (node(i), if i + 1 == n { s1 } else { node(i + 1) });
                    y = rk4_step(a, u0, u1 - u0, &y);
                }
            } else {
                let h = (s1 - s0) / n as f64;
                for i in 0..n {
                    let u0 = s0 + i as f64 * h;
                    let u1 = if i + 1 == n { s1 } else { s0 + (i + 1) as f64 * h };
                    y = rk4_step(a, u0, u1 - u0, &y);
                }
            }
        }
        out.push(y.clone());
        s0 = s1;
    }
    out
}

fn relative_gap(a: &[Moments], b: &[Moments]) -> f64 {
    a.iter()
        .zip(b)
        .map(|((ma, ca), (mb, cb))| {
            let diff = ((ma - mb).norm_squared() + linalg::frobenius_sq(&(ca - cb))).sqrt();
            let size = (mb.norm_squared() + linalg::frobenius_sq(cb)).sqrt();
            if diff == 0.0 { 0.0 } else { diff / size.max(f64::MIN_POSITIVE) }
        })
        .fold(0.0, f64::max)
}

/// Exact law of `X_t` for an affine SDE: RK4 on the mean and covariance ODEs,
/// halving the step until successive refinements agree to `tolerance`
/// (relative).
pub fn sde_marginal_law(spec: &SdeSpec, t: f64, tolerance: f64) -> Result<GaussianLaw> {
    Ok(sde_marginal_laws(spec, &[t], tolerance)?.remove(0))
}

/// [`sde_marginal_law`] at several times, integrating once through all of them.
pub fn sde_marginal_laws(spec: &SdeSpec, times: &[f64], tolerance: f64) -> Result<Vec<GaussianLaw>> {
    let a = affine(spec)?;
    if !(tolerance > 0.0) {
        return Err(Error::invalid("ODE tolerance must be positive"));
    }
    for &t in times {
        check_time(spec, t)?;
    }
    let mut stops = times.to_vec();
    stops.sort_by(f64::total_cmp);
    stops.dedup();
    let mut n = 4;
    let mut prev = integrate_moments(spec, a, &stops, n);
    let result = loop {
        n *= 2;
        let next = integrate_moments(spec, a, &stops, n);
        if relative_gap(&prev, &next) <= tolerance {
            break next;
        }
        if n >= MAX_SUBSTEPS {
            return Err(Error::NoConvergence { tol: tolerance, steps: n });
        }
        prev = next;
    };
    times
        .iter()
        .map(|t| {
            let i = stops.partition_point(|s| s < t);
            let (m, c) = &result[i];
            Ok(GaussianLaw { mean: m.clone(), cov: c.clone() })
        })
        .collect()
}

/// 2-Wasserstein distance between Gaussian laws (Bures formula). Negative
/// eigenvalues from rounding are clamped; a warning is logged when the
/// clamped mass exceeds `1e-10` of the trace.
pub fn gaussian_w2(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch(p.dim(), q.dim()));
    }
    if p == q {
        return Ok(0.0);
    }
    let (rp, clamp_p) = linalg::sqrt_psd_clamped(&p.cov);
    let inner = linalg::symmetrize(&(&rp * &q.cov * &rp));
    let (cross, clamp_x) = linalg::sqrt_psd_clamped(&inner);
    let trace = p.cov.trace() + q.cov.trace();
    if clamp_p.max(clamp_x) > CLAMP_WARN_RATIO * trace.max(f64::MIN_POSITIVE) {
        log::warn!("eigenvalue clamping {:.3e} in Bures distance exceeds 1e-10 of the trace", clamp_p.max(clamp_x));
    }
    let bures = (trace - 2.0 * cross.trace()).max(0.0);
    Ok(((&p.mean - &q.mean).norm_squared() + bures).sqrt())
}

/// Largest relative change of `E|μ + sZ|^ρ` between the 64- and 128-node
/// Gauss–Hermite rules over `(μ, s, ρ)` cases.
pub fn hermite_doubling_gap(cases: &[(f64, f64, f64)]) -> f64 {
    let fine = GaussHermite::new(128);
    cases
        .iter()
        .map(|&(mu, s, rho)| {
            let f = |z: f64| (mu + s * z).abs().powf(rho);
            let (a, b) = (hermite64().expect_normal(f), fine.expect_normal(f));
            (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

fn is_even_integer(rho: f64) -> bool {
    rho.fract() == 0.0 && (rho as i64) % 2 == 0
}

/// `(E|μ + s Z|^ρ)^{1/ρ}` for standard normal `Z`.
pub(crate) fn shifted_normal_norm(mu: f64, s: f64, rho: f64) -> f64 {
    if s == 0.0 {
        return mu.abs();
    }
    if is_even_integer(rho) && rho <= 126.0 {
        let m = hermite64().expect_normal(|z| (mu + s * z).powf(rho));
        return m.powf(1.0 / rho);
    }
    // |μ + s z|^ρ has a kink at z = -μ/s; integrate each side separately.
    let kink = -mu / s;
    let reach = kink.abs() + 12.0;
    let f = |z: f64| (mu + s * z).abs().powf(rho) * quadrature::normal_pdf(z);
    let scale = (mu.abs() + s.abs()).powf(rho);
    let tol = 1e-15 * scale;
    let m = quadrature::adaptive_simpson(&f, -reach, kink, tol) + quadrature::adaptive_simpson(&f, kink, reach, tol);
    m.powf(1.0 / rho)
}

/// ρ-Wasserstein distance between one-dimensional Gaussian laws through the
/// comonotone coupling `(m_p + s_p Z, m_q + s_q Z)`.
pub fn gaussian_w_rho_1d(p: &GaussianLaw, q: &GaussianLaw, rho: f64) -> Result<f64> {
    if !(rho >= 1.0) {
        return Err(Error::invalid(format!("rho must be >= 1, got {rho}")));
    }
    let (sp, sq) = (p.std_dev_1d()?, q.std_dev_1d()?);
    Ok(shifted_normal_norm(p.mean[0] - q.mean[0], sp - sq, rho))
}
