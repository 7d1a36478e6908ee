//! Conditional moments of the Brownian increment given the Euler state.

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use super::{affine, check_time, euler_marginal_law, is_even_integer};
use crate::error::{Error, Result};
use crate::linalg;
use crate::quadrature::GaussHermite;
use crate::sde_model::SdeSpec;
use crate::time_grid::TimeGrid;

/// Budget of tensor-product nodes for non-even exponents with anisotropic covariance.
const TENSOR_BUDGET: f64 = 1e6;

/// `E|Y|^ρ` for `Y ~ N(0, Q)`.
///
/// Closed form when `Q` is a multiple of the identity (chi moments), exact
/// tensor Gauss–Hermite for even `ρ`, and a tensor rule of order up to 64
/// otherwise.
pub fn gaussian_norm_moment(q: &DMatrix<f64>, rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::invalid(format!("moment exponent must be positive, got {rho}")));
    }
    let eig = linalg::eigen(q);
    let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|l| l.max(0.0)).filter(|&l| l > 0.0).collect();
    if lambdas.is_empty() {
        return Ok(0.0);
    }
    let d = lambdas.len();
    let (lo, hi) = lambdas.iter().fold((f64::INFINITY, 0.0_f64), |(a, b), &l| (a.min(l), b.max(l)));
    if hi - lo <= 1e-12 * hi {
        // |Y|²/λ is chi-square with d degrees of freedom
        let log_m = 0.5 * rho * (2.0 * hi).ln() + ln_gamma(0.5 * (d as f64 + rho)) - ln_gamma(0.5 * d as f64);
        return Ok(log_m.exp());
    }
    let n = if is_even_integer(rho) {
        (rho / 2.0) as usize + 1
    } else {
        (TENSOR_BUDGET.powf(1.0 / d as f64) as usize).clamp(4, 64)
    };
    let rule = GaussHermite::new(n);
    let roots: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();
    Ok(rule.expect_normal_nd(d, |z| {
        let r2: f64 = z.iter().zip(&roots).map(|(zi, s)| (s * zi).powi(2)).sum();
        r2.powf(0.5 * rho)
    }))
}

/// `E|E[W_t - W_τ | X̄_t]|^ρ` for an affine SDE with state-independent noise.
///
/// `(W_t - W_τ, X̄_t)` is jointly Gaussian with cross-covariance
/// `(t-τ) Σ(τ)*`, so the conditional expectation is `N(0, Q)` with
/// `Q = (t-τ)² Σ(τ)* C_t⁻¹ Σ(τ)`.
pub fn conditional_increment_moment(spec: &SdeSpec, grid: &TimeGrid, t: f64, rho: f64) -> Result<f64> {
    let a = affine(spec)?;
    check_time(spec, t)?;
    let (_, tau) = grid.last_node_before(t)?;
    let lag = t - tau;
    if lag == 0.0 {
        return Ok(0.0);
    }
    let law = euler_marginal_law(spec, grid, t)?;
    let c_inv = linalg::inv_spd(&law.cov, "Euler covariance")
        .map_err(|_| Error::Degenerate(format!("Var(X̄_t) is singular at t={t}")))?;
    let sig = (a.noise)(tau);
    let q = linalg::symmetrize(&(sig.transpose() * c_inv * &sig * (lag * lag)));
    gaussian_norm_moment(&q, rho)
}

/// Envelope `C·((t-τ) ∧ ((t-τ)²/t + 1/N²))^{ρ/2}`; zero when `t = τ`.
pub fn malliavin_bound(t: f64, tau: f64, steps: usize, rho: f64, constant: f64) -> Result<f64> {
    if !(0.0 <= tau && tau <= t) {
        return Err(Error::invalid(format!("need 0 <= tau <= t, got tau={tau}, t={t}")));
    }
    if steps == 0 {
        return Err(Error::invalid("steps must be positive"));
    }
    let lag = t - tau;
    if lag == 0.0 {
        return Ok(0.0);
    }
    let n2 = (steps as f64).powi(2);
    Ok(constant * lag.min(lag * lag / t + 1.0 / n2).powf(0.5 * rho))
}

/// `E|Z|^ρ` for a standard normal scalar.
#[cfg(test)]
pub(crate) fn abs_normal_moment(rho: f64) -> f64 {
    (0.5 * rho * 2f64.ln() + ln_gamma(0.5 * (rho + 1.0)) - 0.5 * std::f64::consts::PI.ln()).exp()
}
