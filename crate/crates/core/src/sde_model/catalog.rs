//! Built-in test problems.
//!
//! | id | d | structure | γ | a̲ |
//! |----|---|-----------|---|----|
//! | `const-ou` | 2 | `B=-I`, `c=0`, `Σ=σ₀I` | 1 | σ₀² |
//! | `holder-ou(γ)` | 2 | `B=-(1+t^γ)I`, `Σ=σ₀(1+t^γ)I` | γ | σ₀² |
//! | `tanh-2d(γ)` | 2 | `b_i=tanh(x_{3-i})(1+t^γ)`, `σ=I+½diag(tanh x)` | γ | 1/4 |
//! | `bures-2d` | 2 | affine, non-commuting `B(t)`, anisotropic `Σ(t)` | 1 | 1/2 |
//! | `brownian-1d` | 1 | `b=0`, `σ=1` | 1 | 1 |
//! | `rough-ou(γ)` | 2 | `B=-a(t)I`, `Σ=a(t)I`, `a` a lacunary cosine series | γ | 1 |
//!
//! All entries use `T = 1` and `σ₀ = 1`. Hölder constants are declared for
//! the sampling box of half-width [`super::HOLDER_SAMPLE_RADIUS`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{AffineStructure, Regularity, SdeSpec};
use crate::error::{Error, Result};

pub const SIGMA0: f64 = 1.0;
pub const HORIZON: f64 = 1.0;
/// Number of cosine levels in `rough-ou`.
pub const ROUGH_LEVELS: u32 = 14;

fn ou_start(d: usize) -> DVector<f64> {
    DVector::from_fn(d, |i, _| if i == 0 { 1.0 } else { 0.0 })
}

/// Bound on `|f(t,x)|`-weighted time increments for `x` in the sampling box.
fn box_norm(d: usize) -> f64 {
    super::HOLDER_SAMPLE_RADIUS * (d as f64).sqrt()
}

/// `const-ou`: `dX = -X dt + σ₀ dW`, started at `(1, 0, …)`.
pub fn const_ou(d: usize) -> SdeSpec {
    SdeSpec::from_affine(
        "const-ou",
        ou_start(d),
        HORIZON,
        AffineStructure::constant(-DMatrix::identity(d, d), DVector::zeros(d), DMatrix::identity(d, d) * SIGMA0),
        Regularity { holder_exponent: 1.0, holder_constant: 0.0, ellipticity_floor: SIGMA0 * SIGMA0 },
    )
    .expect("const-ou is valid")
}

/// `holder-ou(γ)`: `B(t) = -(1+t^γ)I`, `Σ(t) = σ₀(1+t^γ)I` in dimension 2.
pub fn holder_ou(gamma: f64) -> SdeSpec {
    holder_ou_dim(gamma, 2)
}

pub fn holder_ou_dim(gamma: f64, d: usize) -> SdeSpec {
    let f = move |t: f64| 1.0 + t.powf(gamma);
    // |t^γ - s^γ| <= |t-s|^γ for γ in (0,1]
    let k = box_norm(d).max(SIGMA0 * (d as f64).sqrt());
    SdeSpec::from_affine(
        format!("holder-ou({})", fmt_gamma(gamma)),
        ou_start(d),
        HORIZON,
        AffineStructure::new(
            move |t| -DMatrix::identity(d, d) * f(t),
            move |_| DVector::zeros(d),
            move |t| DMatrix::identity(d, d) * (SIGMA0 * f(t)),
        ),
        Regularity { holder_exponent: gamma, holder_constant: k, ellipticity_floor: SIGMA0 * SIGMA0 },
    )
    .expect("holder-ou is valid")
}

/// `tanh-2d(γ)`: bounded `C²` coefficients with state-dependent diffusion.
pub fn tanh_2d(gamma: f64) -> SdeSpec {
    let f = move |t: f64| 1.0 + t.powf(gamma);
    let sech2 = |v: f64| 1.0 - v.tanh().powi(2);
    SdeSpec::new(
        format!("tanh-2d({})", fmt_gamma(gamma)),
        DVector::from_vec(vec![0.5, -0.5]),
        HORIZON,
        move |t, x| DVector::from_vec(vec![x[1].tanh() * f(t), x[0].tanh() * f(t)]),
        |_, x| DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 + 0.5 * x[0].tanh(), 1.0 + 0.5 * x[1].tanh()])),
        // |tanh| < 1 so the drift moves by at most √2 |t-s|^γ; σ is time independent
        Regularity { holder_exponent: gamma, holder_constant: std::f64::consts::SQRT_2, ellipticity_floor: 0.25 },
    )
    .expect("tanh-2d is valid")
    .with_jacobians(
        move |t, x| DMatrix::from_row_slice(2, 2, &[0.0, sech2(x[1]) * f(t), sech2(x[0]) * f(t), 0.0]),
        move |_, x| {
            (0..2)
                .map(|k| {
                    let mut m = DMatrix::zeros(2, 2);
                    m[(k, k)] = 0.5 * sech2(x[k]);
                    m
                })
                .collect()
        },
    )
}

/// `bures-2d`: `B(t) = B₀ + tB₁` with `[B₀, B₁] ≠ 0`, `c(t) = (0.2, -0.1t)`,
/// `Σ(t) = [[1+t/2, 0.3], [-0.2, 0.7]]`.
pub fn bures_2d() -> SdeSpec {
    let b0 = DMatrix::from_row_slice(2, 2, &[-1.0, 0.6, 0.0, -0.5]);
    let b1 = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.4, -0.3]);
    SdeSpec::from_affine(
        "bures-2d",
        DVector::from_vec(vec![0.5, -0.5]),
        HORIZON,
        AffineStructure::new(
            move |t| &b0 + &b1 * t,
            |t| DVector::from_vec(vec![0.2, -0.1 * t]),
            |t| DMatrix::from_row_slice(2, 2, &[1.0 + 0.5 * t, 0.3, -0.2, 0.7]),
        ),
        // ‖B₁‖·|x| + |c'| <= 0.5·2√2 + 0.1 on the box; Σ' has norm 0.5
        Regularity { holder_exponent: 1.0, holder_constant: 2.0, ellipticity_floor: 0.5 },
    )
    .expect("bures-2d is valid")
}

/// `brownian-1d`: `X = W`.
pub fn brownian_1d() -> SdeSpec {
    SdeSpec::from_affine(
        "brownian-1d",
        DVector::zeros(1),
        HORIZON,
        AffineStructure::constant(DMatrix::zeros(1, 1), DVector::zeros(1), DMatrix::identity(1, 1)),
        Regularity { holder_exponent: 1.0, holder_constant: 0.0, ellipticity_floor: 1.0 },
    )
    .expect("brownian-1d is valid")
}

/// Lacunary cosine series `a(t) = 1 + S⁻¹ Σ_{k<=L} 2^{-kγ}(1 - cos(2^k π t))`
/// with `S = Σ 2^{-kγ}`; Hölder-γ uniformly in `t`, not just at the origin.
#[derive(Debug, Clone, Copy)]
pub struct RoughProfile {
    pub gamma: f64,
    pub levels: u32,
}

impl RoughProfile {
    fn norm(&self) -> f64 {
        (0..=self.levels).map(|k| 2f64.powf(-(k as f64) * self.gamma)).sum()
    }

    pub fn eval(&self, t: f64) -> f64 {
        let s: f64 = (0..=self.levels)
            .map(|k| {
                let w = 2f64.powi(k as i32) * std::f64::consts::PI;
                2f64.powf(-(k as f64) * self.gamma) * (1.0 - (w * t).cos())
            })
            .sum();
        1.0 + s / self.norm()
    }

    /// Bound on `sup |a(t) - a(s)| / |t-s|^γ`.
    pub fn holder_bound(&self) -> f64 {
        let g = self.gamma;
        let head = if g < 1.0 {
            let r = 2f64.powf(1.0 - g);
            r / (r - 1.0)
        } else {
            // γ = 1: the head sum grows with the number of levels
            f64::from(self.levels + 1)
        };
        let tail = 1.0 / (1.0 - 2f64.powf(-g));
        2f64.powf(1.0 - g) * std::f64::consts::PI.powf(g) * (head + tail) / self.norm()
    }
}

/// `rough-ou(γ)`: `B = -a(t)I`, `Σ = a(t)I` with `a` from [`RoughProfile`].
pub fn rough_ou(gamma: f64) -> SdeSpec {
    rough_ou_levels(gamma, ROUGH_LEVELS)
}

pub fn rough_ou_levels(gamma: f64, levels: u32) -> SdeSpec {
    let d = 2;
    let profile = RoughProfile { gamma, levels };
    let a = Arc::new(move |t: f64| profile.eval(t));
    let (a1, a2) = (a.clone(), a.clone());
    let k = profile.holder_bound() * box_norm(d).max((d as f64).sqrt());
    SdeSpec::from_affine(
        format!("rough-ou({})", fmt_gamma(gamma)),
        ou_start(d),
        HORIZON,
        AffineStructure::new(
            move |t| -DMatrix::identity(d, d) * a1(t),
            move |_| DVector::zeros(d),
            move |t| DMatrix::identity(d, d) * a2(t),
        ),
        Regularity { holder_exponent: gamma, holder_constant: k, ellipticity_floor: 1.0 },
    )
    .expect("rough-ou is valid")
}

fn fmt_gamma(g: f64) -> String {
    format!("{g}")
}

fn require_gamma(id: &str, gamma: Option<f64>) -> Result<f64> {
    let g = gamma.ok_or_else(|| Error::Config(format!("'{id}' needs a gamma parameter")))?;
    if !(g > 0.0 && g <= 1.0) {
        return Err(Error::Config(format!("gamma must lie in (0, 1], got {g}")));
    }
    Ok(g)
}

/// Resolves a catalog id as written in config files (`sde = "holder-ou"`,
/// `gamma = 0.5`). Parameterized ids also accept the `id(γ)` form.
pub fn lookup(id: &str, gamma: Option<f64>) -> Result<SdeSpec> {
    let (base, inline) = match id.split_once('(') {
        Some((b, rest)) => {
            let g = rest
                .trim_end_matches(')')
                .parse::<f64>()
                .map_err(|_| Error::UnknownSde(id.to_string()))?;
            (b, Some(g))
        }
        None => (id, None),
    };
    let gamma = inline.or(gamma);
    match base {
        "const-ou" => Ok(const_ou(2)),
        "holder-ou" => Ok(holder_ou(require_gamma(base, gamma)?)),
        "tanh-2d" => Ok(tanh_2d(require_gamma(base, gamma)?)),
        "bures-2d" => Ok(bures_2d()),
        "brownian-1d" => Ok(brownian_1d()),
        "rough-ou" => Ok(rough_ou(require_gamma(base, gamma)?)),
        _ => Err(Error::UnknownSde(id.to_string())),
    }
}

/// Every built-in entry under its display id.
pub fn builtin_catalog() -> Vec<(String, SdeSpec)> {
    let specs = vec![
        const_ou(2),
        holder_ou(0.25),
        holder_ou(0.5),
        holder_ou(1.0),
        tanh_2d(0.5),
        tanh_2d(1.0),
        bures_2d(),
        brownian_1d(),
        rough_ou(0.5),
    ];
    specs.into_iter().map(|s| (s.id().to_string(), s)).collect()
}
