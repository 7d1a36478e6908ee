//! SDE coefficient specifications and the built-in test-problem catalog.
//!
//! An [`SdeSpec`] bundles a drift `b(t, x)`, a diffusion matrix `σ(t, x)`, an
//! initial point, a horizon and declared regularity metadata (time-Hölder
//! exponent and constant, ellipticity floor). When the drift is affine in `x`
//! and the diffusion is state independent, an [`AffineStructure`] is attached
//! and unlocks the exact Gaussian oracles.

pub mod catalog;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

pub type VectorFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Returns `[∂σ/∂x_1, …, ∂σ/∂x_d]`.
pub type DiffusionDerivativeFn = Arc<dyn Fn(f64, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync>;
pub type TimeMatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
pub type TimeVectorFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Half-width of the sampling box used by the sampled Hölder certificate.
pub const HOLDER_SAMPLE_RADIUS: f64 = 2.0;
/// Half-width of the sampling box used by randomized ellipticity checks.
pub const ELLIPTICITY_SAMPLE_RADIUS: f64 = 5.0;

/// Declared regularity of the coefficients.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Regularity {
    /// Time-Hölder exponent γ in (0, 1].
    pub holder_exponent: f64,
    /// Constant K in `|f(t,x) - f(s,x)| <= K |t-s|^γ` on the sampling box.
    pub holder_constant: f64,
    /// Uniform ellipticity floor: `σσ*(t,x) - floor·I` is positive semidefinite.
    pub ellipticity_floor: f64,
}

/// Drift `B(t) x + c(t)` and state-independent diffusion `Σ(t)`.
#[derive(Clone)]
pub struct AffineStructure {
    pub matrix: TimeMatrixFn,
    pub offset: TimeVectorFn,
    pub noise: TimeMatrixFn,
}

impl AffineStructure {
    pub fn new(
        matrix: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        offset: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static,
        noise: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            matrix: Arc::new(matrix),
            offset: Arc::new(offset),
            noise: Arc::new(noise),
        }
    }

    /// Time-homogeneous structure with constant `B`, `c`, `Σ`.
    pub fn constant(matrix: DMatrix<f64>, offset: DVector<f64>, noise: DMatrix<f64>) -> Self {
        Self::new(move |_| matrix.clone(), move |_| offset.clone(), move |_| noise.clone())
    }

    /// Smallest eigenvalue of `Σ(t)Σ(t)*` over an evenly spaced mesh of `[0, horizon]`.
    pub fn min_noise_eigenvalue(&self, horizon: f64, mesh: usize) -> f64 {
        (0..=mesh)
            .map(|i| {
                let s = (self.noise)(horizon * i as f64 / mesh as f64);
                linalg::min_eigenvalue(&(&s * s.transpose()))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Result of [`SdeSpec::verify_ellipticity`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EllipticityReport {
    pub min_eigenvalue: f64,
    pub pass: bool,
}

/// Result of [`SdeSpec::holder_certificate`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct HolderReport {
    /// Largest observed `|f(t,x)-f(s,x)| / |t-s|^γ` over drift and diffusion.
    pub max_ratio: f64,
    pub declared: f64,
    pub pass: bool,
}

/// An SDE `dX = b(t,X) dt + σ(t,X) dW` on `[0, T]` started at `x₀`.
#[derive(Clone)]
pub struct SdeSpec {
    id: String,
    initial_point: DVector<f64>,
    horizon: f64,
    drift: VectorFn,
    diffusion: MatrixFn,
    regularity: Regularity,
    affine: Option<AffineStructure>,
    drift_jacobian: Option<MatrixFn>,
    diffusion_derivative: Option<DiffusionDerivativeFn>,
}

impl fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeSpec")
            .field("id", &self.id)
            .field("dimension", &self.dimension())
            .field("initial_point", &self.initial_point.as_slice())
            .field("horizon", &self.horizon)
            .field("regularity", &self.regularity)
            .field("affine", &self.affine.is_some())
            .finish()
    }
}

impl SdeSpec {
    pub fn new(
        id: impl Into<String>,
        initial_point: DVector<f64>,
        horizon: f64,
        drift: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        diffusion: impl Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        regularity: Regularity,
    ) -> Result<Self> {
        let spec = Self {
            id: id.into(),
            initial_point,
            horizon,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            regularity,
            affine: None,
            drift_jacobian: None,
            diffusion_derivative: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec whose coefficients are generated by `affine`. Jacobians are
    /// analytic: `∇b = B(t)`, `σ' = 0`.
    pub fn from_affine(
        id: impl Into<String>,
        initial_point: DVector<f64>,
        horizon: f64,
        affine: AffineStructure,
        regularity: Regularity,
    ) -> Result<Self> {
        let (bm, bc, sn) = (affine.matrix.clone(), affine.offset.clone(), affine.noise.clone());
        let jm = affine.matrix.clone();
        let d = initial_point.len();
        let spec = Self {
            id: id.into(),
            initial_point,
            horizon,
            drift: Arc::new(move |t, x| bm(t) * x + bc(t)),
            diffusion: Arc::new(move |t, _| sn(t)),
            regularity,
            affine: Some(affine),
            drift_jacobian: Some(Arc::new(move |t, _| jm(t))),
            diffusion_derivative: Some(Arc::new(move |_, _| vec![DMatrix::zeros(d, d); d])),
        };
        spec.validate()?;
        spec.check_affine_consistency()?;
        Ok(spec)
    }

    /// Attaches an affine structure to a spec built from callables, after
    /// checking that both descriptions agree on a sample of `(t, x)`.
    pub fn with_affine(mut self, affine: AffineStructure) -> Result<Self> {
        self.affine = Some(affine);
        self.check_affine_consistency()?;
        Ok(self)
    }

    /// Supplies analytic Jacobians; otherwise central finite differences are used.
    pub fn with_jacobians(
        mut self,
        drift_jacobian: impl Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        diffusion_derivative: impl Fn(f64, &DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.drift_jacobian = Some(Arc::new(drift_jacobian));
        self.diffusion_derivative = Some(Arc::new(diffusion_derivative));
        self
    }

    fn validate(&self) -> Result<()> {
        let r = &self.regularity;
        if self.initial_point.is_empty() {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !self.initial_point.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("initial point must be finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::invalid(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(r.ellipticity_floor > 0.0) {
            return Err(Error::invalid("ellipticity floor must be positive"));
        }
        if !(r.holder_exponent > 0.0 && r.holder_exponent <= 1.0) {
            return Err(Error::invalid(format!(
                "Hölder exponent must lie in (0, 1], got {}",
                r.holder_exponent
            )));
        }
        if !(r.holder_constant >= 0.0) {
            return Err(Error::invalid("Hölder constant must be non-negative"));
        }
        Ok(())
    }

    fn check_affine_consistency(&self) -> Result<()> {
        let Some(aff) = &self.affine else { return Ok(()) };
        let d = self.dimension();
        let mut r = rng::seeded(0x5EED_AFF1);
        for i in 0..10 {
            let t = self.horizon * i as f64 / 9.0;
            for _ in 0..10 {
                let x = DVector::from_fn(d, |_, _| r.random_range(-3.0..3.0));
                let (b, s) = self.evaluate_coefficients(t, &x)?;
                let b_aff = (aff.matrix)(t) * &x + (aff.offset)(t);
                let s_aff = (aff.noise)(t);
                let db = (&b - &b_aff).amax() / b_aff.amax().max(1.0);
                let ds = (&s - &s_aff).amax() / s_aff.amax().max(1.0);
                if db > 1e-12 || ds > 1e-12 {
                    return Err(Error::invalid(format!(
                        "affine structure disagrees with coefficients at t={t} (drift {db:e}, diffusion {ds:e})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dimension(&self) -> usize {
        self.initial_point.len()
    }

    pub fn initial_point(&self) -> &DVector<f64> {
        &self.initial_point
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn holder_exponent(&self) -> f64 {
        self.regularity.holder_exponent
    }

    pub fn ellipticity_floor(&self) -> f64 {
        self.regularity.ellipticity_floor
    }

    pub fn affine_part(&self) -> Option<&AffineStructure> {
        self.affine.as_ref()
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.drift_jacobian.is_some() && self.diffusion_derivative.is_some()
    }

    /// Unchecked drift evaluation.
    #[inline]
    pub fn drift(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(t, x)
    }

    /// Unchecked diffusion evaluation.
    #[inline]
    pub fn diffusion(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        (self.diffusion)(t, x)
    }

    /// Returns `(b(t,x), σ(t,x))`, rejecting out-of-range times, non-finite
    /// inputs and non-finite outputs.
    pub fn evaluate_coefficients(&self, t: f64, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch(x.len(), self.dimension()));
        }
        let bad = || Error::NonFiniteCoefficient { t, x: x.as_slice().to_vec() };
        if !x.iter().all(|v| v.is_finite()) {
            return Err(bad());
        }
        let b = self.drift(t, x);
        let s = self.diffusion(t, x);
        if !b.iter().all(|v| v.is_finite()) || !linalg::all_finite(&s) {
            return Err(bad());
        }
        Ok((b, s))
    }

    /// Jacobian `J[j][k] = ∂b_j/∂x_k`, analytic when supplied, otherwise by
    /// central differences with step `1e-6·(1+|x|)`.
    pub fn drift_jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        if let Some(j) = &self.drift_jacobian {
            return j(t, x);
        }
        let d = self.dimension();
        let h = fd_step(x);
        let mut jac = DMatrix::zeros(d, d);
        let mut xp = x.clone();
        for k in 0..d {
            xp[k] = x[k] + h;
            let fp = self.drift(t, &xp);
            xp[k] = x[k] - h;
            let fm = self.drift(t, &xp);
            xp[k] = x[k];
            jac.set_column(k, &((fp - fm) / (2.0 * h)));
        }
        jac
    }

    /// `[∂σ/∂x_1, …, ∂σ/∂x_d]`, analytic when supplied, otherwise by central
    /// differences with step `1e-6·(1+|x|)`.
    pub fn diffusion_derivative(&self, t: f64, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        if let Some(ds) = &self.diffusion_derivative {
            return ds(t, x);
        }
        let d = self.dimension();
        let h = fd_step(x);
        let mut xp = x.clone();
        (0..d)
            .map(|k| {
                xp[k] = x[k] + h;
                let fp = self.diffusion(t, &xp);
                xp[k] = x[k] - h;
                let fm = self.diffusion(t, &xp);
                xp[k] = x[k];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    /// Smallest eigenvalue of `σσ*` over the product of the sample times and
    /// points; passes iff it is at least `floor·(1-1e-9)`.
    pub fn verify_ellipticity(&self, sample_times: &[f64], sample_points: &[DVector<f64>]) -> Result<EllipticityReport> {
        if sample_times.is_empty() || sample_points.is_empty() {
            return Err(Error::invalid("ellipticity check needs non-empty samples"));
        }
        let mut lo = f64::INFINITY;
        for &t in sample_times {
            for x in sample_points {
                let (_, s) = self.evaluate_coefficients(t, x)?;
                lo = lo.min(linalg::min_eigenvalue(&(&s * s.transpose())));
            }
        }
        Ok(EllipticityReport {
            min_eigenvalue: lo,
            pass: lo >= self.ellipticity_floor() * (1.0 - 1e-9),
        })
    }

    /// Ellipticity check on `n` random `(t, x)` pairs with `x` uniform in the
    /// box of half-width [`ELLIPTICITY_SAMPLE_RADIUS`].
    pub fn verify_ellipticity_random(&self, n: usize, seed: u64) -> Result<EllipticityReport> {
        let mut r = rng::seeded(seed);
        let d = self.dimension();
        let mut lo = f64::INFINITY;
        for _ in 0..n {
            let t = r.random_range(0.0..=self.horizon);
            let x = DVector::from_fn(d, |_, _| {
                r.random_range(-ELLIPTICITY_SAMPLE_RADIUS..=ELLIPTICITY_SAMPLE_RADIUS)
            });
            let (_, s) = self.evaluate_coefficients(t, &x)?;
            lo = lo.min(linalg::min_eigenvalue(&(&s * s.transpose())));
        }
        Ok(EllipticityReport {
            min_eigenvalue: lo,
            pass: lo >= self.ellipticity_floor() * (1.0 - 1e-9),
        })
    }

    /// Sampled time-Hölder certificate for drift and diffusion on the box of
    /// half-width [`HOLDER_SAMPLE_RADIUS`].
    pub fn holder_certificate(&self, n: usize, seed: u64) -> Result<HolderReport> {
        let mut r = rng::seeded(seed);
        let d = self.dimension();
        let gamma = self.holder_exponent();
        let mut worst = 0.0_f64;
        for i in 0..n {
            let t = r.random_range(0.0..=self.horizon);
            // half the pairs are close together, where the Hölder ratio is largest
            let s = if i % 2 == 0 {
                r.random_range(0.0..=self.horizon)
            } else {
                let w = self.horizon * 10f64.powf(r.random_range(-6.0..-1.0));
                (t + r.random_range(-w..=w)).clamp(0.0, self.horizon)
            };
            if s == t {
                continue;
            }
            let x = DVector::from_fn(d, |_, _| r.random_range(-HOLDER_SAMPLE_RADIUS..=HOLDER_SAMPLE_RADIUS));
            let (bt, st) = self.evaluate_coefficients(t, &x)?;
            let (bs, ss) = self.evaluate_coefficients(s, &x)?;
            let denom = (t - s).abs().powf(gamma);
            worst = worst
                .max((bt - bs).norm() / denom)
                .max((st - ss).norm() / denom);
        }
        let declared = self.regularity.holder_constant;
        Ok(HolderReport {
            max_ratio: worst,
            declared,
            pass: worst <= declared * (1.0 + 1e-9) + 1e-12,
        })
    }
}

fn fd_step(x: &DVector<f64>) -> f64 {
    1e-6 * (1.0 + x.norm())
}
