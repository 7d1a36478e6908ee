//! Log-log rate fits with a residual bootstrap, and the `C/N^γ` envelope check.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SupWCurve;
use crate::error::{Error, Result};
use crate::rng;

pub const BOOTSTRAP_RESAMPLES: usize = 1000;
const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreferredModel {
    PowerLaw,
    /// `value = C√(ln N)/N`.
    LogCorrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub c: f64,
    /// Residual sum of squares on the log scale.
    pub rss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFitReport {
    pub slope: f64,
    pub intercept: f64,
    /// 95% percentile interval of the bootstrapped slope.
    pub ci95: (f64, f64),
    pub residuals: Vec<f64>,
    pub power_rss: f64,
    /// Absent when some `N < 2`, where `ln ln N` is undefined.
    pub log_corrected: Option<ModelFit>,
    pub preferred: PreferredModel,
    pub resamples: usize,
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn check_positive(ns: &[usize], values: &[f64]) -> Result<()> {
    if ns.len() != values.len() {
        return Err(Error::SizeMismatch(ns.len(), values.len()));
    }
    for (&n, &v) in ns.iter().zip(values) {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::NonPositiveCurve { n, value: v });
        }
    }
    Ok(())
}

/// Least squares of `ln value` on `ln N`, a seeded residual bootstrap for the
/// slope, and the one-parameter `C√(ln N)/N` alternative.
pub fn fit_power_law(ns: &[usize], values: &[f64], seed: u64) -> Result<RateFitReport> {
    check_positive(ns, values)?;
    if ns.len() < MIN_POINTS {
        return Err(Error::invalid(format!("need at least {MIN_POINTS} points, got {}", ns.len())));
    }
    let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    if x.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("N values must be distinct"));
    }
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (slope, intercept) = ols(&x, &y);
    let fitted: Vec<f64> = x.iter().map(|xi| intercept + slope * xi).collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let power_rss = residuals.iter().map(|r| r * r).sum();

    let mut r = rng::seeded(rng::sub_seed(seed, "bootstrap"));
    let mut slopes: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| {
            let yb: Vec<f64> = fitted.iter().map(|f| f + residuals[r.random_range(0..residuals.len())]).collect();
            ols(&x, &yb).0
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let ci95 = (quantile(&slopes, 0.025).min(slope), quantile(&slopes, 0.975).max(slope));

    let log_corrected = ns.iter().all(|&n| n >= 2).then(|| {
        // ln v = ln C + ½ ln ln N - ln N
        let z: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| yi - 0.5 * xi.ln() + xi).collect();
        let ln_c = z.iter().sum::<f64>() / z.len() as f64;
        ModelFit { c: ln_c.exp(), rss: z.iter().map(|zi| (zi - ln_c).powi(2)).sum() }
    });
    let preferred = match log_corrected {
        Some(m) if m.rss < power_rss => PreferredModel::LogCorrected,
        _ => PreferredModel::PowerLaw,
    };
    Ok(RateFitReport { slope, intercept, ci95, residuals, power_rss, log_corrected, preferred, resamples: BOOTSTRAP_RESAMPLES })
}

pub fn fit_loglog(curve: &SupWCurve, seed: u64) -> Result<RateFitReport> {
    fit_power_law(&curve.ns(), &curve.values(), seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gamma: f64,
    pub with_log: bool,
    /// Largest envelope ratio `value·N^γ / (1 + 1_{γ=1, log}√ln N)`.
    pub c_star: f64,
    pub argmax_n: usize,
    pub ratios: Vec<f64>,
    pub interior_max: bool,
    /// The last three ratios are non-increasing.
    pub tail_non_increasing: bool,
    /// Saturation heuristic: `interior_max || tail_non_increasing`.
    pub bounded: bool,
}

pub fn envelope_ratios(ns: &[usize], values: &[f64], gamma: f64, with_log: bool) -> Vec<f64> {
    let log = with_log && gamma == 1.0;
    ns.iter()
        .zip(values)
        .map(|(&n, &v)| {
            let nf = n as f64;
            let denom = if log { 1.0 + nf.ln().max(0.0).sqrt() } else { 1.0 };
            v * nf.powf(gamma) / denom
        })
        .collect()
}

pub fn bound_report(ns: &[usize], values: &[f64], gamma: f64, with_log: bool) -> Result<BoundReport> {
    check_positive(ns, values)?;
    if ns.is_empty() {
        return Err(Error::invalid("empty curve"));
    }
    let ratios = envelope_ratios(ns, values, gamma, with_log);
    let (k, &c_star) = ratios
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let m = ratios.len();
    let interior_max = k + 1 < m;
    let tail_non_increasing = m >= 3 && ratios[m - 3] >= ratios[m - 2] && ratios[m - 2] >= ratios[m - 1];
    Ok(BoundReport {
        gamma,
        with_log,
        c_star,
        argmax_n: ns[k],
        ratios,
        interior_max,
        tail_non_increasing,
        bounded: interior_max || tail_non_increasing,
    })
}

pub fn check_theorem_bound(curve: &SupWCurve, gamma: f64, with_log: bool) -> Result<BoundReport> {
    bound_report(&curve.ns(), &curve.values(), gamma, with_log)
}
