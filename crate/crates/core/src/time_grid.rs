//! Discretization grids: uniform `t_i = iT/N` and power-refined
//! `t_i = (i/N)^β T`, with the last-node map `τ_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridKind {
    Uniform,
    Power { beta: f64 },
}

/// Which node `τ_t` is returned when `t` sits exactly on a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NodeConvention {
    /// `t_k <= t < t_{k+1}`, so `τ_{t_k} = t_k` and `τ_T = T`.
    #[default]
    LeftClosed,
    /// `t_k < t <= t_{k+1}`, so `τ_T = t_{N-1}`; used inside step integrals.
    RightClosed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    nodes: Vec<f64>,
    kind: GridKind,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        check_common(horizon, steps)?;
        let n = steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|i| i as f64 * horizon / n).collect();
        nodes[steps] = horizon;
        Ok(Self { horizon, nodes, kind: GridKind::Uniform })
    }

    pub fn power(horizon: f64, steps: usize, beta: f64) -> Result<Self> {
        check_common(horizon, steps)?;
        if !(beta > 1.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("power grid needs beta > 1, got {beta}")));
        }
        let n = steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|i| (i as f64 / n).powf(beta) * horizon).collect();
        nodes[steps] = horizon;
        let grid = Self { horizon, nodes, kind: GridKind::Power { beta } };
        debug_assert!(grid.max_step() <= beta * horizon / n * (1.0 + 1e-12));
        Ok(grid)
    }

    pub fn build(kind: GridKind, horizon: f64, steps: usize) -> Result<Self> {
        match kind {
            GridKind::Uniform => Self::uniform(horizon, steps),
            GridKind::Power { beta } => Self::power(horizon, steps, beta),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn step_len(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn max_step(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// `(k, τ_t)` with `t_k <= t < t_{k+1}` (left-closed; `τ_T = T`).
    pub fn last_node_before(&self, t: f64) -> Result<(usize, f64)> {
        self.last_node_with(t, NodeConvention::LeftClosed)
    }

    pub fn last_node_with(&self, t: f64, convention: NodeConvention) -> Result<(usize, f64)> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        let k = match convention {
            NodeConvention::LeftClosed => self.nodes.partition_point(|&v| v <= t) - 1,
            NodeConvention::RightClosed => self.nodes.partition_point(|&v| v < t).saturating_sub(1),
        };
        Ok((k, self.nodes[k]))
    }

    /// True when every node of `coarse` is a node of `self` (to `1e-12·T`).
    pub fn refines(&self, coarse: &TimeGrid) -> bool {
        if (self.horizon - coarse.horizon).abs() > 1e-12 * self.horizon {
            return false;
        }
        let tol = 1e-12 * self.horizon;
        coarse.nodes.iter().all(|&c| {
            let i = self.nodes.partition_point(|&v| v < c - tol);
            i < self.nodes.len() && (self.nodes[i] - c).abs() <= tol
        })
    }

    /// Grid nodes and step midpoints, `2N + 1` sorted times.
    pub fn nodes_and_midpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.nodes.len());
        for w in self.nodes.windows(2) {
            out.push(w[0]);
            out.push(0.5 * (w[0] + w[1]));
        }
        out.push(self.horizon);
        out
    }

    /// `∫₀ᵀ ((s-τ_s)²/s + 1/N²) ∧ (s-τ_s) ds`, integrated per step by adaptive
    /// Simpson after splitting each step at the crossing of the two branches.
    /// Absolute tolerance `1e-12·T` overall.
    pub fn step_lag_integral(&self) -> f64 {
        let c = 1.0 / (self.steps() as f64).powi(2);
        let total_tol = 1e-12 * self.horizon;
        let mut sum = 0.0;
        for k in 0..self.steps() {
            let tk = self.nodes[k];
            let h = self.step_len(k);
            let tol = total_tol * h / self.horizon;
            // u·t/(t+u) = c at u* = c·t/(t-c); below u* the min is the linear branch
            let split = if tk > c { (c * tk / (tk - c)).min(h) } else { h };
            sum += 0.5 * split * split;
            if split < h {
                let g = |u: f64| u * u / (tk + u) + c;
                sum += adaptive_simpson(&g, split, h, tol);
            }
        }
        sum
    }
}

fn check_common(horizon: f64, steps: usize) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
    }
    if steps == 0 {
        return Err(Error::invalid("grid needs at least one step"));
    }
    Ok(())
}

/// `1/N^{2γ} + ln N / N²`, the scalar driver that closes the Gronwall argument
/// for the marginal-law error.
pub fn gronwall_driver(steps: usize, gamma: f64) -> f64 {
    let n = steps as f64;
    n.powf(-2.0 * gamma) + n.ln() / (n * n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn uniform_examples() {
        assert_eq!(TimeGrid::uniform(1.0, 4).unwrap().nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(TimeGrid::uniform(2.0, 1).unwrap().nodes(), &[0.0, 2.0]);
        assert!(TimeGrid::uniform(1.0, 0).is_err());
        assert!(TimeGrid::uniform(-1.0, 3).is_err());
    }

    #[test]
    fn power_examples() {
        assert_eq!(TimeGrid::power(1.0, 2, 2.0).unwrap().nodes(), &[0.0, 0.25, 1.0]);
        assert_eq!(
            TimeGrid::power(1.0, 4, 2.0).unwrap().nodes(),
            &[0.0, 1.0 / 16.0, 0.25, 9.0 / 16.0, 1.0]
        );
        assert!(TimeGrid::power(1.0, 2, 1.0).is_err());
    }

    #[test]
    fn last_node_examples() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.last_node_before(0.3).unwrap(), (1, 0.25));
        assert_eq!(g.last_node_before(0.25).unwrap(), (1, 0.25));
        assert_eq!(g.last_node_before(1.0).unwrap(), (4, 1.0));
        assert_eq!(g.last_node_with(1.0, NodeConvention::RightClosed).unwrap(), (3, 0.75));
        assert_eq!(g.last_node_with(0.0, NodeConvention::RightClosed).unwrap(), (0, 0.0));
        assert!(g.last_node_before(1.1).is_err());
        assert!(g.last_node_before(-0.1).is_err());
        let p = TimeGrid::power(1.0, 2, 2.0).unwrap();
        assert_eq!(p.last_node_before(0.5).unwrap(), (1, 0.25));
    }

    #[test]
    fn last_node_matches_linear_scan() {
        use rand::Rng;
        let mut r = crate::rng::seeded(3);
        for grid in [
            TimeGrid::uniform(1.0, 37).unwrap(),
            TimeGrid::power(2.0, 50, 2.0).unwrap(),
            TimeGrid::power(1.0, 13, 3.0).unwrap(),
        ] {
            for _ in 0..10_000 {
                let t = r.random_range(0.0..=grid.horizon());
                let scan = grid.nodes().iter().rposition(|&v| v <= t).unwrap();
                assert_eq!(grid.last_node_before(t).unwrap().0, scan);
            }
            for &t in grid.nodes() {
                let scan = grid.nodes().iter().rposition(|&v| v <= t).unwrap();
                assert_eq!(grid.last_node_before(t).unwrap().0, scan);
            }
        }
    }

    #[test]
    fn uniform_floor_formula() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        for i in 0..1000 {
            let t = i as f64 / 1000.0;
            let (_, tau) = g.last_node_before(t).unwrap();
            let expect = (10.0 * t).floor() / 10.0;
            assert!((tau - expect).abs() < 1e-15, "t={t}");
        }
    }

    #[test]
    fn power_max_step_bound() {
        for beta in [1.5, 2.0, 3.0] {
            for n in (1..=10_000).step_by(7).chain([10_000]) {
                let g = TimeGrid::power(1.0, n, beta).unwrap();
                let last = g.step_len(n - 1);
                assert!(last <= beta / n as f64 * (1.0 + 1e-12), "beta={beta} n={n}");
                assert!(g.max_step() <= beta / n as f64 * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn refinement() {
        let c = TimeGrid::uniform(1.0, 8).unwrap();
        assert!(TimeGrid::uniform(1.0, 64).unwrap().refines(&c));
        assert!(!TimeGrid::uniform(1.0, 12).unwrap().refines(&c));
        let pc = TimeGrid::power(1.0, 8, 2.0).unwrap();
        assert!(TimeGrid::power(1.0, 1024, 2.0).unwrap().refines(&pc));
        assert!(!TimeGrid::uniform(2.0, 64).unwrap().refines(&c));
    }

    #[test]
    fn midpoints() {
        let g = TimeGrid::uniform(1.0, 2).unwrap();
        assert_eq!(g.nodes_and_midpoints(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    /// Closed-form antiderivative of the lag integrand, independent of the
    /// quadrature path.
    fn lag_integral_closed_form(grid: &TimeGrid) -> f64 {
        let c = 1.0 / (grid.steps() as f64).powi(2);
        let mut sum = 0.0;
        for k in 0..grid.steps() {
            let t = grid.nodes()[k];
            let h = grid.step_len(k);
            let u = if t > c { (c * t / (t - c)).min(h) } else { h };
            sum += 0.5 * u * u;
            if u < h {
                // ∫ u²/(t+u) = u²/2 - t·u + t² ln(t+u)
                let f = |v: f64| 0.5 * v * v - t * v + t * t * (v / t).ln_1p();
                sum += f(h) - f(u) + c * (h - u);
            }
        }
        sum
    }

    #[test]
    fn lag_integral_single_step() {
        assert_relative_eq!(TimeGrid::uniform(1.0, 1).unwrap().step_lag_integral(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn lag_integral_matches_closed_form() {
        for g in [
            TimeGrid::uniform(1.0, 16).unwrap(),
            TimeGrid::uniform(2.0, 100).unwrap(),
            TimeGrid::power(1.0, 64, 2.0).unwrap(),
            TimeGrid::power(1.0, 33, 3.0).unwrap(),
        ] {
            let q = g.step_lag_integral();
            let e = lag_integral_closed_form(&g);
            assert!((q - e).abs() <= 1e-12 * g.horizon(), "{q} vs {e}");
        }
    }

    #[test]
    fn lag_integral_bounded_by_linear_branch() {
        for g in [TimeGrid::uniform(1.0, 50).unwrap(), TimeGrid::power(1.0, 50, 2.0).unwrap()] {
            let v = g.step_lag_integral();
            let lin: f64 = (0..g.steps()).map(|k| 0.5 * g.step_len(k).powi(2)).sum();
            assert!(v >= 0.0);
            assert!(v <= lin + 1e-15);
            assert!(lin <= g.horizon() * g.max_step());
        }
    }

    #[test]
    fn power_lag_integral_scales_like_inverse_square() {
        let vals: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|&n| TimeGrid::power(1.0, n, 2.0).unwrap().step_lag_integral() * (n * n) as f64)
            .collect();
        let (lo, hi) = vals.iter().fold((f64::MAX, 0.0_f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo <= 2.0, "{vals:?}");
    }

    proptest! {
        #[test]
        fn uniform_nodes_exact(n in 1usize..2000, t in 0.1f64..10.0) {
            let g = TimeGrid::uniform(t, n).unwrap();
            for (i, &v) in g.nodes().iter().enumerate() {
                prop_assert!((v - i as f64 * t / n as f64).abs() <= 1e-15 * t);
            }
            prop_assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        }
    }
}
