use super::*;
use crate::time_grid::gronwall_driver;
use approx::assert_relative_eq;

fn sweep_ns() -> Vec<usize> {
    (3..=9).map(|k| 1usize << k).collect()
}

#[test]
fn exact_power_law_fit() {
    let ns = sweep_ns();
    let v: Vec<f64> = ns.iter().map(|&n| 1.0 / n as f64).collect();
    let f = fit_power_law(&ns, &v, 1).unwrap();
    assert!((f.slope + 1.0).abs() < 1e-3);
    assert!(f.ci95.1 - f.ci95.0 < 1e-3);
    assert_eq!(f.preferred, PreferredModel::PowerLaw);
    let flat = fit_power_law(&ns, &vec![0.3; ns.len()], 1).unwrap();
    assert!(flat.slope.abs() < 1e-12);
}

#[test]
fn log_corrected_synthetic_curve() {
    let ns = sweep_ns();
    let v: Vec<f64> = ns.iter().map(|&n| (n as f64).ln().sqrt() / n as f64).collect();
    let f = fit_power_law(&ns, &v, 1).unwrap();
    // d ln v / d ln N = -1 + 1/(2 ln N); averaged over ln N in [ln 8, ln 512]
    // by least squares this is close to -1 + ln(3)/(2·ln 64) ≈ -0.868
    let expected = -1.0 + 3f64.ln() / (2.0 * 64f64.ln());
    assert!((f.slope - expected).abs() < 0.01, "slope {}", f.slope);
    assert_eq!(f.preferred, PreferredModel::LogCorrected);
    let m = f.log_corrected.unwrap();
    assert_relative_eq!(m.c, 1.0, epsilon = 1e-12);
    assert!(m.rss < 1e-20 && f.power_rss > 1e-4);
    assert!(f.ci95.0 <= f.slope && f.slope <= f.ci95.1);
}

#[test]
fn bootstrap_is_seeded() {
    let ns = sweep_ns();
    let v: Vec<f64> = ns.iter().enumerate().map(|(i, &n)| (1.0 + 0.1 * (i as f64).sin()) / n as f64).collect();
    let a = fit_power_law(&ns, &v, 5).unwrap();
    assert_eq!(a, fit_power_law(&ns, &v, 5).unwrap());
    assert!(a.ci95.0 < a.slope && a.slope < a.ci95.1);
}

#[test]
fn fit_rejects_bad_curves() {
    let ns = vec![8, 16, 32, 64];
    assert!(matches!(fit_power_law(&ns, &[1.0, 0.5, 0.0, 0.1], 0), Err(Error::NonPositiveCurve { n: 32, .. })));
    assert!(fit_power_law(&ns[..3], &[1.0, 0.5, 0.2], 0).is_err());
}

#[test]
fn envelope_examples() {
    let ns = sweep_ns();
    let v: Vec<f64> = ns.iter().map(|&n| 2.0 / (n as f64).sqrt()).collect();
    assert_relative_eq!(bound_report(&ns, &v, 0.5, false).unwrap().c_star, 2.0, epsilon = 1e-12);

    let v: Vec<f64> = ns.iter().map(|&n| (n as f64).ln().sqrt() / n as f64).collect();
    let with_log = bound_report(&ns, &v, 1.0, true).unwrap();
    assert!(with_log.c_star <= 1.0 + 1e-9);
    let bare = bound_report(&ns, &v, 1.0, false).unwrap();
    assert!(bare.ratios.windows(2).all(|w| w[1] > w[0]));
    assert!(!bare.bounded);
    assert_eq!(bare.argmax_n, 512);
}

#[test]
fn oracle_sweep_matches_direct_evaluation() {
    let exp = ExperimentSpec::oracle("const-ou", None, 2.0, vec![8, 16]);
    let curve = run_marginal_sweep(&exp).unwrap();
    let spec = catalog::const_ou(2);
    for p in &curve.points {
        let grid = TimeGrid::uniform(1.0, p.n).unwrap();
        let best = grid
            .nodes_and_midpoints()
            .iter()
            .map(|&t| {
                let e = gaussian_oracle::euler_marginal_law(&spec, &grid, t).unwrap();
                let s = gaussian_oracle::sde_marginal_law(&spec, t, DEFAULT_ODE_TOLERANCE).unwrap();
                gaussian_oracle::gaussian_w2(&e, &s).unwrap()
            })
            .fold(0.0, f64::max);
        assert_relative_eq!(p.sup_w, best, max_relative = 1e-8);
        assert_eq!(p.stderr, 0.0);
    }
}

#[test]
fn scheme_against_itself_is_zero() {
    let spec = catalog::bures_2d();
    let grid = TimeGrid::power(1.0, 12, 2.0).unwrap();
    let d = oracle_distances(&spec, &grid, Some(&grid), &grid.nodes_and_midpoints(), 2.0).unwrap();
    assert!(d.iter().all(|p| p.value == 0.0));
}

#[test]
fn const_ou_curve_decreases() {
    let exp = ExperimentSpec::oracle("const-ou", None, 2.0, sweep_ns());
    let v = run_marginal_sweep(&exp).unwrap().values();
    assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
}

#[test]
fn validation_errors() {
    let ok = ExperimentSpec::oracle("const-ou", None, 2.0, vec![8, 16]);
    ok.validate().unwrap();
    let bad = |f: &dyn Fn(&mut ExperimentSpec)| {
        let mut e = ok.clone();
        f(&mut e);
        e.validate().is_err()
    };
    assert!(bad(&|e| e.ns = vec![16, 8]));
    assert!(bad(&|e| e.ns = vec![8]));
    assert!(bad(&|e| e.reference = Reference::FineEuler { refinement: 4 }));
    assert!(bad(&|e| e.estimator = Estimator::ExactOt));
    assert!(bad(&|e| e.sde = "tanh-2d(0.5)".into()));
    assert!(bad(&|e| e.rho = 3.0));
    assert!(bad(&|e| e.estimator = Estimator::OneDimExact));
    assert!(bad(&|e| e.grid = GridKind::Power { beta: 1.0 }));
    assert!(!bad(&|e| {
        e.estimator = Estimator::ExactOt;
        e.seed = Some(1);
    }));
}

#[test]
fn errors_carry_n() {
    let exp = ExperimentSpec {
        estimator: Estimator::ExactOt,
        seed: Some(3),
        paths: wasserstein::EXACT_SIZE_CAP + 1,
        ns: vec![2, 3],
        checkpoints: CheckpointPolicy::Times(vec![1.0]),
        ..ExperimentSpec::oracle("const-ou", None, 2.0, vec![])
    };
    match run_marginal_sweep(&exp) {
        Err(Error::AtN { n, source }) => {
            assert_eq!(n, 2);
            assert!(matches!(*source, Error::SizeOverCap { .. }));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn config_round_trip() {
    let text = r#"
sde = "holder-ou"
gamma = 0.5
rho = 2.0
ns = [8, 16, 32]
paths = 500
seed = 11
estimator = "exact-ot"
checkpoints = [0.25, 1.0]

[grid]
kind = "power"
beta = 2.0

[reference]
kind = "fine-euler"
refinement = 8
"#;
    let exp: ExperimentSpec = toml::from_str(text).unwrap();
    assert_eq!(exp.grid, GridKind::Power { beta: 2.0 });
    assert_eq!(exp.reference, Reference::FineEuler { refinement: 8 });
    assert_eq!(exp.checkpoints, CheckpointPolicy::Times(vec![0.25, 1.0]));
    let back: ExperimentSpec = toml::from_str(&toml::to_string(&exp).unwrap()).unwrap();
    assert_eq!(back, exp);
    let named: ExperimentSpec = toml::from_str(&text.replace("checkpoints = [0.25, 1.0]", "checkpoints = \"grid-nodes\"")).unwrap();
    assert_eq!(named.checkpoints, CheckpointPolicy::Named(CheckpointSet::GridNodes));
    assert!(toml::from_str::<ExperimentSpec>(&format!("bogus = 1\n{text}")).is_err());
}

#[test]
fn sampled_sweep_is_deterministic() {
    let exp = ExperimentSpec {
        estimator: Estimator::ExactOt,
        seed: Some(21),
        paths: 200,
        ns: vec![2, 4],
        reference: Reference::FineEuler { refinement: 8 },
        ..ExperimentSpec::oracle("tanh-2d", Some(0.5), 2.0, vec![])
    };
    let a = run_marginal_sweep(&exp).unwrap();
    assert_eq!(a, run_marginal_sweep(&exp).unwrap());
    assert!(a.note.is_some());
    assert!(a.points.iter().all(|p| p.sup_w > 0.0 && p.stderr > 0.0));
    let one_d = ExperimentSpec { sde: "brownian-1d".into(), estimator: Estimator::OneDimExact, reference: Reference::Oracle, ..exp };
    let c = run_marginal_sweep(&one_d).unwrap();
    assert!(c.points.iter().all(|p| p.sup_w.is_finite()));
}

#[test]
fn strong_error_dominates_law_distance() {
    let base = ExperimentSpec {
        ns: vec![4, 8, 16],
        reference: Reference::FineEuler { refinement: 8 },
        ..ExperimentSpec::oracle("holder-ou", Some(0.5), 2.0, vec![])
    };
    let law = run_marginal_sweep(&base).unwrap();
    let strong = run_strong_sweep(&ExperimentSpec { seed: Some(4), paths: 4000, ..base }).unwrap();
    for (w, s) in law.points.iter().zip(&strong.points) {
        assert!(w.sup_w <= s.sup_w + 3.0 * s.stderr, "{w:?} vs {s:?}");
    }
}

#[test]
fn grid_comparison_is_reproducible() {
    let base = ExperimentSpec::oracle("const-ou", None, 2.0, vec![8, 16, 32, 64]);
    let a = compare_grids(&base, 2.0).unwrap();
    let b = compare_grids(&base, 2.0).unwrap();
    assert_eq!(a.uniform, b.uniform);
    assert_eq!(a.power, b.power);
    assert!(!a.power_bound.with_log || a.power_bound.gamma != 1.0);
    for r in &a.lag_integrals {
        assert_eq!(r.uniform, TimeGrid::uniform(1.0, r.n).unwrap().step_lag_integral());
        assert!(r.power > 0.0);
    }
    let mut csv = Vec::new();
    a.write_lag_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
}

#[test]
fn gronwall_driver_tracks_lag_integral() {
    let ratios: Vec<f64> = (4..=10)
        .map(|k| {
            let n = 1usize << k;
            TimeGrid::uniform(1.0, n).unwrap().step_lag_integral() / gronwall_driver(n, 1.0)
        })
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0_f64), |(l, h), &r| (l.min(r), h.max(r)));
    assert!(hi / lo < 2.0, "{ratios:?}");
}

#[test]
fn curve_csv_has_full_precision() {
    let exp = ExperimentSpec::oracle("const-ou", None, 2.0, vec![8, 16]);
    let c = run_marginal_sweep(&exp).unwrap();
    let mut buf = Vec::new();
    c.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1].parse::<f64>().unwrap(), c.points[0].sup_w);
}
