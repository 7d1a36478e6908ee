use ewlab::catalog;
use ewlab::euler_sim::simulate_euler;
use ewlab::gaussian_oracle::{euler_marginal_law, gaussian_w2, GaussianLaw};
use ewlab::matrix_lemma::{check_inequality, lemma_lhs, lemma_lhs_direct, lemma_lhs_spectral, random_instance, DEFAULT_TOLERANCE};
use ewlab::rng::seeded;
use ewlab::wasserstein::{w_rho_1d, w_rho_exact, EmpiricalMeasure};
use ewlab::TimeGrid;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (a.abs() + b.abs() + 1.0)
}

fn law_2d(m: [f64; 2], l: [f64; 3]) -> GaussianLaw {
    let f = DMatrix::from_row_slice(2, 2, &[l[0], 0.0, l[1], l[2]]);
    let cov = &f * f.transpose() + DMatrix::identity(2, 2) * 0.05;
    GaussianLaw::new(DVector::from_column_slice(&m), cov).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn trace_inequality_holds(seed in any::<u64>(), d in 1usize..=4, rho in 1.05f64..8.0, floor in 0.05f64..2.0) {
        let inst = random_instance(&mut seeded(seed), d, rho, floor).unwrap();
        let check = check_inequality(&inst, DEFAULT_TOLERANCE).unwrap();
        prop_assert!(check.holds, "lhs {} rhs {}", check.lhs, check.rhs);
    }

    #[test]
    fn lhs_routes_agree(seed in any::<u64>(), d in 1usize..=4, rho in 1.05f64..8.0) {
        let inst = random_instance(&mut seeded(seed), d, rho, 0.5).unwrap();
        let f = lemma_lhs(&inst).unwrap();
        prop_assert!(close(f, lemma_lhs_direct(&inst).unwrap(), 1e-7));
        prop_assert!(close(f, lemma_lhs_spectral(&inst).unwrap(), 1e-7));
    }

    #[test]
    fn lhs_invariant_under_mirror(seed in any::<u64>(), d in 1usize..=4, rho in 1.05f64..8.0) {
        let inst = random_instance(&mut seeded(seed), d, rho, 0.5).unwrap();
        let mirrored = inst.mirrored().unwrap();
        prop_assert!(close(lemma_lhs(&inst).unwrap(), lemma_lhs(&mirrored).unwrap(), 1e-7));
    }

    #[test]
    fn exact_ot_symmetric_and_matches_sorting(xs in prop::collection::vec(-5.0f64..5.0, 2..40), shift in -3.0f64..3.0, rho in 1.0f64..4.0) {
        let ys: Vec<f64> = xs.iter().rev().map(|x| 0.5 * x * x + shift).collect();
        let a = EmpiricalMeasure::from_scalars(&xs).unwrap();
        let b = EmpiricalMeasure::from_scalars(&ys).unwrap();
        let (ab, _) = w_rho_exact(&a, &b, rho).unwrap();
        let (ba, _) = w_rho_exact(&b, &a, rho).unwrap();
        prop_assert!(close(ab, ba, 1e-9));
        prop_assert!(close(ab, w_rho_1d(&xs, &ys, rho).unwrap(), 1e-9));
        let (aa, _) = w_rho_exact(&a, &a, rho).unwrap();
        prop_assert!(aa.abs() < 1e-12);
    }

    #[test]
    fn exact_ot_common_translation(pts in prop::collection::vec(-3.0f64..3.0, 8..40), sx in -2.0f64..2.0, sy in -2.0f64..2.0) {
        let half = pts.len() / 2 * 2;
        let a = EmpiricalMeasure::new(2, pts[..half].to_vec()).unwrap();
        let b = EmpiricalMeasure::new(2, pts[..half].iter().map(|v| v.sin()).collect()).unwrap();
        let (base, _) = w_rho_exact(&a, &b, 2.0).unwrap();
        let (moved, _) = w_rho_exact(&a.translated(&[sx, sy]).unwrap(), &b.translated(&[sx, sy]).unwrap(), 2.0).unwrap();
        prop_assert!(close(base, moved, 1e-9));
    }

    #[test]
    fn bures_metric_axioms(m1 in prop::array::uniform2(-2.0f64..2.0), l1 in prop::array::uniform3(-2.0f64..2.0),
                           m2 in prop::array::uniform2(-2.0f64..2.0), l2 in prop::array::uniform3(-2.0f64..2.0),
                           m3 in prop::array::uniform2(-2.0f64..2.0), l3 in prop::array::uniform3(-2.0f64..2.0)) {
        let (p, q, r) = (law_2d(m1, l1), law_2d(m2, l2), law_2d(m3, l3));
        let pq = gaussian_w2(&p, &q).unwrap();
        prop_assert!(pq >= 0.0);
        prop_assert!(close(pq, gaussian_w2(&q, &p).unwrap(), 1e-8));
        prop_assert!(pq <= gaussian_w2(&p, &r).unwrap() + gaussian_w2(&r, &q).unwrap() + 1e-8);
        prop_assert!(gaussian_w2(&p, &p).unwrap() == 0.0);
    }

    #[test]
    fn paths_do_not_depend_on_batch_size(seed in any::<u64>(), steps in 4usize..64, extra in 1usize..20) {
        let spec = catalog::tanh_2d(0.5);
        let grid = TimeGrid::uniform(1.0, steps).unwrap();
        let small = simulate_euler(&spec, &grid, &[0.5, 1.0], 5, seed).unwrap();
        let large = simulate_euler(&spec, &grid, &[0.5, 1.0], 5 + extra, seed).unwrap();
        for (s, l) in small.states.iter().zip(&large.states) {
            prop_assert_eq!(s, &l.rows(0, 5).into_owned());
        }
    }

    #[test]
    fn euler_law_is_gaussian_with_psd_covariance(gamma in 0.1f64..1.0, steps in 1usize..64, t in 0.0f64..=1.0) {
        let grid = TimeGrid::uniform(1.0, steps).unwrap();
        let law = euler_marginal_law(&catalog::holder_ou(gamma), &grid, t).unwrap();
        prop_assert!(ewlab::linalg::min_eigenvalue(&law.cov) >= -1e-12);
    }
}
