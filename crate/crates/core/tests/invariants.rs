use nalgebra::DMatrix;
use proptest::prelude::*;

use morison_greybox::coverage::{compute_coverage, radial_boundary, CoverageOptions};
use morison_greybox::gp::{gp_fit, gp_predict, GpHyperparams};
use morison_greybox::qpso::{qpso_minimize, QpsoConfig};
use morison_greybox::seed::derive_seed;
use morison_greybox::whitebox::{gibbs_fit, predict_whitebox, NigPrior};

fn cloud(max: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0).prop_map(|(x, y)| [x, y]), 8..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gp_variance_between_noise_and_prior(
        xs in prop::collection::vec(-3.0f64..3.0, 2..12),
        ys in prop::collection::vec(-3.0f64..3.0, 12),
        q in -4.0f64..4.0,
        sf2 in 0.1f64..4.0,
        ls in 0.2f64..3.0,
        sn2 in 1e-3f64..0.5,
    ) {
        let n = xs.len();
        let x = DMatrix::from_column_slice(n, 1, &xs);
        let m = gp_fit(&x, &ys[..n], GpHyperparams::new(sf2, vec![ls], sn2).unwrap()).unwrap();
        let scale2 = m.standardization().target_scale.powi(2);
        let star = DMatrix::from_row_slice(1, 1, &[q]);
        let latent = gp_predict(&m, &star, false).unwrap().variance[0];
        let noisy = gp_predict(&m, &star, true).unwrap().variance[0];
        prop_assert!(latent >= 0.0);
        prop_assert!(latent <= sf2 * scale2 * (1.0 + 1e-9));
        prop_assert!((noisy - latent - sn2 * scale2).abs() <= 1e-9 * noisy.max(1.0));
    }

    #[test]
    fn coverage_is_a_percentage(train in cloud(60), test in cloud(60)) {
        let opts = CoverageOptions { grid_resolution: 64, ..Default::default() };
        if let Ok(c) = compute_coverage(&train, &train, &test, &opts) {
            prop_assert!((0.0..=100.0).contains(&c.coverage_percent));
            prop_assert!(c.area_overlap <= c.area_test * (1.0 + 1e-9));
        }
    }

    #[test]
    fn boundary_radius_bounded(pts in cloud(80), angle in -7.0f64..7.0) {
        if let Ok(b) = radial_boundary(&pts, 36) {
            let r = b.radius_at(angle);
            prop_assert!(r >= 0.0 && r <= b.max_radius() * (1.0 + 1e-12));
            prop_assert!(b.polygon_area() >= 0.0);
        }
    }

    #[test]
    fn qpso_stays_in_bounds(seed in 0u64..1000, lo in -5.0f64..0.0, width in 0.5f64..5.0) {
        let mut cfg = QpsoConfig::new(3, 12, 1e-6).with_uniform_bounds(3, lo, lo + width);
        cfg.max_iters = 30;
        cfg.n_repeat_runs = 2;
        cfg.seed = seed;
        let f = |p: &[f64]| p.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>();
        let r = qpso_minimize(f, &cfg).unwrap();
        prop_assert!(r.best_position.iter().all(|v| *v >= lo && *v <= lo + width));
        prop_assert_eq!(r.best_cost, f(&r.best_position));
        prop_assert!(r.runs.iter().all(|run| run.cost >= r.best_cost));
        prop_assert!(r.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn derived_seeds_are_stable_and_distinct(master in any::<u64>(), a in "[a-z]{1,8}", b in "[a-z]{1,8}") {
        prop_assert_eq!(derive_seed(master, &a), derive_seed(master, &a));
        if a != b {
            prop_assert_ne!(derive_seed(master, &a), derive_seed(master, &b));
        }
    }

    #[test]
    fn whitebox_noise_widens_intervals(u in prop::collection::vec(-1.0f64..1.0, 12), seed in 0u64..100) {
        let udot: Vec<f64> = u.iter().rev().cloned().collect();
        let f: Vec<f64> = u.iter().zip(&udot).map(|(a, b)| 100.0 * a * a.abs() + 200.0 * b).collect();
        let x = DMatrix::from_fn(12, 2, |i, j| if j == 0 { u[i] * u[i].abs() } else { udot[i] });
        let prior = NigPrior { m_beta: [100.0, 200.0], sigma_beta_sq: [[100.0, 0.0], [0.0, 100.0]], a: 2.0, b: 1.0, fixed_noise_variance: None };
        let post = gibbs_fit(&x, &f, &prior, 200, 20, seed).unwrap();
        let latent = predict_whitebox(&post, &u, &udot, false).unwrap();
        let noisy = predict_whitebox(&post, &u, &udot, true).unwrap();
        for (a, b) in latent.variance.iter().zip(&noisy.variance) {
            prop_assert!(*a >= 0.0 && b >= a);
        }
        prop_assert_eq!(latent.mean, noisy.mean);
    }
}
