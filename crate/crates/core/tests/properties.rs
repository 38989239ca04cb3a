use proptest::prelude::*;

use quasimargin::collapse::nc_closed_form;
use quasimargin::geometry::{normalize, psi_values, seminorm_max_sq, seminorm_sq};
use quasimargin::linalg::{log_sum_exp, norm, norm_sq, softmax_into};
use quasimargin::quasimodel::{LambdaSpec, ParamVec};
use quasimargin::twoballs::{analytic_solution, point_seed, robustness, BallProblem};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn lambda_theta() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..7).prop_flat_map(|m| {
        (
            prop::collection::vec(0.05f64..2.0, m),
            prop::collection::vec(-3.0f64..3.0, m),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn psi_is_a_group_action((l, t) in lambda_theta(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let two = psi_values(&l, &psi_values(&l, &t, b), a);
        let one = psi_values(&l, &t, a + b);
        for (x, y) in two.iter().zip(&one) {
            prop_assert!(close(*x, *y, 1e-9));
        }
        let id = psi_values(&l, &t, 0.0);
        prop_assert_eq!(id, t);
    }

    #[test]
    fn seminorm_bounds((l, t) in lambda_theta()) {
        let lambda = LambdaSpec::new(l.clone()).unwrap();
        let lt: Vec<f64> = l.iter().zip(&t).map(|(a, b)| a * b).collect();
        let s = seminorm_sq(&lambda, &t).unwrap();
        prop_assert!(norm_sq(&lt) <= lambda.lambda_max() * s * (1.0 + 1e-9));
        let smax = seminorm_max_sq(&lambda, &t).unwrap();
        prop_assert!(smax <= s * (1.0 + 1e-12));
    }

    #[test]
    fn seminorm_scales_along_orbits((l, t) in lambda_theta(), a in -2.0f64..2.0) {
        // each term lambda theta^2 picks up e^{2 alpha lambda}
        let lambda = LambdaSpec::new(l.clone()).unwrap();
        let moved = seminorm_sq(&lambda, &psi_values(&l, &t, a)).unwrap();
        let by_hand: f64 = l.iter().zip(&t).map(|(li, ti)| li * ti * ti * (2.0 * a * li).exp()).sum();
        prop_assert!(close(moved, by_hand, 1e-12));
    }

    #[test]
    fn normalization_round_trip_and_idempotence((l, t) in lambda_theta()) {
        prop_assume!(t.iter().any(|v| v.abs() > 1e-6));
        let lambda = LambdaSpec::new(l.clone()).unwrap();
        let np = normalize(&lambda, &ParamVec::flat(t.clone())).unwrap();
        prop_assert!(close(seminorm_sq(&lambda, &np.theta_hat).unwrap(), 1.0, 1e-9));
        for (x, y) in psi_values(&l, &np.theta_hat, np.tau).iter().zip(&t) {
            prop_assert!(close(*x, *y, 1e-9));
        }
        let again = normalize(&lambda, &np.theta_hat).unwrap();
        prop_assert!(again.tau.abs() <= 1e-9);
        for (x, y) in again.theta_hat.iter().zip(np.theta_hat.iter()) {
            prop_assert!(close(*x, *y, 1e-9));
        }
    }

    #[test]
    fn normalization_is_orbit_invariant((l, t) in lambda_theta(), a in -4.0f64..4.0) {
        prop_assume!(t.iter().any(|v| v.abs() > 1e-6));
        let lambda = LambdaSpec::new(l.clone()).unwrap();
        let p = normalize(&lambda, &ParamVec::flat(t.clone())).unwrap();
        let q = normalize(&lambda, &ParamVec::flat(psi_values(&l, &t, a))).unwrap();
        prop_assert!(close(q.tau, p.tau + a, 1e-9));
        for (x, y) in p.theta_hat.iter().zip(q.theta_hat.iter()) {
            prop_assert!(close(*x, *y, 1e-9));
        }
    }

    #[test]
    fn log_sum_exp_is_shift_equivariant(v in prop::collection::vec(-50.0f64..50.0, 1..10), c in -500.0f64..500.0) {
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        prop_assert!(close(log_sum_exp(&shifted), log_sum_exp(&v) + c, 1e-12));
        let mut p = vec![0.0; v.len()];
        softmax_into(&shifted, &mut p);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quasi_hom_is_never_more_robust(r in 0.501f64..0.999) {
        let p = BallProblem::with_default_mu(r).unwrap();
        let a = analytic_solution(&p);
        let q = a.quasi_hom.unwrap();
        prop_assert!(q.robustness <= a.l_hom + 1e-12);
        prop_assert!(q.robustness > 0.0);
        prop_assert!(close(robustness(&q.w, &p).unwrap(), q.robustness, 1e-12));
    }

    #[test]
    fn robustness_is_scale_invariant(w in prop::collection::vec(-2.0f64..2.0, 3), s in 0.01f64..100.0) {
        prop_assume!(norm(&w) > 1e-3);
        let p = BallProblem::with_default_mu(0.7).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| v * s).collect();
        prop_assert!(close(robustness(&w, &p).unwrap(), robustness(&scaled, &p).unwrap(), 1e-12));
    }

    #[test]
    fn simplex_closed_form(c in 2usize..8, extra in 0usize..3) {
        let cf = nc_closed_form(c, c + extra).unwrap();
        let k = c as f64;
        prop_assert!(close(cf.objective(), (k - 1.0) * (k - 1.0) / k, 1e-12));
        for a in 0..c {
            prop_assert!(close(norm(cf.weight(a)), (k - 1.0) / k, 1e-12));
            prop_assert!(close(norm(&cf.feature(a)), 1.0, 1e-12));
            prop_assert!(cf.feature(a).iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn point_seeds_are_pure(base in any::<u64>(), i in 0usize..1000) {
        prop_assert_eq!(point_seed(base, i), point_seed(base, i));
        prop_assert_ne!(point_seed(base, i), point_seed(base, i + 1));
    }
}
