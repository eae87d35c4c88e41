use lpcrit::critical::is_critical;
use lpcrit::scalar::{scalar_objective, GridSpec};
use lpcrit::{
    brute_force_global_q, enumerate_orthogonal_critical_points, lambda_bar, scalar_critical_points, Branch,
    ProblemInstance, Tolerances,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn roots_solve_the_scalar_condition(t in -3.0f64..3.0, frac in 0.01f64..1.5, p in 0.1f64..0.9) {
        prop_assume!(t.abs() > 1e-3);
        let lb = lambda_bar(t, p);
        let lambda = frac * lb;
        let set = scalar_critical_points(t, lambda, p);
        if frac < 0.999 {
            prop_assert_eq!(set.roots.len(), 2);
        } else if frac > 1.001 {
            prop_assert_eq!(set.roots.len(), 0);
        }
        for r in &set.roots {
            prop_assert!(r.value.signum() == t.signum());
            let resid = r.value - t + lambda * r.value.signum() * r.value.abs().powf(p - 1.0);
            prop_assert!(resid.abs() < 1e-10 * (1.0 + t.abs()), "residual {resid:e}");
        }
        if let (Some(a), Some(b)) = (set.root(Branch::A), set.root(Branch::B)) {
            prop_assert!(a.abs() > b.abs());
        }
    }

    #[test]
    fn enumerated_points_are_critical(
        t in prop::collection::vec(0.2f64..2.5, 2),
        neg in prop::collection::vec(any::<bool>(), 2),
        frac in 0.05f64..0.95,
    ) {
        let b: Vec<f64> = t.iter().zip(&neg).map(|(&m, &n)| if n { -m } else { m }).collect();
        let inst = ProblemInstance::from_gram(DMatrix::identity(2, 2), DVector::from_vec(b.clone()), 0.5, 0.0).unwrap();
        let lambda = frac * b.iter().map(|&v| lambda_bar(v, 0.5)).fold(f64::INFINITY, f64::min);
        let tol = Tolerances::default();
        let pts = enumerate_orthogonal_critical_points(&inst, lambda, &tol).unwrap();
        prop_assert_eq!(pts.len(), 9);
        for pt in pts {
            prop_assert!(is_critical(&inst, &DVector::from_vec(pt.beta.clone()), lambda, &tol), "{:?}", pt);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn one_dimensional_oracle_matches_the_closed_form(t in 0.3f64..3.0, frac in 0.05f64..1.5) {
        let inst = ProblemInstance::from_gram(DMatrix::identity(1, 1), DVector::from_vec(vec![t]), 0.5, 0.0).unwrap();
        let lambda = frac * lambda_bar(t, 0.5);
        let g = brute_force_global_q(&inst, lambda, &GridSpec::default()).unwrap();
        let best = scalar_critical_points(t, lambda, 0.5)
            .root(Branch::A)
            .filter(|&a| scalar_objective(a, t, lambda, 0.5) < scalar_objective(0.0, t, lambda, 0.5))
            .unwrap_or(0.0);
        prop_assert!((g.beta[0] - best).abs() < 1e-8, "oracle {} vs {}", g.beta[0], best);
    }
}
