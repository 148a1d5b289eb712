use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use vproj_core::model::{complex_exponential_inputs, complex_exponential_model, Dataset};
use vproj_core::reduced::{JacobianVariant, SeparableProblem};

/// Rates in a box where the complex exponential basis stays well conditioned.
fn rates() -> impl Strategy<Value = Vec<f64>> {
    (2.0..6.0f64, 8.0..20.0f64, 20.0..40.0f64, 4.0..12.0f64).prop_map(|(a, b, c, d)| vec![a, b, c, d])
}

fn targets() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 200)
}

fn dataset(y: Vec<f64>) -> Dataset {
    let x = complex_exponential_inputs();
    let n = x.nrows();
    Dataset::tabular(x, DVector::from_vec(y[..n].to_vec())).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linear_parameters_match_an_svd_least_squares_solve(a in rates(), y in targets()) {
        let data = dataset(y);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let a = DVector::from_vec(a);
        let eval = problem.evaluate_reduced(&a).unwrap();

        let phi = problem.basis(&a).unwrap();
        let oracle = phi.clone().svd(true, true).solve(problem.y(), 1e-14).unwrap();
        let scale = 1.0 + oracle.norm();
        prop_assert!((&eval.c - &oracle).norm() <= 1e-8 * scale);

        // The residual is orthogonal to every basis column.
        let leak = phi.tr_mul(&eval.r2).amax();
        prop_assert!(leak <= 1e-10 * (1.0 + phi.norm() * problem.y().norm()));
        prop_assert!((eval.objective - 0.5 * eval.r2.norm_squared()).abs() <= 1e-14 * (1.0 + eval.objective));
    }

    #[test]
    fn gauss_newton_gradients_agree_across_exact_and_kaufman_forms(a in rates(), y in targets()) {
        let data = dataset(y);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let eval = problem.evaluate_reduced(&DVector::from_vec(a)).unwrap();
        let gp = problem.jacobian(&eval, JacobianVariant::GolubPereyra).unwrap();
        let kau = problem.jacobian(&eval, JacobianVariant::Kaufman).unwrap();
        let g_gp = gp.tr_mul(&eval.r2);
        let g_kau = kau.tr_mul(&eval.r2);
        prop_assert!((&g_gp - &g_kau).norm() <= 1e-10 * (1.0 + g_gp.norm()));
    }

    #[test]
    fn reduced_objective_never_exceeds_half_the_target_energy(a in rates(), y in targets()) {
        let data = dataset(y);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let eval = problem.evaluate_reduced(&DVector::from_vec(a)).unwrap();
        prop_assert!(eval.objective >= 0.0);
        prop_assert!(eval.objective <= 0.5 * problem.y().norm_squared() * (1.0 + 1e-12));
    }

    #[test]
    fn targets_in_the_span_leave_no_residual(a in rates(), c in prop::collection::vec(-2.0..2.0f64, 3)) {
        let model = complex_exponential_model();
        let skeleton = dataset(vec![0.0; 200]);
        let a = DVector::from_vec(a);
        let problem = SeparableProblem::new(&model, &skeleton).unwrap();
        let phi: DMatrix<f64> = problem.basis(&a).unwrap();
        let y = &phi * DVector::from_vec(c);
        let data = Dataset::tabular(complex_exponential_inputs(), y.clone()).unwrap();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let eval = problem.evaluate_reduced(&a).unwrap();
        prop_assert!(eval.r2.norm() <= 1e-10 * (1.0 + y.norm()));
    }
}
