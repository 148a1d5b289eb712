//! The reduced problem: eliminate `c = Φ(a)†y` and work with
//! `r₂(a) = P⊥(a) y` alone.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::{factorize_least_squares, LeastSquaresFactorization, DEFAULT_RANK_TOL};
use crate::model::{check_params, Dataset, SeparableModel};

/// Which approximation of `∂r₂/∂a` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JacobianVariant {
    /// Exact two-term derivative.
    GolubPereyra,
    /// Drops the transposed term.
    Kaufman,
    /// Drops the projector as well.
    Ruano,
}

impl JacobianVariant {
    pub const ALL: [JacobianVariant; 3] = [Self::GolubPereyra, Self::Kaufman, Self::Ruano];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::GolubPereyra => "gp",
            Self::Kaufman => "kaufman",
            Self::Ruano => "ruano",
        }
    }
}

impl fmt::Display for JacobianVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JacobianVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gp" | "golub-pereyra" | "golubpereyra" => Ok(Self::GolubPereyra),
            "kaufman" | "kau" => Ok(Self::Kaufman),
            "ruano" => Ok(Self::Ruano),
            other => Err(Error::InvalidInput(format!("unknown Jacobian variant '{other}'"))),
        }
    }
}

/// Everything computed at one point `a` of the reduced problem.
#[derive(Debug, Clone)]
pub struct ReducedEvaluation {
    pub a: DVector<f64>,
    /// `Φ† y`.
    pub c: DVector<f64>,
    /// `P⊥ y`.
    pub r2: DVector<f64>,
    /// `½‖r₂‖²`.
    pub objective: f64,
    pub factorization: LeastSquaresFactorization,
}

impl ReducedEvaluation {
    /// Set when the rank cutoff dropped singular values of `Φ(a)`.
    pub fn rank_deficient(&self) -> bool {
        self.factorization.is_rank_deficient()
    }
}

/// A model paired with its data, with the response aligned to the rows of `Φ`.
#[derive(Debug, Clone)]
pub struct SeparableProblem<'a> {
    model: &'a dyn SeparableModel,
    data: &'a Dataset,
    y: DVector<f64>,
    rank_tol: f64,
}

impl<'a> SeparableProblem<'a> {
    pub fn new(model: &'a dyn SeparableModel, data: &'a Dataset) -> Result<Self> {
        let y = model.response(data)?;
        Ok(Self {
            model,
            data,
            y,
            rank_tol: DEFAULT_RANK_TOL,
        })
    }

    pub fn with_rank_tol(mut self, rank_tol: f64) -> Self {
        self.rank_tol = rank_tol;
        self
    }

    pub fn model(&self) -> &'a dyn SeparableModel {
        self.model
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    /// Targets aligned with the rows of `Φ`.
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn n_linear(&self) -> usize {
        self.model.n_linear()
    }

    pub fn n_nonlinear(&self) -> usize {
        self.model.n_nonlinear()
    }

    /// Fails with the first coordinate of `a` outside the model's starting box.
    pub fn check_bounds(&self, a: &DVector<f64>) -> Result<()> {
        check_len("nonlinear parameters", self.n_nonlinear(), a.len())?;
        crate::linalg::ensure_finite_vector("nonlinear parameters", a)?;
        for (index, (&value, (lo, hi))) in a.iter().zip(self.model.bounds()).enumerate() {
            if !(value >= lo && value <= hi) {
                return Err(Error::Domain {
                    what: "nonlinear parameter bounds",
                    index,
                    value,
                });
            }
        }
        Ok(())
    }

    pub fn basis(&self, a: &DVector<f64>) -> Result<DMatrix<f64>> {
        let phi = self.model.basis(a, self.data)?;
        check_len("basis rows", self.y.len(), phi.nrows())?;
        check_len("basis columns", self.n_linear(), phi.ncols())?;
        Ok(phi)
    }

    pub fn basis_derivatives(&self, a: &DVector<f64>) -> Result<Vec<DMatrix<f64>>> {
        let d = self.model.basis_derivatives(a, self.data)?;
        check_len("basis derivative count", self.n_nonlinear(), d.len())?;
        for dk in &d {
            check_len("basis derivative rows", self.y.len(), dk.nrows())?;
            check_len("basis derivative columns", self.n_linear(), dk.ncols())?;
        }
        Ok(d)
    }

    /// `y − Φ(a) c`.
    pub fn full_residual(&self, a: &DVector<f64>, c: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("linear parameters", self.n_linear(), c.len())?;
        Ok(&self.y - self.basis(a)? * c)
    }

    /// `½‖y − Φ(a) c‖²`, the objective before elimination.
    pub fn original_objective(&self, a: &DVector<f64>, c: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * self.full_residual(a, c)?.norm_squared())
    }

    /// Eliminates `c` at `a`.
    pub fn evaluate_reduced(&self, a: &DVector<f64>) -> Result<ReducedEvaluation> {
        check_params(self.model, a)?;
        let phi = self.basis(a)?;
        let factorization = factorize_least_squares(&phi, self.rank_tol)?;
        let c = factorization.apply_pseudo_inverse(&self.y)?;
        let r2 = factorization.apply_projector_complement(&self.y)?;
        let objective = 0.5 * r2.norm_squared();
        Ok(ReducedEvaluation {
            a: a.clone(),
            c,
            r2,
            objective,
            factorization,
        })
    }

    /// Jacobian of `r₂` at `eval.a`.
    pub fn jacobian(&self, eval: &ReducedEvaluation, variant: JacobianVariant) -> Result<DMatrix<f64>> {
        let derivs = self.basis_derivatives(&eval.a)?;
        jacobian_from_derivatives(eval, &derivs, variant)
    }
}

/// Jacobian of `r₂` from precomputed `∂Φ/∂aₖ`. Column `k` is
///
/// * Golub–Pereyra: `−P⊥Φₖ c − (Φ†)ᵀ Φₖᵀ r₂`
/// * Kaufman: `−P⊥Φₖ c`
/// * Ruano: `−Φₖ c`
pub fn jacobian_from_derivatives(
    eval: &ReducedEvaluation,
    derivs: &[DMatrix<f64>],
    variant: JacobianVariant,
) -> Result<DMatrix<f64>> {
    let fac = &eval.factorization;
    let m = fac.nrows();
    let mut jac = DMatrix::zeros(m, derivs.len());
    for (k, dk) in derivs.iter().enumerate() {
        if dk.shape() != (m, fac.ncols()) {
            return Err(Error::DimensionMismatch {
                what: "basis derivative shape",
                expected: m * fac.ncols(),
                found: dk.nrows() * dk.ncols(),
            });
        }
        let b = dk * &eval.c;
        let col = match variant {
            JacobianVariant::Ruano => -b,
            JacobianVariant::Kaufman => -fac.apply_projector_complement(&b)?,
            JacobianVariant::GolubPereyra => {
                let w = dk.tr_mul(&eval.r2);
                -fac.apply_projector_complement(&b)? - fac.apply_pseudo_inverse_transpose(&w)?
            }
        };
        jac.set_column(k, &col);
    }
    Ok(jac)
}

/// `Jᵀ r₂`, the gradient of `½‖r₂‖²`.
pub fn reduced_gradient(eval: &ReducedEvaluation, jac: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_len("Jacobian rows", eval.r2.len(), jac.nrows())?;
    Ok(jac.tr_mul(&eval.r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::finite_difference_jacobian;
    use crate::model::{
        complex_exponential_inputs, complex_exponential_model, complex_exponential_truth, generate_synthetic,
        COMPLEX_EXP_NONLINEAR,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn complex_data(sigma: f64, seed: u64) -> Dataset {
        generate_synthetic(
            &complex_exponential_model(),
            &complex_exponential_truth(sigma),
            &complex_exponential_inputs(),
            seed,
        )
        .unwrap()
    }

    fn random_a(rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(4, |i, _| COMPLEX_EXP_NONLINEAR[i] * rng.random_range(0.5..1.5))
    }

    #[test]
    fn zero_noise_truth_has_zero_objective() {
        let data = complex_data(0.0, 0);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let eval = problem
            .evaluate_reduced(&DVector::from_row_slice(&COMPLEX_EXP_NONLINEAR))
            .unwrap();
        assert!(eval.objective <= 1e-16 * data.targets().norm_squared());
    }

    #[test]
    fn noisy_truth_objective_is_projected_noise_energy() {
        let data = complex_data(0.1, 5);
        let model = complex_exponential_model();
        let truth = complex_exponential_truth(0.1);
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let eval = problem.evaluate_reduced(&truth.a_true).unwrap();
        let oracle = problem.original_objective(&truth.a_true, &truth.c_true).unwrap();
        // Elimination can only lower it, and only by the few noise directions in range(Φ).
        assert!(eval.objective <= oracle);
        assert!(eval.objective >= 0.9 * oracle);
    }

    #[test]
    fn reduced_equals_original_at_eliminated_c() {
        let data = complex_data(0.1, 1);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let eval = problem.evaluate_reduced(&random_a(&mut rng)).unwrap();
            let original = problem.original_objective(&eval.a, &eval.c).unwrap();
            assert!((original - eval.objective).abs() <= 1e-12 * eval.objective);
            let direct = problem.full_residual(&eval.a, &eval.c).unwrap();
            assert!((&direct - &eval.r2).norm() <= 1e-12 * problem.y().norm());
        }
    }

    #[test]
    fn gp_jacobian_matches_finite_differences() {
        let data = complex_data(0.1, 3);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let a = random_a(&mut rng);
            let eval = problem.evaluate_reduced(&a).unwrap();
            let jac = problem.jacobian(&eval, JacobianVariant::GolubPereyra).unwrap();
            let fd = finite_difference_jacobian(|x| Ok(problem.evaluate_reduced(x)?.r2), &a, 1e-6 * a.amax()).unwrap();
            for k in 0..4 {
                let err = (jac.column(k) - fd.column(k)).norm() / jac.column(k).norm();
                assert!(err < 1e-5, "column {k}: {err}");
            }
        }
    }

    #[test]
    fn variants_coincide_for_zero_residual() {
        let data = complex_data(0.0, 0);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let eval = problem
            .evaluate_reduced(&DVector::from_row_slice(&COMPLEX_EXP_NONLINEAR))
            .unwrap();
        let gp = problem.jacobian(&eval, JacobianVariant::GolubPereyra).unwrap();
        let kau = problem.jacobian(&eval, JacobianVariant::Kaufman).unwrap();
        assert!((&gp - &kau).norm() <= 1e-12 * gp.norm());
    }

    #[test]
    fn gp_minus_kaufman_is_the_dropped_term() {
        let data = complex_data(0.3, 8);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_a(&mut rng);
        let eval = problem.evaluate_reduced(&a).unwrap();
        let derivs = problem.basis_derivatives(&a).unwrap();
        let gp = jacobian_from_derivatives(&eval, &derivs, JacobianVariant::GolubPereyra).unwrap();
        let kau = jacobian_from_derivatives(&eval, &derivs, JacobianVariant::Kaufman).unwrap();
        let pinv = eval.factorization.pseudo_inverse_matrix();
        for (k, dk) in derivs.iter().enumerate() {
            let dropped = -(pinv.transpose() * dk.transpose() * &eval.r2);
            let diff = gp.column(k) - kau.column(k);
            assert!((diff - &dropped).norm() <= 1e-12 * gp.column(k).norm().max(dropped.norm()));
        }
    }

    #[test]
    fn ruano_omits_projector() {
        let data = complex_data(0.1, 2);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let a = DVector::from_row_slice(&[9.0, 14.0, 33.0, 7.0]);
        let eval = problem.evaluate_reduced(&a).unwrap();
        let derivs = problem.basis_derivatives(&a).unwrap();
        let ruano = jacobian_from_derivatives(&eval, &derivs, JacobianVariant::Ruano).unwrap();
        for (k, dk) in derivs.iter().enumerate() {
            assert_eq!(ruano.column(k).into_owned(), -(dk * &eval.c));
        }
    }

    #[test]
    fn gradients_agree_and_match_scalar_differences() {
        let data = complex_data(0.2, 6);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let a = random_a(&mut rng);
            let eval = problem.evaluate_reduced(&a).unwrap();
            let g_gp =
                reduced_gradient(&eval, &problem.jacobian(&eval, JacobianVariant::GolubPereyra).unwrap()).unwrap();
            let g_kau = reduced_gradient(&eval, &problem.jacobian(&eval, JacobianVariant::Kaufman).unwrap()).unwrap();
            assert!((&g_gp - &g_kau).norm() <= 1e-10 * (1.0 + g_gp.norm()));

            let fd = finite_difference_jacobian(
                |x| Ok(DVector::from_element(1, problem.evaluate_reduced(x)?.objective)),
                &a,
                1e-6 * a.amax(),
            )
            .unwrap();
            let fd = fd.row(0).transpose();
            assert!((&fd - &g_gp).norm() <= 1e-5 * g_gp.norm());
        }
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let data = complex_data(0.0, 0);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let eval = problem
            .evaluate_reduced(&DVector::from_row_slice(&COMPLEX_EXP_NONLINEAR))
            .unwrap();
        let g = reduced_gradient(&eval, &problem.jacobian(&eval, JacobianVariant::GolubPereyra).unwrap()).unwrap();
        assert!(g.norm() < 1e-12);
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let data = complex_data(0.0, 0);
        let model = complex_exponential_model();
        let problem = SeparableProblem::new(&model, &data).unwrap();
        let eval = problem
            .evaluate_reduced(&DVector::from_row_slice(&COMPLEX_EXP_NONLINEAR))
            .unwrap();
        assert!(reduced_gradient(&eval, &DMatrix::zeros(3, 4)).is_err());
        assert!(jacobian_from_derivatives(&eval, &[DMatrix::zeros(200, 2)], JacobianVariant::Kaufman).is_err());
        assert!(problem.evaluate_reduced(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn variant_names_round_trip() {
        for v in JacobianVariant::ALL {
            assert_eq!(v.as_str().parse::<JacobianVariant>().unwrap(), v);
        }
        assert!("newton".parse::<JacobianVariant>().is_err());
    }
}
